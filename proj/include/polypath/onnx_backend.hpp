#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/dnn.hpp>

#include "json.hpp"
#include "polypath/classify.hpp"
#include "polypath/error.hpp"

namespace polypath {

/// Input/output contract read from `<model>.json` next to the network file.
struct ModelSidecar {
  int side_px = 224;
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};
  /// "logits" (softmax applied here) or "probabilities".
  std::string output = "logits";
};

inline ModelSidecar read_model_sidecar(const std::filesystem::path& model_path) {
  auto p = model_path;
  p.replace_extension(".json");
  ModelSidecar s;
  std::ifstream in(p);
  if (!in) throw BackendFailure("missing model sidecar '" + p.string() + "'");
  try {
    nlohmann::json j;
    in >> j;
    s.side_px = j.value("side_px", s.side_px);
    if (j.contains("mean")) s.mean = j.at("mean").get<std::array<double, 3>>();
    if (j.contains("std")) s.std = j.at("std").get<std::array<double, 3>>();
    s.output = j.value("output", s.output);
  } catch (const nlohmann::json::exception& e) {
    throw BackendFailure("bad model sidecar '" + p.string() + "': " + e.what());
  }
  if (s.side_px < 1) throw BackendFailure("model sidecar: side_px must be >= 1");
  for (double v : s.std)
    if (!(v > 0.0)) throw BackendFailure("model sidecar: std entries must be > 0");
  if (s.output != "logits" && s.output != "probabilities")
    throw BackendFailure("model sidecar: output must be 'logits' or 'probabilities'");
  return s;
}

inline ProbVector softmax(std::span<const double> logits) {
  if (logits.size() != kNumLabels) throw BackendFailure("expected 5 outputs");
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::array<double, kNumLabels> e{};
  for (std::size_t i = 0; i < kNumLabels; ++i) e[i] = std::exp(logits[i] - hi);
  return ProbVector::normalized(e);
}

/// Network in ONNX format run through OpenCV's DNN module. Input is a
/// 1x3xSxS float tensor of RGB values scaled to [0,1] and normalized per
/// channel; output is five scores in label order. Not thread-safe: create one
/// instance per worker.
class OnnxClassifier final : public PatchClassifier {
public:
  explicit OnnxClassifier(const std::filesystem::path& model_path)
      : sidecar_(read_model_sidecar(model_path)) {
    try {
      net_ = cv::dnn::readNetFromONNX(model_path.string());
    } catch (const cv::Exception& e) {
      throw BackendFailure("cannot load model '" + model_path.string() + "': " + e.what());
    }
    if (net_.empty()) throw BackendFailure("cannot load model '" + model_path.string() + "'");
    net_.setPreferableBackend(cv::dnn::DNN_BACKEND_OPENCV);
    net_.setPreferableTarget(cv::dnn::DNN_TARGET_CPU);
  }

  int side_px() const override { return sidecar_.side_px; }
  const ModelSidecar& sidecar() const { return sidecar_; }

protected:
  ProbVector do_predict(const RgbImage& patch) const override {
    const int s = sidecar_.side_px;
    const int dims[] = {1, 3, s, s};
    cv::Mat blob(4, dims, CV_32F);
    float* data = blob.ptr<float>();
    const std::size_t plane = static_cast<std::size_t>(s) * static_cast<std::size_t>(s);
    const auto px = patch.pixels();
    for (std::size_t i = 0; i < plane; ++i) {
      const Rgb& p = px[i];
      data[i] = static_cast<float>((p.r / 255.0 - sidecar_.mean[0]) / sidecar_.std[0]);
      data[plane + i] = static_cast<float>((p.g / 255.0 - sidecar_.mean[1]) / sidecar_.std[1]);
      data[2 * plane + i] = static_cast<float>((p.b / 255.0 - sidecar_.mean[2]) / sidecar_.std[2]);
    }
    cv::Mat out;
    try {
      net_.setInput(blob);
      out = net_.forward();
    } catch (const cv::Exception& e) {
      throw BackendFailure(std::string("model inference failed: ") + e.what());
    }
    if (out.total() != kNumLabels) throw BackendFailure("model output arity is " + std::to_string(out.total()) + ", expected 5");
    cv::Mat flat = out.reshape(1, 1);
    flat.convertTo(flat, CV_64F);
    std::array<double, kNumLabels> v{};
    for (std::size_t i = 0; i < kNumLabels; ++i) v[i] = flat.at<double>(0, static_cast<int>(i));
    if (sidecar_.output == "logits") return softmax(v);
    for (double x : v)
      if (!(x >= 0.0) || !std::isfinite(x)) throw BackendFailure("model emitted invalid probabilities");
    return ProbVector::normalized(v);
  }

private:
  ModelSidecar sidecar_;
  mutable cv::dnn::Net net_;
};

} // namespace polypath
