#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "polypath/calibrate.hpp"
#include "polypath/classify.hpp"
#include "polypath/eval.hpp"
#include "polypath/infer.hpp"
#include "polypath/onnx_backend.hpp"
#include "polypath/raster_io.hpp"
#include "polypath/report.hpp"
#include "polypath/serialize.hpp"

namespace polypath {

// ---------------------------------------------------------------------------
// Manifest

struct ManifestRow {
  std::string slide_id;
  fs::path path;
  std::optional<Diagnosis> local_dx;
  std::optional<std::array<Diagnosis, kPanelSize>> rater_dx;
  std::optional<std::string> split;
};

struct Manifest {
  std::vector<ManifestRow> rows;

  bool has_raters() const {
    return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.rater_dx.has_value(); });
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ManifestError("unterminated quote in '" + line + "'");
  out.push_back(cur);
  return out;
}

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

} // namespace detail

/// Parses a manifest CSV. Required columns: slide_id, path. Optional:
/// local_dx, rater_dx_1..rater_dx_5 (all five or none), split. Relative
/// paths resolve against `base_dir`.
inline Manifest parse_manifest(std::istream& in, const fs::path& base_dir = {}) {
  std::string line;
  if (!std::getline(in, line)) throw ManifestError("manifest is empty (header row required)");
  auto header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto h = detail::trim(header[i]);
    if (!col.emplace(h, i).second) throw ManifestError("duplicate manifest column '" + h + "'");
  }
  for (const char* req : {"slide_id", "path"})
    if (!col.count(req)) throw ManifestError(std::string("manifest lacks required column '") + req + "'");
  int rater_cols = 0;
  for (std::size_t r = 1; r <= kPanelSize; ++r) rater_cols += col.count("rater_dx_" + std::to_string(r)) ? 1 : 0;
  if (rater_cols != 0 && rater_cols != static_cast<int>(kPanelSize))
    throw ManifestError("manifest must have all of rater_dx_1..rater_dx_5 or none");

  Manifest m;
  std::set<std::string> ids;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ManifestError("manifest line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                          " cells, header has " + std::to_string(header.size()));
    auto cell = [&](const std::string& c) { return detail::trim(cells[col.at(c)]); };
    auto dx = [&](const std::string& c) -> std::optional<Diagnosis> {
      const auto v = cell(c);
      if (v.empty()) return std::nullopt;
      auto d = parse_diagnosis(v);
      if (!d) throw ManifestError("manifest line " + std::to_string(lineno) + ": bad diagnosis '" + v + "' in " + c);
      return d;
    };

    ManifestRow row;
    row.slide_id = cell("slide_id");
    if (row.slide_id.empty()) throw ManifestError("manifest line " + std::to_string(lineno) + ": empty slide_id");
    if (!ids.insert(row.slide_id).second) throw ManifestError("duplicate slide_id '" + row.slide_id + "'");
    const auto p = cell("path");
    if (p.empty()) throw ManifestError("manifest line " + std::to_string(lineno) + ": empty path");
    row.path = fs::path(p).is_absolute() ? fs::path(p) : base_dir / p;
    if (col.count("local_dx")) row.local_dx = dx("local_dx");
    if (rater_cols) {
      std::array<std::optional<Diagnosis>, kPanelSize> v;
      int filled = 0;
      for (std::size_t r = 0; r < kPanelSize; ++r) {
        v[r] = dx("rater_dx_" + std::to_string(r + 1));
        filled += v[r] ? 1 : 0;
      }
      if (filled == static_cast<int>(kPanelSize)) {
        std::array<Diagnosis, kPanelSize> a{};
        for (std::size_t r = 0; r < kPanelSize; ++r) a[r] = *v[r];
        row.rater_dx = a;
      } else if (filled != 0) {
        throw ManifestError("manifest line " + std::to_string(lineno) + ": rater diagnoses must be all present or all empty");
      }
    }
    if (col.count("split")) {
      const auto s = cell("split");
      if (!s.empty()) {
        if (s != "train" && s != "val" && s != "test")
          throw ManifestError("manifest line " + std::to_string(lineno) + ": split must be train, val or test");
        row.split = s;
      }
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

inline Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest '" + path.string() + "'");
  return parse_manifest(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Config

struct BackendSpec {
  /// "synthetic" or "onnx".
  std::string type = "synthetic";
  std::vector<fs::path> models;
};

struct PipelineConfig {
  TilingConfig tiling;
  ThresholdConfig thresholds;
  OverlaySpec overlay;
  BackendSpec backend;
  /// Integer downsample applied when slides are loaded; 0 defers to sidecars.
  int ingest_downsample = 0;
  int workers = 1;
};

/// Parses `--backend` style text: "synthetic" or comma-separated model paths.
inline BackendSpec parse_backend(const std::string& text, const fs::path& base_dir = {}) {
  BackendSpec b;
  if (text.empty() || text == "synthetic") return b;
  b.type = "onnx";
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    fs::path p(item);
    b.models.push_back(p.is_absolute() ? p : base_dir / p);
  }
  if (b.models.empty()) throw InvalidArgument("backend lists no model files");
  return b;
}

inline Rgb rgb_from_json(const json& j) {
  const auto v = j.get<std::array<int, 3>>();
  for (int c : v)
    if (c < 0 || c > 255) throw InvalidArgument("color channel outside [0,255]");
  return {static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]), static_cast<std::uint8_t>(v[2])};
}

/// Reads the JSON config; every field is optional and defaults as in the
/// individual modules. Relative model paths resolve against `base_dir`.
inline PipelineConfig config_from_json(const json& j, const fs::path& base_dir = {}) {
  PipelineConfig c;
  try {
    if (j.contains("tiling")) c.tiling = tiling_from_json(j.at("tiling"));
    if (j.contains("thresholds")) c.thresholds = thresholds_from_json(j.at("thresholds"));
    if (j.contains("overlay")) {
      const auto& o = j.at("overlay");
      c.overlay.downsample = o.value("downsample", c.overlay.downsample);
      c.overlay.prob_low = o.value("prob_low", c.overlay.prob_low);
      c.overlay.prob_high = o.value("prob_high", c.overlay.prob_high);
      c.overlay.opacity_low = o.value("opacity_low", c.overlay.opacity_low);
      c.overlay.opacity_high = o.value("opacity_high", c.overlay.opacity_high);
      if (o.contains("class_colors"))
        for (auto d : kAllDiagnoses)
          if (o.at("class_colors").contains(std::string(name(d))))
            c.overlay.class_colors[index(d)] = rgb_from_json(o.at("class_colors").at(std::string(name(d))));
      c.overlay.validate();
    }
    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      c.backend.type = b.value("type", std::string("synthetic"));
      if (c.backend.type != "synthetic" && c.backend.type != "onnx")
        throw InvalidArgument("backend.type must be 'synthetic' or 'onnx'");
      for (const auto& m : b.value("models", json::array())) {
        fs::path p(m.get<std::string>());
        c.backend.models.push_back(p.is_absolute() ? p : base_dir / p);
      }
      if (c.backend.type == "onnx" && c.backend.models.empty())
        throw InvalidArgument("backend.type 'onnx' needs at least one model");
    }
    c.ingest_downsample = j.value("downsample", c.ingest_downsample);
    if (c.ingest_downsample < 0) throw InvalidArgument("downsample must be >= 1");
    c.workers = j.value("workers", c.workers);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad config: ") + e.what());
  }
  return c;
}

inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

/// Factory producing one classifier per call: the synthetic oracle, a single
/// ONNX network, or an ensemble of several.
inline ClassifierFactory make_factory(const BackendSpec& spec, int side_px) {
  if (spec.type == "synthetic") return [side_px] { return std::make_unique<SyntheticOracle>(side_px); };
  const auto models = spec.models;
  return [models, side_px]() -> std::unique_ptr<PatchClassifier> {
    std::vector<std::unique_ptr<PatchClassifier>> members;
    for (const auto& m : models) {
      auto net = std::make_unique<OnnxClassifier>(m);
      if (net->side_px() != side_px)
        throw BackendFailure("model '" + m.string() + "' expects " + std::to_string(net->side_px()) +
                             "px patches, tiling uses " + std::to_string(side_px));
      members.push_back(std::move(net));
    }
    if (members.size() == 1) return std::move(members.front());
    return std::make_unique<Ensemble>(std::move(members));
  };
}

// ---------------------------------------------------------------------------
// Pipeline

struct SlideResult {
  std::string slide_id;
  std::optional<SlidePredictions> predictions;
  std::optional<SlideSummary> summary;
  std::optional<Diagnosis> diagnosis;
  std::string error;

  bool ok() const { return error.empty(); }
};

inline SlideRaster load_manifest_slide(const ManifestRow& row, const PipelineConfig& cfg) {
  std::optional<int> ds;
  if (cfg.ingest_downsample > 0) ds = cfg.ingest_downsample;
  return load_slide(row.path, row.slide_id, ds);
}

/// tile -> classify -> summarize -> diagnose for one slide. Errors are
/// captured in the result.
inline SlideResult process_slide(const ManifestRow& row, const PipelineConfig& cfg, const ClassifierFactory& factory,
                                 int workers) {
  SlideResult r;
  r.slide_id = row.slide_id;
  try {
    const auto slide = load_manifest_slide(row, cfg);
    SlidePredictions sp{row.slide_id, slide.width(), slide.height(), cfg.tiling,
                        classify_slide(slide, cfg.tiling, factory, workers)};
    r.summary = summarize(sp.predictions, cfg.thresholds, row.slide_id);
    r.predictions = std::move(sp);
    r.diagnosis = diagnose(*r.summary, cfg.thresholds);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

/// Runs every manifest slide. Slides are spread over a bounded pool; the
/// remaining worker budget goes to patch-level parallelism inside a slide.
/// Results are in manifest order.
inline std::vector<SlideResult> process_manifest(const Manifest& m, const PipelineConfig& cfg, int workers) {
  const int total = resolve_workers(workers);
  const int slide_workers = std::max(1, std::min<int>(total, static_cast<int>(m.rows.size())));
  const int patch_workers = std::max(1, total / slide_workers);
  const auto factory = make_factory(cfg.backend, cfg.tiling.side_px);
  std::vector<SlideResult> results(m.rows.size());
  parallel_for(m.rows.size(), slide_workers, [&](int, std::size_t i) {
    results[i] = process_slide(m.rows[i], cfg, factory, patch_workers);
  }, 1);
  return results;
}

/// diagnoses.json body: {"slides": [records], "failures": [{slide_id, error}]}.
inline json diagnoses_json(const std::vector<SlideResult>& results, const ThresholdConfig& thr) {
  json slides = json::array(), failures = json::array();
  for (const auto& r : results) {
    if (r.summary && r.diagnosis) slides.push_back(diagnosis_record(*r.summary, thr));
    else if (r.summary) {
      slides.push_back(diagnosis_record(*r.summary, thr));
      failures.push_back({{"slide_id", r.slide_id}, {"error", r.error}});
    } else {
      failures.push_back({{"slide_id", r.slide_id}, {"error", r.error}});
    }
  }
  return {{"slides", slides}, {"failures", failures}};
}

/// Evaluation cases for manifest rows that carry a rater panel.
inline std::vector<EvaluationCase> evaluation_cases(const Manifest& m,
                                                    const std::map<std::string, Diagnosis>& model_dx) {
  std::vector<EvaluationCase> cases;
  for (const auto& row : m.rows) {
    if (!row.rater_dx) continue;
    EvaluationCase c;
    c.slide_id = row.slide_id;
    if (auto it = model_dx.find(row.slide_id); it != model_dx.end()) c.model_dx = it->second;
    c.local_dx = row.local_dx;
    c.rater_dx = *row.rater_dx;
    cases.push_back(c);
  }
  return cases;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

} // namespace polypath
