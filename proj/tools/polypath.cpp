// polypath: whole-slide polyp classification pipeline.
//
// Stages read and write files under --out-dir so partial pipelines can be
// scripted:
//   tile      -> tiles/<slide>.csv, slide_stats.csv
//   classify  -> predictions/<slide>.json
//   infer     -> diagnoses.json, percentage_areas.csv
//   calibrate -> thresholds.json
//   evaluate  -> evaluation.json
//   visualize -> heatmaps/<slide>.png
//   stats     -> slide_stats.csv
//   run       -> all of classify, infer and (with rater columns) evaluate
//
// Exit codes: 0 success, 1 one or more slides failed, 2 bad configuration
// or manifest.

#include <chrono>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "polypath/pipeline.hpp"
#include "polypath/synthetic.hpp"

namespace {

using namespace polypath;

constexpr int kExitOk = 0;
constexpr int kExitSlideFailure = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string manifest;
  std::string config;
  std::string backend;
  std::string out_dir = "out";
  std::string thresholds;
  std::string input;
  int workers = 0;
  int downsample = 0;
  int heatmap_downsample = 0;
  // synth
  int count = 10;
  int seed = 1;
  int cols = 8;
  int rows = 6;
  int block_px = 224;
};

PipelineConfig resolve_config(const Options& o) {
  PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_config(o.config);
  if (!o.backend.empty()) cfg.backend = parse_backend(o.backend);
  if (!o.thresholds.empty()) cfg.thresholds = thresholds_from_json(read_json_file(o.thresholds), cfg.thresholds);
  if (o.downsample > 0) cfg.ingest_downsample = o.downsample;
  if (o.heatmap_downsample > 0) cfg.overlay.downsample = o.heatmap_downsample;
  if (o.workers > 0) cfg.workers = o.workers;
  return cfg;
}

Manifest require_manifest(const Options& o) {
  if (o.manifest.empty()) throw ManifestError("--manifest is required");
  return load_manifest(o.manifest);
}

void report_failure(const std::string& slide_id, const std::string& err) {
  std::cerr << "slide " << slide_id << ": " << err << "\n";
}

fs::path ensure_dir(const fs::path& p) {
  fs::create_directories(p);
  return p;
}

fs::path predictions_path(const fs::path& out, const std::string& id) { return out / "predictions" / (id + ".json"); }

int cmd_tile(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto m = require_manifest(o);
  const fs::path out = ensure_dir(o.out_dir);
  const fs::path tiles = ensure_dir(out / "tiles");
  std::vector<SlideStatsRow> rows;
  bool failed = false;
  for (const auto& row : m.rows) {
    try {
      const auto slide = load_manifest_slide(row, cfg);
      const auto windows = extract_grid(slide, cfg.tiling);
      const auto mask = tissue_mask(slide, windows, cfg.tiling, cfg.workers);
      std::ostringstream csv;
      csv << "x,y,side_px,tissue\n";
      std::size_t count = 0;
      for (std::size_t i = 0; i < windows.size(); ++i) {
        csv << windows[i].x << ',' << windows[i].y << ',' << windows[i].side_px << ',' << (mask[i] ? 1 : 0) << '\n';
        count += mask[i] ? 1 : 0;
      }
      write_text(tiles / (row.slide_id + ".csv"), csv.str());
      SlideStats s{count, static_cast<std::uint64_t>(count) * static_cast<std::uint64_t>(cfg.tiling.side_px) *
                              static_cast<std::uint64_t>(cfg.tiling.side_px)};
      rows.push_back({row.slide_id, slide.width(), slide.height(), s});
    } catch (const std::exception& e) {
      report_failure(row.slide_id, e.what());
      failed = true;
    }
  }
  std::ostringstream stats;
  emit_slide_stats(stats, rows);
  write_text(out / "slide_stats.csv", stats.str());
  return failed ? kExitSlideFailure : kExitOk;
}

int cmd_stats(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto m = require_manifest(o);
  const fs::path out = ensure_dir(o.out_dir);
  std::vector<SlideStatsRow> rows;
  bool failed = false;
  for (const auto& row : m.rows) {
    try {
      const auto slide = load_manifest_slide(row, cfg);
      rows.push_back({row.slide_id, slide.width(), slide.height(), slide_stats(slide, cfg.tiling, cfg.workers)});
    } catch (const std::exception& e) {
      report_failure(row.slide_id, e.what());
      failed = true;
    }
  }
  std::ostringstream stats;
  emit_slide_stats(stats, rows);
  write_text(out / "slide_stats.csv", stats.str());
  return failed ? kExitSlideFailure : kExitOk;
}

void write_predictions(const fs::path& out, const std::vector<SlideResult>& results) {
  const fs::path dir = ensure_dir(out / "predictions");
  for (const auto& r : results)
    if (r.predictions) write_json(dir / (r.slide_id + ".json"), to_json(*r.predictions));
}

int cmd_classify(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto m = require_manifest(o);
  const fs::path out = ensure_dir(o.out_dir);
  const auto results = process_manifest(m, cfg, cfg.workers);
  write_predictions(out, results);
  bool failed = false;
  for (const auto& r : results)
    if (!r.predictions) {
      report_failure(r.slide_id, r.error);
      failed = true;
    }
  return failed ? kExitSlideFailure : kExitOk;
}

/// Slide ids to read from predictions/: manifest order, or sorted file names.
std::vector<std::string> prediction_ids(const Options& o, const fs::path& out) {
  std::vector<std::string> ids;
  if (!o.manifest.empty()) {
    for (const auto& row : load_manifest(o.manifest).rows) ids.push_back(row.slide_id);
    return ids;
  }
  const fs::path dir = out / "predictions";
  if (!fs::is_directory(dir)) throw IoError("no predictions directory under '" + out.string() + "'");
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

void write_inference(const fs::path& out, const std::vector<SlideResult>& results, const ThresholdConfig& thr) {
  write_json(out / "diagnoses.json", diagnoses_json(results, thr));
  std::vector<SlideSummary> summaries;
  for (const auto& r : results)
    if (r.diagnosis) summaries.push_back(*r.summary);
  write_text(out / "percentage_areas.csv", percentage_areas_csv(summaries, thr));
}

int cmd_infer(const Options& o) {
  const auto cfg = resolve_config(o);
  const fs::path out = ensure_dir(o.out_dir);
  std::vector<SlideResult> results;
  for (const auto& id : prediction_ids(o, out)) {
    SlideResult r;
    r.slide_id = id;
    try {
      r.predictions = predictions_from_json(read_json_file(predictions_path(out, id)));
      r.summary = summarize(r.predictions->predictions, cfg.thresholds, id);
      r.diagnosis = diagnose(*r.summary, cfg.thresholds);
    } catch (const std::exception& e) {
      r.error = e.what();
      report_failure(id, r.error);
    }
    results.push_back(std::move(r));
  }
  write_inference(out, results, cfg.thresholds);
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.ok(); }) ? kExitOk
                                                                                          : kExitSlideFailure;
}

std::map<std::string, Diagnosis> read_model_diagnoses(const fs::path& diagnoses_file) {
  std::map<std::string, Diagnosis> dx;
  const auto j = read_json_file(diagnoses_file);
  for (const auto& s : j.at("slides"))
    if (!s.at("diagnosis").is_null())
      dx[s.at("slide_id").get<std::string>()] = diagnosis_from_string(s.at("diagnosis").get<std::string>());
  return dx;
}

int cmd_evaluate(const Options& o) {
  const auto m = require_manifest(o);
  if (!m.has_raters()) throw ManifestError("manifest has no rater_dx columns to evaluate against");
  const fs::path out = ensure_dir(o.out_dir);
  const fs::path dx_file = o.input.empty() ? out / "diagnoses.json" : fs::path(o.input);
  const auto cases = evaluation_cases(m, read_model_diagnoses(dx_file));
  write_json(out / "evaluation.json", to_json(evaluate(cases)));
  return kExitOk;
}

int cmd_calibrate(const Options& o) {
  std::vector<LabeledSummary> data;
  if (!o.input.empty()) {
    for (const auto& j : read_json_file(o.input)) data.push_back(labeled_from_json(j));
  } else {
    // Training rows of the manifest, gold from the panel (or local dx),
    // counts from an earlier `infer` run.
    const auto m = require_manifest(o);
    const fs::path out(o.out_dir);
    std::map<std::string, SlideSummary> summaries;
    const json diagnoses = read_json_file(out / "diagnoses.json");
    for (const auto& s : diagnoses.at("slides"))
      summaries[s.at("slide_id").get<std::string>()] = summary_from_json(s);
    const bool any_split = std::any_of(m.rows.begin(), m.rows.end(), [](const auto& r) { return r.split.has_value(); });
    for (const auto& row : m.rows) {
      if (any_split && row.split != "train") continue;
      std::optional<Diagnosis> gold = row.rater_dx ? majority_vote(*row.rater_dx) : row.local_dx;
      auto it = summaries.find(row.slide_id);
      if (!gold || it == summaries.end() || it->second.tissue_total() == 0) continue;
      data.push_back({it->second, *gold});
    }
  }
  const auto cfg = resolve_config(o);
  auto result = grid_search(data, GridSpec{}, cfg.workers);
  result.thresholds.confidence_floor = cfg.thresholds.confidence_floor;
  const fs::path out = ensure_dir(o.out_dir);
  json j = to_json(result.thresholds);
  j["best_score"] = result.best_score;
  j["n_slides"] = data.size();
  write_json(out / "thresholds.json", j);
  std::cout << "villous_threshold=" << result.thresholds.villous_threshold
            << " ssa_threshold=" << result.thresholds.ssa_threshold << " score=" << result.best_score << "\n";
  return kExitOk;
}

int cmd_visualize(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto m = require_manifest(o);
  const fs::path out = ensure_dir(o.out_dir);
  const fs::path dir = ensure_dir(out / "heatmaps");
  bool failed = false;
  for (const auto& row : m.rows) {
    try {
      const auto slide = load_manifest_slide(row, cfg);
      const auto sp = predictions_from_json(read_json_file(predictions_path(out, row.slide_id)));
      write_png(render_heatmap(slide, sp.predictions, cfg.overlay), dir / (row.slide_id + ".png"));
    } catch (const std::exception& e) {
      report_failure(row.slide_id, e.what());
      failed = true;
    }
  }
  return failed ? kExitSlideFailure : kExitOk;
}

int cmd_run(const Options& o) {
  const auto cfg = resolve_config(o);
  const auto m = require_manifest(o);
  const fs::path out = ensure_dir(o.out_dir);
  const auto start = std::chrono::steady_clock::now();
  const auto results = process_manifest(m, cfg, cfg.workers);
  write_predictions(out, results);
  write_inference(out, results, cfg.thresholds);

  std::map<std::string, Diagnosis> dx;
  for (const auto& r : results)
    if (r.diagnosis) dx[r.slide_id] = *r.diagnosis;
  if (m.has_raters()) {
    const auto cases = evaluation_cases(m, dx);
    try {
      write_json(out / "evaluation.json", to_json(evaluate(cases)));
    } catch (const EmptyDataset& e) {
      std::cerr << "evaluation skipped: " << e.what() << "\n";
    }
  }

  std::size_t failed = 0;
  for (const auto& r : results)
    if (!r.ok()) {
      report_failure(r.slide_id, r.error);
      ++failed;
    }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cerr << results.size() - failed << "/" << results.size() << " slides diagnosed in " << secs << " s\n";
  return failed ? kExitSlideFailure : kExitOk;
}

/// Writes painted synthetic slides and a manifest whose five rater columns
/// hold each slide's ground-truth diagnosis.
int cmd_synth(const Options& o) {
  const fs::path out = ensure_dir(o.out_dir);
  std::mt19937_64 rng(static_cast<std::uint64_t>(o.seed));
  std::ostringstream manifest;
  manifest << "slide_id,path,local_dx,rater_dx_1,rater_dx_2,rater_dx_3,rater_dx_4,rater_dx_5,split\n";
  for (int i = 0; i < o.count; ++i) {
    const auto target = kAllDiagnoses[static_cast<std::size_t>(i) % kNumDiagnoses];
    const auto blocks =
        synthetic::layout_for(target, static_cast<std::size_t>(o.cols) * static_cast<std::size_t>(o.rows), rng);
    const std::string id = "synth_" + std::to_string(i);
    const auto s = synthetic::painted_slide(id, o.cols, o.rows, o.block_px, blocks, 10, rng());
    write_png(s.raster.read_region(0, 0, s.raster.width(), s.raster.height()), out / (id + ".png"));
    const auto dx = std::string(name(target));
    manifest << id << ',' << id << ".png," << dx;
    for (std::size_t r = 0; r < kPanelSize; ++r) manifest << ',' << dx;
    manifest << ',' << (i % 2 == 0 ? "train" : "test") << '\n';
  }
  write_text(out / "manifest.csv", manifest.str());
  return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whole-slide colorectal polyp classification pipeline"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--manifest", o.manifest, "Manifest CSV (slide_id,path[,local_dx,rater_dx_1..5,split])");
    sub->add_option("--config", o.config, "Pipeline config JSON");
    sub->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--workers", o.workers, "Worker threads (0 = all cores)");
    sub->add_option("--downsample", o.downsample, "Integer downsample applied when loading slides");
  };
  auto backend = [&](CLI::App* sub) {
    sub->add_option("--backend", o.backend, "'synthetic' or comma-separated ONNX model paths (averaged)");
  };
  auto thresholds = [&](CLI::App* sub) {
    sub->add_option("--thresholds", o.thresholds, "Threshold JSON (e.g. from calibrate)");
  };

  std::map<CLI::App*, int (*)(const Options&)> handlers;
  auto add = [&](const char* nm, const char* desc, int (*fn)(const Options&)) {
    auto* sub = app.add_subcommand(nm, desc);
    common(sub);
    handlers[sub] = fn;
    return sub;
  };

  add("tile", "Enumerate windows and tissue flags per slide", cmd_tile);
  backend(add("classify", "Classify tissue patches of every slide", cmd_classify));
  thresholds(add("infer", "Summarize predictions and diagnose slides", cmd_infer));
  auto* cal = add("calibrate", "Grid-search the two decision thresholds", cmd_calibrate);
  cal->add_option("--input", o.input, "JSON array of {slide_id, counts, gold}");
  thresholds(cal);
  add("evaluate", "Score diagnoses against the rater panel", cmd_evaluate)
      ->add_option("--input", o.input, "diagnoses.json (default: <out-dir>/diagnoses.json)");
  auto* vis = add("visualize",
                  "Render heatmaps: TA green, TVA blue, HP yellow, SSA red; opacity 0.2..0.8 "
                  "linear in top probability 0.2..1.0; NORM and background untinted",
                  cmd_visualize);
  vis->add_option("--heatmap-downsample", o.heatmap_downsample, "Heatmap downsample factor (default 16)");
  add("stats", "Tissue patch count and area per slide", cmd_stats);
  auto* run = add("run", "classify + infer (+ evaluate when raters are present)", cmd_run);
  backend(run);
  thresholds(run);
  auto* synth = add("synth", "Write a synthetic demo dataset with a manifest", cmd_synth);
  synth->add_option("--count", o.count, "Number of slides")->capture_default_str();
  synth->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  synth->add_option("--cols", o.cols, "Blocks per row")->capture_default_str();
  synth->add_option("--rows", o.rows, "Blocks per column")->capture_default_str();
  synth->add_option("--block-px", o.block_px, "Block side in pixels")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  for (const auto& [sub, fn] : handlers) {
    if (!sub->parsed()) continue;
    try {
      return fn(o);
    } catch (const ManifestError& e) {
      std::cerr << "manifest error: " << e.what() << "\n";
      return kExitConfig;
    } catch (const InvalidArgument& e) {
      std::cerr << "configuration error: " << e.what() << "\n";
      return kExitConfig;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitSlideFailure;
    }
  }
  return kExitConfig;
}
