#include "volseg/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "volseg/io.hpp"
#include "volseg/serialization.hpp"
#include "volseg/transforms.hpp"

namespace volseg {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  if (dataset_dir.empty()) fail(ErrorKind::Config, "experiment needs a dataset directory");
  if (eval_n_max < 0) fail(ErrorKind::Config, "eval_n_max must be non-negative");
  if (jobs < 1 || window_workers < 1) fail(ErrorKind::Config, "jobs and window_workers must be >= 1");
  if (non_corrective_clicks < 0) fail(ErrorKind::Config, "non_corrective_clicks must be non-negative");
  if (center_crop && !center_crop->valid()) fail(ErrorKind::Config, "center_crop must be positive");
  if (!(nsd_tolerance_mm > 0.0)) fail(ErrorKind::Config, "nsd_tolerance_mm must be positive");
  try {
    window.validate();
    if (scope.mode == ScopeMode::LocalPatchwise) scope.patches.validate();
    criterion.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  segmenter.validate();
}

std::string ExperimentConfig::label() const {
  if (!name.empty()) return name;
  return to_string(strategy) + "/" + to_string(scope.mode) + "/" + criterion.describe();
}

ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::Config, "experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    c.name = j.value("name", std::string());
    c.dataset_dir = j.at("dataset").get<std::string>();
    c.strategy = parse_click_strategy(j.value("strategy", std::string("corrective")));
    if (j.contains("window")) c.window = j["window"].get<WindowConfig>();
    c.scope.patches = c.window;
    if (j.contains("scope")) {
      const json& s = j["scope"];
      if (s.is_string()) {
        c.scope.mode = parse_scope_mode(s.get<std::string>());
      } else {
        c.scope.mode = parse_scope_mode(s.value("mode", std::string("global")));
        if (s.contains("patches")) c.scope.patches = s["patches"].get<WindowConfig>();
      }
    }
    if (j.contains("criterion")) c.criterion = j["criterion"].get<StoppingCriterion>();
    c.eval_mode = j.value("eval_mode", c.eval_mode);
    c.eval_n_max = j.value("eval_n_max", c.eval_n_max);
    c.non_corrective_clicks = j.value("non_corrective_clicks", c.non_corrective_clicks);
    if (j.contains("segmenter")) c.segmenter = j["segmenter"].get<SegmenterSpec>();
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", std::string());
    if (j.contains("center_crop") && !j["center_crop"].is_null()) {
      const json& cc = j["center_crop"];
      if (cc.is_number_integer()) {
        const auto e = cc.get<int64_t>();
        c.center_crop = Dims{e, e, e};
      } else {
        c.center_crop = cc.get<Dims>();
      }
    }
    c.jobs = j.value("jobs", c.jobs);
    c.window_workers = j.value("window_workers", c.window_workers);
    c.nsd_tolerance_mm = j.value("nsd_tolerance_mm", c.nsd_tolerance_mm);
    if (j.contains("normalize")) {
      c.lo_pct = j["normalize"].value("lo", c.lo_pct);
      c.hi_pct = j["normalize"].value("hi", c.hi_pct);
    }
    c.record_timing = j.value("record_timing", c.record_timing);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("experiment config: ") + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j = {{"name", c.name},
            {"dataset", c.dataset_dir.string()},
            {"strategy", to_string(c.strategy)},
            {"scope", {{"mode", to_string(c.scope.mode)}, {"patches", c.scope.patches}}},
            {"criterion", c.criterion},
            {"eval_mode", c.eval_mode},
            {"eval_n_max", c.eval_n_max},
            {"non_corrective_clicks", c.non_corrective_clicks},
            {"window", c.window},
            {"segmenter", c.segmenter},
            {"seed", c.seed},
            {"output_dir", c.output_dir.string()},
            {"center_crop", c.center_crop ? json(*c.center_crop) : json(nullptr)},
            {"jobs", c.jobs},
            {"window_workers", c.window_workers},
            {"nsd_tolerance_mm", c.nsd_tolerance_mm},
            {"normalize", {{"lo", c.lo_pct}, {"hi", c.hi_pct}}},
            {"record_timing", c.record_timing}};
  return j;
}

std::vector<DatasetEntry> scan_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Io, "dataset directory not found: " + dir.string());
  static const char* kExts[] = {".nii.gz", ".nii", ".json"};
  std::map<std::string, DatasetEntry> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    for (const char* ext : kExts) {
      const std::string suffix = std::string("_pet") + ext;
      if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
        continue;
      DatasetEntry e;
      e.id = name.substr(0, name.size() - suffix.size());
      e.image = entry.path();
      for (const char* lext : kExts) {
        const fs::path candidate = dir / (e.id + "_label" + lext);
        if (fs::exists(candidate)) {
          e.label = candidate;
          break;
        }
      }
      found.emplace(e.id, std::move(e));
      break;
    }
  }
  std::vector<DatasetEntry> out;
  for (auto& [id, e] : found) out.push_back(std::move(e));
  return out;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

VolumeRow run_volume(const ExperimentConfig& cfg, const std::string& volume_id, const Volume& image,
                     const BinaryMask& label, const Segmenter* shared_backend) {
  require_same_dims(image.dims(), label.dims(), ("volume " + volume_id).c_str());
  Volume img = percentile_normalize(image, cfg.lo_pct, cfg.hi_pct);
  BinaryMask lab = label;
  lab.set_spacing(img.spacing());
  if (cfg.center_crop) {
    img = center_crop(img, *cfg.center_crop);
    lab = center_crop(lab, *cfg.center_crop);
  }
  std::shared_ptr<const Segmenter> owned;
  const Segmenter* backend = shared_backend;
  if (!backend) {
    owned = make_segmenter(cfg.segmenter, &lab, Rng::derive_seed(cfg.seed, volume_id + "/segmenter"));
    backend = owned.get();
  }

  InteractionConfig ic;
  ic.strategy = cfg.strategy;
  ic.scope = cfg.scope;
  ic.eval_mode = cfg.eval_mode;
  ic.criterion = cfg.eval_mode ? StoppingCriterion{cfg.eval_n_max, std::nullopt, std::nullopt} : cfg.criterion;
  ic.non_corrective_clicks = cfg.non_corrective_clicks;
  ic.window = cfg.window;
  ic.workers = cfg.window_workers;
  ic.nsd_tolerance_mm = cfg.nsd_tolerance_mm;

  Rng rng(Rng::derive_seed(cfg.seed, volume_id));
  VolumeRow row;
  row.volume_id = volume_id;
  row.strategy = to_string(cfg.strategy);
  row.scope = to_string(cfg.scope.mode);
  row.criterion = ic.criterion.describe();
  row.trajectory = run_interaction(img, lab, *backend, ic, rng);
  if (!cfg.record_timing)
    for (IterationRecord& r : row.trajectory.records) r.seconds = 0.0;

  const InteractionState& s = row.trajectory.final_state;
  row.dice_at_0 = s.dice_history.front();
  row.dice_at_n = s.dice_history.back();
  row.nsd_at_n = s.nsd_history.back();
  row.iterations = s.iteration;
  row.clicks_total = static_cast<int>(s.clicks.size());
  for (const IterationRecord& r : row.trajectory.records) row.seconds += r.seconds;
  return row;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "short write to " + path.string());
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

Report run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<DatasetEntry> entries = scan_dataset(cfg.dataset_dir);
  if (entries.empty()) fail(ErrorKind::Config, "dataset " + cfg.dataset_dir.string() + " contains no *_pet volumes");

  std::shared_ptr<const Segmenter> shared;
  if (!cfg.segmenter.needs_label()) shared = make_segmenter(cfg.segmenter, nullptr, cfg.seed);

  std::vector<std::optional<VolumeRow>> rows(entries.size());
  std::vector<std::optional<Error>> errors(entries.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < entries.size(); i = next++) {
      const DatasetEntry& e = entries[i];
      try {
        if (!e.label) fail(ErrorKind::Io, "no label file for " + e.id);
        const Volume image = load_volume(e.image);
        const BinaryMask label = load_mask(*e.label);
        rows[i] = run_volume(cfg, e.id, image, label, shared.get());
      } catch (const Error& err) {
        errors[i] = err;
      } catch (const std::exception& err) {
        errors[i] = Error(ErrorKind::Backend, err.what());
      }
    }
  };
  const size_t n_threads = std::min(entries.size(), static_cast<size_t>(cfg.jobs));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  Report report;
  report.config_label = cfg.label();
  for (size_t i = 0; i < entries.size(); ++i) {
    if (rows[i])
      report.rows.push_back(std::move(*rows[i]));
    else
      report.skipped.push_back({entries[i].id, errors[i] ? errors[i]->what() : "unknown failure"});
  }
  if (report.rows.empty()) {
    const Error& first = *errors.front();
    throw Error(first.kind(), "all " + std::to_string(entries.size()) + " volumes failed; first: " + entries[0].id +
                                  ": " + first.what());
  }

  std::vector<double> d0, dn, sn;
  for (const VolumeRow& r : report.rows) {
    d0.push_back(r.dice_at_0);
    dn.push_back(r.dice_at_n);
    sn.push_back(r.nsd_at_n);
  }
  report.dice_at_0 = summarize(d0);
  report.dice_at_n = summarize(dn);
  report.nsd_at_n = summarize(sn);

  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    write_text(cfg.output_dir / "report.csv", report_csv(report));
    json j = report_json(report);
    j["config"] = to_json(cfg);
    write_text(cfg.output_dir / "report.json", j.dump(2) + "\n");
  }
  return report;
}

std::string report_csv(const Report& r) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const VolumeRow& row : r.rows) {
    out += row.volume_id + "," + row.strategy + "," + row.scope + "," + row.criterion + "," +
           fmt("%.6f", row.dice_at_0) + "," + fmt("%.6f", row.dice_at_n) + "," + fmt("%.6f", row.nsd_at_n) + "," +
           std::to_string(row.iterations) + "," + std::to_string(row.clicks_total) + "," +
           fmt("%.3f", row.seconds) + "\n";
  }
  return out;
}

json report_json(const Report& r) {
  json rows = json::array();
  for (const VolumeRow& row : r.rows)
    rows.push_back({{"volume_id", row.volume_id},
                    {"strategy", row.strategy},
                    {"scope", row.scope},
                    {"criterion", row.criterion},
                    {"dice_at_0", row.dice_at_0},
                    {"dice_at_N", row.dice_at_n},
                    {"nsd_at_N", row.nsd_at_n},
                    {"iterations", row.iterations},
                    {"clicks_total", row.clicks_total},
                    {"seconds", row.seconds},
                    {"trajectory", row.trajectory}});
  json skipped = json::array();
  for (const SkippedVolume& s : r.skipped) skipped.push_back({{"volume_id", s.volume_id}, {"reason", s.reason}});
  auto summary = [](const Summary& s) { return json{{"mean", s.mean}, {"sd", s.sd}}; };
  return {{"label", r.config_label},
          {"rows", rows},
          {"skipped", skipped},
          {"aggregate",
           {{"volumes", r.rows.size()},
            {"dice_at_0", summary(r.dice_at_0)},
            {"dice_at_N", summary(r.dice_at_n)},
            {"nsd_at_N", summary(r.nsd_at_n)}}}};
}

std::vector<ExperimentConfig> comparison_configs_from_json(const json& j) {
  json defaults = json::object();
  const json* list = &j;
  if (j.is_object()) {
    if (!j.contains("configs")) fail(ErrorKind::Config, "comparison config needs a 'configs' array");
    defaults = j.value("defaults", json::object());
    list = &j["configs"];
  }
  if (!list->is_array() || list->empty()) fail(ErrorKind::Config, "comparison needs a non-empty config list");
  std::vector<ExperimentConfig> out;
  for (const json& entry : *list) {
    json merged = defaults;
    merged.merge_patch(entry);
    out.push_back(experiment_config_from_json(merged));
  }
  return out;
}

Comparison compare_strategies(const std::vector<ExperimentConfig>& cfgs) {
  if (cfgs.empty()) fail(ErrorKind::Config, "compare needs at least one config");
  for (const ExperimentConfig& c : cfgs) {
    if (fs::weakly_canonical(c.dataset_dir) != fs::weakly_canonical(cfgs[0].dataset_dir) || c.seed != cfgs[0].seed)
      fail(ErrorKind::Config, "compared configs must share dataset and seed ('" + c.label() + "' differs)");
  }
  Comparison out;
  out.n_max = cfgs[0].eval_n_max;
  for (const ExperimentConfig& c : cfgs) {
    const Report r = run_experiment(c);
    out.rows.push_back({c.label(), r.rows.size(), r.dice_at_0, r.dice_at_n, r.nsd_at_n});
  }
  return out;
}

std::string format_comparison(const Comparison& c) {
  auto pct = [](const Summary& s) { return fmt("%.2f%%", 100.0 * s.mean) + " ± " + fmt("%.2f%%", 100.0 * s.sd); };
  const std::string n = std::to_string(c.n_max);
  std::string out = "| Configuration | Volumes | Dice@0 | Dice@" + n + " | NSD@" + n + " |\n";
  out += "|---|---|---|---|---|\n";
  for (const ComparisonRow& r : c.rows)
    out += "| " + r.label + " | " + std::to_string(r.volumes) + " | " + pct(r.dice_at_0) + " | " + pct(r.dice_at_n) +
           " | " + pct(r.nsd_at_n) + " |\n";
  return out;
}

std::string comparison_csv(const Comparison& c) {
  std::string out = "config,volumes,dice_at_0_mean,dice_at_0_sd,dice_at_N_mean,dice_at_N_sd,nsd_at_N_mean,nsd_at_N_sd\n";
  for (const ComparisonRow& r : c.rows)
    out += r.label + "," + std::to_string(r.volumes) + "," + fmt("%.6f", r.dice_at_0.mean) + "," +
           fmt("%.6f", r.dice_at_0.sd) + "," + fmt("%.6f", r.dice_at_n.mean) + "," + fmt("%.6f", r.dice_at_n.sd) +
           "," + fmt("%.6f", r.nsd_at_n.mean) + "," + fmt("%.6f", r.nsd_at_n.sd) + "\n";
  return out;
}

}  // namespace volseg
