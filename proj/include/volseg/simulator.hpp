#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "volseg/segmenter_factory.hpp"
#include "volseg/strategy.hpp"

namespace volseg {

/// One simulated-user experiment over a dataset directory. Mirrors the
/// JSON config file one-to-one (see README for the schema).
struct ExperimentConfig {
  std::string name;
  std::filesystem::path dataset_dir;
  ClickStrategy strategy = ClickStrategy::Corrective;
  CorrectionScope scope;
  StoppingCriterion criterion{kDefaultMaxIter, std::nullopt, std::nullopt};
  bool eval_mode = true;
  int eval_n_max = kDefaultMaxIter;
  int non_corrective_clicks = 10;
  WindowConfig window;
  SegmenterSpec segmenter;
  uint64_t seed = 0;
  std::filesystem::path output_dir;  // empty: nothing written
  std::optional<Dims> center_crop;
  int jobs = 1;
  int window_workers = 1;
  double nsd_tolerance_mm = kDefaultNsdToleranceMm;
  double lo_pct = 0.05;
  double hi_pct = 99.95;
  bool record_timing = false;  // wall times make reports non-reproducible

  void validate() const;
  std::string label() const;  // name, or strategy/scope/criterion
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);

struct DatasetEntry {
  std::string id;
  std::filesystem::path image;
  std::optional<std::filesystem::path> label;
};

/// Pairs `<id>_pet.<ext>` with `<id>_label.<ext>` for ext in nii.gz, nii,
/// json. Sorted by id.
std::vector<DatasetEntry> scan_dataset(const std::filesystem::path& dir);

struct VolumeRow {
  std::string volume_id;
  std::string strategy;
  std::string scope;
  std::string criterion;
  double dice_at_0 = 0.0;
  double dice_at_n = 0.0;
  double nsd_at_n = 0.0;
  int iterations = 0;
  int clicks_total = 0;
  double seconds = 0.0;
  Trajectory trajectory;
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // population standard deviation
};

Summary summarize(const std::vector<double>& values);

struct SkippedVolume {
  std::string volume_id;
  std::string reason;
};

struct Report {
  std::string config_label;
  std::vector<VolumeRow> rows;  // sorted by volume id
  std::vector<SkippedVolume> skipped;
  Summary dice_at_0;
  Summary dice_at_n;
  Summary nsd_at_n;
};

/// Loads, normalizes, optionally center-crops and runs one trajectory per
/// volume. Unreadable pairs are skipped and listed; fails only if every
/// pair fails. Outputs are written after all volumes finish.
Report run_experiment(const ExperimentConfig& cfg);

/// Runs one already-loaded pair exactly as run_experiment does.
VolumeRow run_volume(const ExperimentConfig& cfg, const std::string& volume_id, const Volume& image,
                     const BinaryMask& label, const Segmenter* shared_backend = nullptr);

inline const char* kReportCsvHeader =
    "volume_id,strategy,scope,criterion,dice_at_0,dice_at_N,nsd_at_N,iterations,clicks_total,seconds";

std::string report_csv(const Report& r);
nlohmann::json report_json(const Report& r);

struct ComparisonRow {
  std::string label;
  size_t volumes = 0;
  Summary dice_at_0;
  Summary dice_at_n;
  Summary nsd_at_n;
};

struct Comparison {
  int n_max = kDefaultMaxIter;
  std::vector<ComparisonRow> rows;
};

/// An array of configs, or {"defaults": {...}, "configs": [...]} with each
/// entry merge-patched over the defaults.
std::vector<ExperimentConfig> comparison_configs_from_json(const nlohmann::json& j);

/// Runs each config over the same dataset and seed.
Comparison compare_strategies(const std::vector<ExperimentConfig>& cfgs);

/// Text table, one row per config: Dice@0 and Dice@N as mean ± sd in percent.
std::string format_comparison(const Comparison& c);
std::string comparison_csv(const Comparison& c);

}  // namespace volseg
