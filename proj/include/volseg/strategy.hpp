#pragma once

#include <optional>
#include <string>
#include <vector>

#include "volseg/guidance.hpp"
#include "volseg/metrics.hpp"
#include "volseg/random.hpp"
#include "volseg/segmenter.hpp"
#include "volseg/windowing.hpp"

namespace volseg {

/// Halting rules for the correction loop, combined with OR and checked in
/// the order max_iter, dice_threshold, stop_probability.
struct StoppingCriterion {
  std::optional<int> max_iter;              // hard cap on correction iterations
  std::optional<double> stop_probability;   // per completed iteration
  std::optional<double> dice_threshold;     // stop once the latest Dice reaches it

  void validate() const;
  std::string describe() const;  // e.g. "max_iter=10;p=0.5;dice=0.9"
};

enum class StopReason { MaxIter, Probability, Dice, NoError };
std::string to_string(StopReason r);
StopReason parse_stop_reason(const std::string& s);

enum class ClickStrategy { NonCorrective, Corrective };
enum class ScopeMode { Global, LocalPatchwise };
std::string to_string(ClickStrategy s);
std::string to_string(ScopeMode m);
ClickStrategy parse_click_strategy(const std::string& s);
ScopeMode parse_scope_mode(const std::string& s);

struct CorrectionScope {
  ScopeMode mode = ScopeMode::Global;
  WindowConfig patches;  // patch grid for local mode
};

struct InteractionState {
  int iteration = 0;  // completed correction iterations
  ClickSet clicks;
  Volume prediction;  // probabilities
  std::vector<double> dice_history;  // Dice@0 .. Dice@iteration
  std::vector<double> nsd_history;
  std::optional<StopReason> stopped_reason;
};

struct StopDecision {
  bool stop = false;
  std::optional<StopReason> reason;
};

/// The probability rule only draws after at least one correction, so a
/// clickless prediction is always followed by one round of clicks unless
/// the cap or the Dice rule fire first.
StopDecision should_stop(const InteractionState& state, const StoppingCriterion& crit, Rng& rng);

/// n tumor clicks drawn from the label, all tagged iteration 0.
ClickSet non_corrective_clicks(const BinaryMask& label, int n, Rng& rng);

/// Everything a correction step needs besides the loop state.
struct InteractionContext {
  const Volume& image;
  const BinaryMask& label;
  const Segmenter& segmenter;
  WindowConfig window;
  int workers = 1;
  double threshold = 0.5;
  double nsd_tolerance_mm = kDefaultNsdToleranceMm;
};

/// Image plus guidance channels through sliding-window inference.
Volume predict_with_clicks(const Volume& image, const ClickSet& clicks, const Segmenter& segmenter,
                           const WindowConfig& window, int workers = 1);

BinaryMask binarize(const Volume& probabilities, double threshold = 0.5);

struct WorstPatches {
  std::optional<size_t> tumor_patch;
  std::optional<size_t> background_patch;
};

/// Lowest per-window Dice among windows holding at least one voxel of the
/// relevant error (under-segmentation for tumor, over-segmentation for
/// background). Ties go to the lowest grid index.
WorstPatches select_worst_patches(const BinaryMask& pred, const BinaryMask& label, const WindowGrid& grid);

/// Per-window Dice on the window restriction; empty-vs-empty counts as 1.
double patch_dice(const BinaryMask& pred, const BinaryMask& label, const Index3& origin, const Dims& window);

struct StepOutcome {
  bool corrected = false;  // false when both error masks were empty
  std::optional<Click> tumor;
  std::optional<Click> background;
  WorstPatches patches;  // local mode only
};

/// One global correction: a tumor click from the false negatives and a
/// background click from the false positives of the whole volume, then a
/// new prediction. A class without errors gets no click.
StepOutcome corrective_step_global(InteractionState& state, const InteractionContext& ctx, Rng& rng);

/// As the global step, but each click is drawn from the error restricted to
/// that class's worst patch.
StepOutcome corrective_step_local(InteractionState& state, const InteractionContext& ctx, const WindowGrid& grid,
                                  Rng& rng);

struct IterationRecord {
  int iteration = 0;
  std::vector<Click> clicks;  // placed before this iteration's prediction
  double dice = 0.0;
  double nsd = 0.0;
  double seconds = 0.0;
  WorstPatches patches;
};

struct Trajectory {
  std::vector<IterationRecord> records;  // records[k] is iteration k, k = 0 .. final
  InteractionState final_state;
  int predictions = 0;
};

struct InteractionConfig {
  ClickStrategy strategy = ClickStrategy::Corrective;
  CorrectionScope scope;
  StoppingCriterion criterion{10, std::nullopt, std::nullopt};
  bool eval_mode = true;  // only the iteration cap applies
  int non_corrective_clicks = 10;
  WindowConfig window;
  int workers = 1;
  double threshold = 0.5;
  double nsd_tolerance_mm = kDefaultNsdToleranceMm;
};

inline constexpr int kDefaultMaxIter = 10;

/// Iteration 0 predicts with empty guidance; then the strategy runs until a
/// stopping rule fires or no errors remain.
Trajectory run_interaction(const Volume& image, const BinaryMask& label, const Segmenter& segmenter,
                           const InteractionConfig& cfg, Rng& rng);

}  // namespace volseg
