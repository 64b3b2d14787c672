#include "volseg/strategy.hpp"

#include <chrono>
#include <sstream>

namespace volseg {

void StoppingCriterion::validate() const {
  if (!max_iter && !stop_probability && !dice_threshold)
    fail(ErrorKind::InvalidArgument, "stopping criterion needs at least one rule");
  if (max_iter && *max_iter < 0) fail(ErrorKind::InvalidArgument, "max_iter must be non-negative");
  if (stop_probability && !(*stop_probability >= 0.0 && *stop_probability <= 1.0))
    fail(ErrorKind::InvalidArgument, "stop probability must lie in [0,1]");
  if (dice_threshold && !(*dice_threshold > 0.0 && *dice_threshold <= 1.0))
    fail(ErrorKind::InvalidArgument, "dice threshold must lie in (0,1]");
}

std::string StoppingCriterion::describe() const {
  std::ostringstream os;
  const char* sep = "";
  if (max_iter) {
    os << "max_iter=" << *max_iter;
    sep = ";";
  }
  if (stop_probability) {
    os << sep << "p=" << *stop_probability;
    sep = ";";
  }
  if (dice_threshold) os << sep << "dice=" << *dice_threshold;
  return os.str();
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::MaxIter: return "max_iter";
    case StopReason::Probability: return "probability";
    case StopReason::Dice: return "dice";
    case StopReason::NoError: return "no_error";
  }
  return "unknown";
}

StopReason parse_stop_reason(const std::string& s) {
  if (s == "max_iter") return StopReason::MaxIter;
  if (s == "probability") return StopReason::Probability;
  if (s == "dice") return StopReason::Dice;
  if (s == "no_error") return StopReason::NoError;
  fail(ErrorKind::InvalidArgument, "unknown stop reason '" + s + "'");
}

std::string to_string(ClickStrategy s) { return s == ClickStrategy::Corrective ? "corrective" : "non_corrective"; }
std::string to_string(ScopeMode m) { return m == ScopeMode::Global ? "global" : "local_patchwise"; }

ClickStrategy parse_click_strategy(const std::string& s) {
  if (s == "corrective") return ClickStrategy::Corrective;
  if (s == "non_corrective") return ClickStrategy::NonCorrective;
  fail(ErrorKind::InvalidArgument, "unknown strategy '" + s + "' (corrective | non_corrective)");
}

ScopeMode parse_scope_mode(const std::string& s) {
  if (s == "global") return ScopeMode::Global;
  if (s == "local_patchwise" || s == "local") return ScopeMode::LocalPatchwise;
  fail(ErrorKind::InvalidArgument, "unknown scope '" + s + "' (global | local_patchwise)");
}

StopDecision should_stop(const InteractionState& state, const StoppingCriterion& crit, Rng& rng) {
  if (crit.max_iter && state.iteration >= *crit.max_iter) return {true, StopReason::MaxIter};
  if (crit.dice_threshold && !state.dice_history.empty() && state.dice_history.back() >= *crit.dice_threshold)
    return {true, StopReason::Dice};
  if (crit.stop_probability && state.iteration >= 1 && rng.uniform01() < *crit.stop_probability)
    return {true, StopReason::Probability};
  return {};
}

ClickSet non_corrective_clicks(const BinaryMask& label, int n, Rng& rng) {
  if (label.empty()) fail(ErrorKind::InvalidArgument, "non-corrective clicks need a non-empty label");
  if (n < 0) fail(ErrorKind::InvalidArgument, "click count must be non-negative");
  ClickSet out;
  for (int i = 0; i < n; ++i) out.add(*sample_click(label, ClickClass::Tumor, 0, rng));
  return out;
}

BinaryMask binarize(const Volume& probabilities, double threshold) {
  BinaryMask m(probabilities.dims(), false, probabilities.spacing());
  for (size_t i = 0; i < probabilities.size(); ++i) m.set(i, probabilities[i] > threshold);
  return m;
}

Volume predict_with_clicks(const Volume& image, const ClickSet& clicks, const Segmenter& segmenter,
                           const WindowConfig& window, int workers) {
  GuidanceChannels g = encode_clicks(clicks, image.dims(), image.spacing());
  const std::vector<Volume> channels{image, std::move(g.tumor), std::move(g.background)};
  return sw_predict(channels, segmenter, window, workers);
}

double patch_dice(const BinaryMask& pred, const BinaryMask& label, const Index3& origin, const Dims& window) {
  size_t np = 0, nl = 0, both = 0;
  for (int64_t z = origin.z; z < origin.z + window.z; ++z)
    for (int64_t y = origin.y; y < origin.y + window.y; ++y)
      for (int64_t x = origin.x; x < origin.x + window.x; ++x) {
        const bool p = pred.at(x, y, z);
        const bool l = label.at(x, y, z);
        np += p;
        nl += l;
        both += p && l;
      }
  if (np + nl == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(np + nl);
}

WorstPatches select_worst_patches(const BinaryMask& pred, const BinaryMask& label, const WindowGrid& grid) {
  require_same_dims(pred.dims(), label.dims(), "select_worst_patches");
  require_same_dims(grid.volume_dims, label.dims(), "select_worst_patches grid");
  WorstPatches out;
  double best_tumor = 2.0, best_bg = 2.0;
  const Dims& w = grid.window_dims;
  for (size_t k = 0; k < grid.size(); ++k) {
    const Index3& o = grid.origins[k];
    size_t np = 0, nl = 0, both = 0;
    bool has_under = false, has_over = false;
    for (int64_t z = o.z; z < o.z + w.z; ++z)
      for (int64_t y = o.y; y < o.y + w.y; ++y)
        for (int64_t x = o.x; x < o.x + w.x; ++x) {
          const bool p = pred.at(x, y, z);
          const bool l = label.at(x, y, z);
          np += p;
          nl += l;
          both += p && l;
          has_under |= l && !p;
          has_over |= p && !l;
        }
    const double d = np + nl == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(np + nl);
    if (has_under && d < best_tumor) {
      best_tumor = d;
      out.tumor_patch = k;
    }
    if (has_over && d < best_bg) {
      best_bg = d;
      out.background_patch = k;
    }
  }
  return out;
}

namespace {

void record_scores(InteractionState& state, const InteractionContext& ctx) {
  const BinaryMask pred = binarize(state.prediction, ctx.threshold);
  state.dice_history.push_back(dice(pred, ctx.label));
  state.nsd_history.push_back(nsd(pred, ctx.label, ctx.nsd_tolerance_mm));
}

std::optional<Click> sample_in_window(const BinaryMask& mask, const Index3& origin, const Dims& window,
                                      ClickClass cls, int iteration, Rng& rng) {
  std::optional<Click> c = sample_click(extract(mask, origin, window), cls, iteration, rng);
  if (c) {
    c->pos.x += origin.x;
    c->pos.y += origin.y;
    c->pos.z += origin.z;
  }
  return c;
}

template <typename Sampler>
StepOutcome corrective_step(InteractionState& state, const InteractionContext& ctx, Sampler sample) {
  require_same_dims(ctx.image.dims(), ctx.label.dims(), "corrective step");
  StepOutcome out;
  const ErrorMasks errors = error_masks(binarize(state.prediction, ctx.threshold), ctx.label);
  const bool any_under = !errors.under.empty();
  const bool any_over = !errors.over.empty();
  if (!any_under && !any_over) {
    state.stopped_reason = StopReason::NoError;
    return out;
  }
  const int k = state.iteration + 1;
  sample(errors, k, out);
  if (out.tumor) state.clicks.add(*out.tumor);
  if (out.background) state.clicks.add(*out.background);
  state.prediction = predict_with_clicks(ctx.image, state.clicks, ctx.segmenter, ctx.window, ctx.workers);
  state.iteration = k;
  record_scores(state, ctx);
  out.corrected = true;
  return out;
}

}  // namespace

StepOutcome corrective_step_global(InteractionState& state, const InteractionContext& ctx, Rng& rng) {
  return corrective_step(state, ctx, [&](const ErrorMasks& e, int k, StepOutcome& out) {
    out.tumor = sample_click(e.under, ClickClass::Tumor, k, rng);
    out.background = sample_click(e.over, ClickClass::Background, k, rng);
  });
}

StepOutcome corrective_step_local(InteractionState& state, const InteractionContext& ctx, const WindowGrid& grid,
                                  Rng& rng) {
  return corrective_step(state, ctx, [&](const ErrorMasks& e, int k, StepOutcome& out) {
    out.patches = select_worst_patches(binarize(state.prediction, ctx.threshold), ctx.label, grid);
    if (out.patches.tumor_patch)
      out.tumor = sample_in_window(e.under, grid.origins[*out.patches.tumor_patch], grid.window_dims,
                                   ClickClass::Tumor, k, rng);
    if (out.patches.background_patch)
      out.background = sample_in_window(e.over, grid.origins[*out.patches.background_patch], grid.window_dims,
                                        ClickClass::Background, k, rng);
  });
}

Trajectory run_interaction(const Volume& image, const BinaryMask& label, const Segmenter& segmenter,
                           const InteractionConfig& cfg, Rng& rng) {
  require_same_dims(image.dims(), label.dims(), "run_interaction");
  using Clock = std::chrono::steady_clock;
  const InteractionContext ctx{image, label, segmenter, cfg.window, cfg.workers, cfg.threshold, cfg.nsd_tolerance_mm};

  StoppingCriterion crit = cfg.criterion;
  if (cfg.eval_mode) crit = {cfg.criterion.max_iter.value_or(kDefaultMaxIter), std::nullopt, std::nullopt};
  crit.validate();
  // Stop draws come from their own stream so that the criterion never
  // shifts click placement.
  Rng stop_rng(Rng::derive_seed(rng.next(), "stop"));

  Trajectory t;
  InteractionState& state = t.final_state;
  auto start = Clock::now();
  state.prediction = predict_with_clicks(image, state.clicks, segmenter, cfg.window, cfg.workers);
  ++t.predictions;
  record_scores(state, ctx);
  auto seconds_since = [](Clock::time_point s) { return std::chrono::duration<double>(Clock::now() - s).count(); };
  t.records.push_back({0, {}, state.dice_history.back(), state.nsd_history.back(), seconds_since(start), {}});

  if (cfg.strategy == ClickStrategy::NonCorrective) {
    start = Clock::now();
    const ClickSet clicks = non_corrective_clicks(label, cfg.non_corrective_clicks, rng);
    for (const Click& c : clicks) state.clicks.add(c);
    state.prediction = predict_with_clicks(image, state.clicks, segmenter, cfg.window, cfg.workers);
    ++t.predictions;
    state.iteration = 1;
    record_scores(state, ctx);
    t.records.push_back({1, std::vector<Click>(clicks.begin(), clicks.end()), state.dice_history.back(),
                         state.nsd_history.back(), seconds_since(start), {}});
    state.stopped_reason = StopReason::MaxIter;
    return t;
  }

  std::optional<WindowGrid> patch_grid;
  if (cfg.scope.mode == ScopeMode::LocalPatchwise) patch_grid = plan_windows(label.dims(), cfg.scope.patches);

  while (true) {
    const StopDecision d = should_stop(state, crit, stop_rng);
    if (d.stop) {
      state.stopped_reason = d.reason;
      break;
    }
    start = Clock::now();
    const StepOutcome step = patch_grid ? corrective_step_local(state, ctx, *patch_grid, rng)
                                        : corrective_step_global(state, ctx, rng);
    if (!step.corrected) break;
    ++t.predictions;
    IterationRecord rec{state.iteration, {}, state.dice_history.back(), state.nsd_history.back(),
                        seconds_since(start), step.patches};
    if (step.tumor) rec.clicks.push_back(*step.tumor);
    if (step.background) rec.clicks.push_back(*step.background);
    t.records.push_back(std::move(rec));
  }
  return t;
}

}  // namespace volseg
