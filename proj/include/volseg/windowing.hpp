#pragma once

#include <span>
#include <string>
#include <vector>

#include "volseg/segmenter.hpp"
#include "volseg/volume.hpp"

namespace volseg {

enum class Weighting { Constant, Gaussian };

struct WindowConfig {
  Dims window{128, 128, 128};
  double overlap = 0.25;
  Weighting weighting = Weighting::Gaussian;
  double sigma_scale = 0.125;  // gaussian sigma as a fraction of the window edge

  void validate() const;
};

/// Overlapping windows covering a volume. Origins are sorted with z
/// outermost, then y, then x.
struct WindowGrid {
  Dims volume_dims;
  Dims window_dims;  // after shrinking to the volume where needed
  std::vector<Index3> origins;
  std::vector<std::string> notes;

  size_t size() const noexcept { return origins.size(); }
  bool contains(size_t w, const Index3& p) const noexcept {
    const Index3& o = origins[w];
    return p.x >= o.x && p.y >= o.y && p.z >= o.z && p.x < o.x + window_dims.x &&
           p.y < o.y + window_dims.y && p.z < o.z + window_dims.z;
  }
};

/// Per axis: stride = max(1, floor(w * (1 - overlap))); origins 0, stride,
/// 2*stride, ... until the window reaches the end, with the last origin
/// clamped to len - w. A window longer than the axis is shrunk to it.
WindowGrid plan_windows(const Dims& volume_dims, const WindowConfig& cfg);

/// Origins along one axis; exposed for testing.
std::vector<int64_t> axis_origins(int64_t length, int64_t window, double overlap);

struct ImportanceMap {
  Dims window_dims;
  std::vector<double> weights;  // x-fastest
};

/// Constant: all ones. Gaussian: separable, centered at (w-1)/2 per axis,
/// sigma = sigma_scale * w, scaled so the maximum is 1 and floored at 1e-6.
ImportanceMap importance_map(const Dims& window_dims, Weighting weighting, double sigma_scale);
inline ImportanceMap importance_map(const WindowConfig& cfg) {
  return importance_map(cfg.window, cfg.weighting, cfg.sigma_scale);
}

inline constexpr double kMinImportance = 1e-6;

/// Running weighted sums for blending window predictions.
class BlendAccumulator {
 public:
  explicit BlendAccumulator(const Dims& volume_dims);
  void add(const Index3& origin, const ImportanceMap& map, std::span<const float> prediction);
  /// Weighted average; throws Shape if any voxel received no weight.
  Volume finish(const Spacing& spacing = {}) const;

 private:
  Dims dims_;
  std::vector<double> weighted_sum_;
  std::vector<double> weight_sum_;
};

/// Importance-weighted average of per-window predictions.
Volume blend(const WindowGrid& grid, const ImportanceMap& map,
             std::span<const std::vector<float>> per_window_predictions);

/// Cuts one window out of each channel, channel-major.
std::vector<float> stack_window(std::span<const Volume> channels, const Index3& origin, const Dims& window);

/// Sliding-window inference: plan, query the segmenter per window and blend
/// the returned probabilities. Up to `workers` windows are evaluated in
/// parallel; accumulation always happens in grid order so the result does
/// not depend on scheduling.
Volume sw_predict(std::span<const Volume> channels, const Segmenter& segmenter, const WindowConfig& cfg,
                  int workers = 1);

}  // namespace volseg
