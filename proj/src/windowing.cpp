#include "volseg/windowing.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace volseg {

void WindowConfig::validate() const {
  if (!window.valid()) fail(ErrorKind::InvalidArgument, "window dims must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0)) fail(ErrorKind::InvalidArgument, "overlap must lie in [0,1)");
  if (weighting == Weighting::Gaussian && !(sigma_scale > 0.0))
    fail(ErrorKind::InvalidArgument, "sigma_scale must be positive");
}

std::vector<int64_t> axis_origins(int64_t length, int64_t window, double overlap) {
  const int64_t w = std::min(window, length);
  const auto stride = std::max<int64_t>(1, static_cast<int64_t>(std::floor(static_cast<double>(w) * (1.0 - overlap))));
  std::vector<int64_t> out{0};
  int64_t o = 0;
  while (o + w < length) {
    o = std::min(o + stride, length - w);
    out.push_back(o);
  }
  return out;
}

WindowGrid plan_windows(const Dims& volume_dims, const WindowConfig& cfg) {
  cfg.validate();
  if (!volume_dims.valid()) fail(ErrorKind::InvalidArgument, "volume dims must be >= 1");
  WindowGrid g;
  g.volume_dims = volume_dims;
  std::vector<int64_t> per_axis[3];
  static const char* kAxis = "xyz";
  for (int a = 0; a < 3; ++a) {
    g.window_dims[a] = std::min(cfg.window[a], volume_dims[a]);
    if (g.window_dims[a] < cfg.window[a])
      g.notes.push_back(std::string("window shrunk along ") + kAxis[a] + " from " +
                        std::to_string(cfg.window[a]) + " to " + std::to_string(g.window_dims[a]));
    per_axis[a] = axis_origins(volume_dims[a], cfg.window[a], cfg.overlap);
  }
  for (int64_t z : per_axis[2])
    for (int64_t y : per_axis[1])
      for (int64_t x : per_axis[0]) g.origins.push_back({x, y, z});
  return g;
}

ImportanceMap importance_map(const Dims& window_dims, Weighting weighting, double sigma_scale) {
  if (!window_dims.valid()) fail(ErrorKind::InvalidArgument, "window dims must be >= 1");
  ImportanceMap m{window_dims, std::vector<double>(window_dims.count(), 1.0)};
  if (weighting == Weighting::Constant) return m;
  if (!(sigma_scale > 0.0)) fail(ErrorKind::InvalidArgument, "sigma_scale must be positive");

  std::vector<double> axis[3];
  double peak = 1.0;
  for (int a = 0; a < 3; ++a) {
    const int64_t n = window_dims[a];
    const double center = static_cast<double>(n - 1) / 2.0;
    const double sigma = sigma_scale * static_cast<double>(n);
    axis[a].resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(i) - center;
      axis[a][static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    peak *= *std::max_element(axis[a].begin(), axis[a].end());
  }
  for (int64_t z = 0; z < window_dims.z; ++z)
    for (int64_t y = 0; y < window_dims.y; ++y)
      for (int64_t x = 0; x < window_dims.x; ++x) {
        const double w = axis[0][static_cast<size_t>(x)] * axis[1][static_cast<size_t>(y)] *
                         axis[2][static_cast<size_t>(z)] / peak;
        m.weights[linear_index(window_dims, x, y, z)] = std::max(w, kMinImportance);
      }
  return m;
}

BlendAccumulator::BlendAccumulator(const Dims& volume_dims)
    : dims_(volume_dims), weighted_sum_(volume_dims.count(), 0.0), weight_sum_(volume_dims.count(), 0.0) {}

void BlendAccumulator::add(const Index3& origin, const ImportanceMap& map, std::span<const float> prediction) {
  const Dims& w = map.window_dims;
  if (prediction.size() != w.count())
    fail(ErrorKind::Shape, "prediction size " + std::to_string(prediction.size()) + " does not match window " +
                               to_string(w));
  if (origin.x < 0 || origin.y < 0 || origin.z < 0 || origin.x + w.x > dims_.x || origin.y + w.y > dims_.y ||
      origin.z + w.z > dims_.z)
    fail(ErrorKind::Shape, "window at " + to_string(origin) + " outside volume " + to_string(dims_));
  for (int64_t z = 0; z < w.z; ++z)
    for (int64_t y = 0; y < w.y; ++y) {
      const size_t src = linear_index(w, 0, y, z);
      const size_t dst = linear_index(dims_, origin.x, origin.y + y, origin.z + z);
      for (int64_t x = 0; x < w.x; ++x) {
        const double wt = map.weights[src + static_cast<size_t>(x)];
        weighted_sum_[dst + static_cast<size_t>(x)] += wt * prediction[src + static_cast<size_t>(x)];
        weight_sum_[dst + static_cast<size_t>(x)] += wt;
      }
    }
}

Volume BlendAccumulator::finish(const Spacing& spacing) const {
  Volume out(dims_, 0.0f, spacing);
  for (size_t i = 0; i < out.size(); ++i) {
    if (!(weight_sum_[i] > 0.0)) fail(ErrorKind::Shape, "voxel " + to_string(unravel(dims_, i)) + " not covered");
    out[i] = static_cast<float>(weighted_sum_[i] / weight_sum_[i]);
  }
  return out;
}

Volume blend(const WindowGrid& grid, const ImportanceMap& map,
             std::span<const std::vector<float>> per_window_predictions) {
  if (per_window_predictions.size() != grid.size())
    fail(ErrorKind::Shape, std::to_string(per_window_predictions.size()) + " predictions for " +
                               std::to_string(grid.size()) + " windows");
  if (!(map.window_dims == grid.window_dims)) fail(ErrorKind::Shape, "importance map does not match window dims");
  BlendAccumulator acc(grid.volume_dims);
  for (size_t w = 0; w < grid.size(); ++w) acc.add(grid.origins[w], map, per_window_predictions[w]);
  return acc.finish();
}

std::vector<float> stack_window(std::span<const Volume> channels, const Index3& origin, const Dims& window) {
  std::vector<float> data;
  data.reserve(window.count() * channels.size());
  for (const Volume& ch : channels) {
    const Volume cut = extract(ch, origin, window);
    data.insert(data.end(), cut.values().begin(), cut.values().end());
  }
  return data;
}

Volume sw_predict(std::span<const Volume> channels, const Segmenter& segmenter, const WindowConfig& cfg,
                  int workers) {
  if (channels.empty()) fail(ErrorKind::InvalidArgument, "sw_predict needs at least one channel");
  const Dims& dims = channels[0].dims();
  for (const Volume& c : channels) require_same_dims(c.dims(), dims, "sw_predict channels");

  const WindowGrid grid = plan_windows(dims, cfg);
  const ImportanceMap map = importance_map(grid.window_dims, cfg.weighting, cfg.sigma_scale);
  BlendAccumulator acc(dims);

  auto run_one = [&](size_t w) {
    PatchRequest req;
    req.id = "w" + std::to_string(w);
    req.dims = grid.window_dims;
    req.channels = static_cast<int>(channels.size());
    req.data = stack_window(channels, grid.origins[w], grid.window_dims);
    req.origin = grid.origins[w];
    req.volume_dims = dims;
    req.full_channels = channels;
    try {
      PatchResponse resp = segmenter.predict(req);
      validate_response(req, resp);
      return std::move(resp.data);
    } catch (const Error& e) {
      throw Error(e.kind(), "window " + std::to_string(w) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::Backend, "window " + std::to_string(w) + ": " + e.what());
    }
  };

  const size_t batch = static_cast<size_t>(std::max(1, workers));
  std::vector<std::vector<float>> results(batch);
  for (size_t start = 0; start < grid.size(); start += batch) {
    const size_t n = std::min(batch, grid.size() - start);
    if (n == 1) {
      results[0] = run_one(start);
    } else {
      std::vector<std::exception_ptr> errors(n);
      std::atomic<size_t> next{0};
      auto worker = [&] {
        for (size_t i = next++; i < n; i = next++) {
          try {
            results[i] = run_one(start + i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      };
      std::vector<std::jthread> pool;
      for (size_t t = 0; t < n; ++t) pool.emplace_back(worker);
      pool.clear();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    for (size_t i = 0; i < n; ++i) acc.add(grid.origins[start + i], map, results[i]);
  }
  return acc.finish(channels[0].spacing());
}

}  // namespace volseg
