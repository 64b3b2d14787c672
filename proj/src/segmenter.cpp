#include "volseg/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "volseg/distance_transform.hpp"

namespace volseg {

void validate_request(const PatchRequest& req) {
  if (!req.dims.valid()) fail(ErrorKind::Protocol, "request " + req.id + ": invalid dims");
  if (req.channels < 1) fail(ErrorKind::Protocol, "request " + req.id + ": channel count must be >= 1");
  if (req.data.size() != req.dims.count() * static_cast<size_t>(req.channels))
    fail(ErrorKind::Protocol, "request " + req.id + ": data length " + std::to_string(req.data.size()) +
                                  " does not match " + std::to_string(req.channels) + "x" +
                                  to_string(req.dims));
  for (float v : req.data)
    if (!std::isfinite(v)) fail(ErrorKind::Protocol, "request " + req.id + ": non-finite input");
}

void validate_response(const PatchRequest& req, const PatchResponse& resp) {
  if (resp.id != req.id)
    fail(ErrorKind::Protocol, "response id '" + resp.id + "' does not match request '" + req.id + "'");
  if (!(resp.dims == req.dims))
    fail(ErrorKind::Protocol, "request " + req.id + ": response dims " + to_string(resp.dims) +
                                  " differ from " + to_string(req.dims));
  if (resp.data.size() != req.dims.count())
    fail(ErrorKind::Protocol, "request " + req.id + ": response holds " + std::to_string(resp.data.size()) +
                                  " values, expected " + std::to_string(req.dims.count()));
  for (float v : resp.data)
    if (!(v >= 0.0f && v <= 1.0f))
      fail(ErrorKind::Protocol, "request " + req.id + ": probability outside [0,1]");
}

namespace {

PatchResponse blank_response(const PatchRequest& req) {
  return {req.id, req.dims, std::vector<float>(req.dims.count(), 0.0f)};
}

const Index3& require_origin(const PatchRequest& req, const Dims& label_dims) {
  if (!req.origin) fail(ErrorKind::InvalidArgument, "request " + req.id + ": label oracles need the window origin");
  if (req.volume_dims && !(*req.volume_dims == label_dims))
    fail(ErrorKind::Shape, "request " + req.id + ": volume dims " + to_string(*req.volume_dims) +
                               " differ from oracle label " + to_string(label_dims));
  const Index3& o = *req.origin;
  if (o.x < 0 || o.y < 0 || o.z < 0 || o.x + req.dims.x > label_dims.x || o.y + req.dims.y > label_dims.y ||
      o.z + req.dims.z > label_dims.z)
    fail(ErrorKind::Shape, "request " + req.id + ": window outside oracle label");
  return o;
}

}  // namespace

ConstantSegmenter::ConstantSegmenter(float value) : value_(value) {
  if (!(value >= 0.0f && value <= 1.0f)) fail(ErrorKind::InvalidArgument, "constant probability must be in [0,1]");
}

PatchResponse ConstantSegmenter::predict(const PatchRequest& req) const {
  validate_request(req);
  PatchResponse r = blank_response(req);
  std::fill(r.data.begin(), r.data.end(), value_);
  return r;
}

PatchResponse PassThroughSegmenter::predict(const PatchRequest& req) const {
  validate_request(req);
  PatchResponse r = blank_response(req);
  const auto img = req.channel(kImageChannel);
  for (size_t i = 0; i < img.size(); ++i) r.data[i] = std::clamp(img[i], 0.0f, 1.0f);
  return r;
}

PatchResponse ThresholdSegmenter::predict(const PatchRequest& req) const {
  validate_request(req);
  PatchResponse r = blank_response(req);
  const auto img = req.channel(kImageChannel);
  for (size_t i = 0; i < img.size(); ++i) r.data[i] = img[i] > threshold_ ? 1.0f : 0.0f;
  return r;
}

OracleSegmenter::OracleSegmenter(BinaryMask label) : label_(std::move(label)) {}

PatchResponse OracleSegmenter::predict(const PatchRequest& req) const {
  validate_request(req);
  const Index3& o = require_origin(req, label_.dims());
  PatchResponse r = blank_response(req);
  const Dims& w = req.dims;
  for (int64_t z = 0; z < w.z; ++z)
    for (int64_t y = 0; y < w.y; ++y)
      for (int64_t x = 0; x < w.x; ++x)
        r.data[linear_index(w, x, y, z)] = label_.at(o.x + x, o.y + y, o.z + z) ? 1.0f : 0.0f;
  return r;
}

std::vector<int32_t> connected_components(const BinaryMask& m, int& count) {
  const Dims& d = m.dims();
  std::vector<int32_t> id(m.size(), -1);
  std::vector<size_t> stack;
  count = 0;
  for (size_t seed = 0; seed < m.size(); ++seed) {
    if (!m[seed] || id[seed] >= 0) continue;
    id[seed] = count;
    stack.push_back(seed);
    while (!stack.empty()) {
      const size_t cur = stack.back();
      stack.pop_back();
      const Index3 p = unravel(d, cur);
      for (int axis = 0; axis < 3; ++axis)
        for (int step : {-1, 1}) {
          Index3 q = p;
          q[axis] += step;
          if (!in_bounds(d, q)) continue;
          const size_t qi = linear_index(d, q.x, q.y, q.z);
          if (m[qi] && id[qi] < 0) {
            id[qi] = count;
            stack.push_back(qi);
          }
        }
    }
    ++count;
  }
  return id;
}

ClickResponsiveOracle::ClickResponsiveOracle(BinaryMask label, const ClickResponsiveOptions& opts)
    : label_(std::move(label)) {
  if (label_.empty()) fail(ErrorKind::InvalidArgument, "click-responsive oracle needs a non-empty label");
  if (opts.suppressed_components < 0 || opts.fp_blobs < 0 || opts.min_blob_radius < 1 ||
      opts.max_blob_radius < opts.min_blob_radius)
    fail(ErrorKind::InvalidArgument, "invalid click-responsive oracle options");
  const Dims& d = label_.dims();
  Rng rng(opts.seed);

  int n_comp = 0;
  component_of_ = connected_components(label_, n_comp);
  component_voxels_.assign(static_cast<size_t>(n_comp), {});
  for (size_t i = 0; i < component_of_.size(); ++i)
    if (component_of_[i] >= 0) component_voxels_[static_cast<size_t>(component_of_[i])].push_back(i);

  std::vector<int> order(static_cast<size_t>(n_comp));
  std::iota(order.begin(), order.end(), 0);
  const int n_sup = std::min(opts.suppressed_components, n_comp);
  for (int i = 0; i < n_sup; ++i) {
    const auto j = static_cast<size_t>(i) + rng.below(static_cast<uint64_t>(n_comp - i));
    std::swap(order[static_cast<size_t>(i)], order[j]);
  }
  suppressed_.assign(order.begin(), order.begin() + n_sup);
  std::sort(suppressed_.begin(), suppressed_.end());
  suppressed_slot_.assign(static_cast<size_t>(n_comp), -1);
  for (size_t s = 0; s < suppressed_.size(); ++s) suppressed_slot_[static_cast<size_t>(suppressed_[s])] = static_cast<int32_t>(s);

  // Blobs keep a gap of at least two voxels to the label so that a radius-1
  // background click inside a blob never touches tumor.
  const std::vector<double> to_label = squared_distance_to(label_, {}, false);
  blob_of_.assign(label_.size(), -1);
  struct Placed {
    Index3 c;
    int r;
  };
  std::vector<Placed> placed;
  constexpr int kAttempts = 2000;
  for (int b = 0; b < opts.fp_blobs; ++b) {
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      const int r = opts.min_blob_radius +
                    static_cast<int>(rng.below(static_cast<uint64_t>(opts.max_blob_radius - opts.min_blob_radius + 1)));
      if (d.x < 2 * r + 1 || d.y < 2 * r + 1 || d.z < 2 * r + 1) continue;
      Index3 c;
      for (int a = 0; a < 3; ++a) c[a] = r + static_cast<int64_t>(rng.below(static_cast<uint64_t>(d[a] - 2 * r)));
      bool ok = true;
      for (const Placed& p : placed) {
        const double dx = double(c.x - p.c.x), dy = double(c.y - p.c.y), dz = double(c.z - p.c.z);
        if (std::sqrt(dx * dx + dy * dy + dz * dz) <= r + p.r + 2) ok = false;
      }
      std::vector<size_t> voxels;
      for (int64_t z = -r; ok && z <= r; ++z)
        for (int64_t y = -r; ok && y <= r; ++y)
          for (int64_t x = -r; ok && x <= r; ++x) {
            if (x * x + y * y + z * z > r * r) continue;
            const size_t i = linear_index(d, c.x + x, c.y + y, c.z + z);
            if (to_label[i] < 4.0) ok = false;
            voxels.push_back(i);
          }
      if (!ok) continue;
      const auto id = static_cast<int32_t>(blob_voxels_.size());
      for (size_t i : voxels) blob_of_[i] = id;
      blob_voxels_.push_back(std::move(voxels));
      placed.push_back({c, r});
      break;
    }
  }
}

template <typename Lookup>
ClickResponsiveOracle::Active ClickResponsiveOracle::resolve(Lookup guidance_at) const {
  Active a;
  a.restored.assign(suppressed_.size(), false);
  a.removed.assign(blob_voxels_.size(), false);
  for (size_t s = 0; s < suppressed_.size(); ++s)
    for (size_t v : component_voxels_[static_cast<size_t>(suppressed_[s])])
      if (guidance_at(kTumorChannel, v) > 0.5f) {
        a.restored[s] = true;
        break;
      }
  for (size_t b = 0; b < blob_voxels_.size(); ++b)
    for (size_t v : blob_voxels_[b])
      if (guidance_at(kBackgroundChannel, v) > 0.5f) {
        a.removed[b] = true;
        break;
      }
  return a;
}

bool ClickResponsiveOracle::predicted(size_t voxel, const Active& a) const {
  const int32_t comp = component_of_[voxel];
  if (comp >= 0) {
    const int32_t slot = suppressed_slot_[static_cast<size_t>(comp)];
    return slot < 0 || a.restored[static_cast<size_t>(slot)];
  }
  const int32_t blob = blob_of_[voxel];
  return blob >= 0 && !a.removed[static_cast<size_t>(blob)];
}

PatchResponse ClickResponsiveOracle::predict(const PatchRequest& req) const {
  validate_request(req);
  if (req.channels < kModelChannels)
    fail(ErrorKind::Protocol, "request " + req.id + ": click-responsive oracle needs 3 channels");
  const Index3& o = require_origin(req, label_.dims());
  const Dims& d = label_.dims();
  const Dims& w = req.dims;

  Active active;
  if (req.full_channels.size() >= static_cast<size_t>(kModelChannels)) {
    for (int c = 0; c < kModelChannels; ++c)
      require_same_dims(req.full_channels[static_cast<size_t>(c)].dims(), d, "click-responsive oracle");
    active = resolve([&](int c, size_t v) { return req.full_channels[static_cast<size_t>(c)][v]; });
  } else {
    const auto tumor = req.channel(kTumorChannel);
    const auto bg = req.channel(kBackgroundChannel);
    active = resolve([&](int c, size_t v) {
      const Index3 g = unravel(d, v);
      const Index3 l{g.x - o.x, g.y - o.y, g.z - o.z};
      if (!in_bounds(w, l)) return 0.0f;
      const size_t li = linear_index(w, l.x, l.y, l.z);
      return c == kTumorChannel ? tumor[li] : bg[li];
    });
  }

  PatchResponse r = blank_response(req);
  for (int64_t z = 0; z < w.z; ++z)
    for (int64_t y = 0; y < w.y; ++y)
      for (int64_t x = 0; x < w.x; ++x)
        r.data[linear_index(w, x, y, z)] =
            predicted(linear_index(d, o.x + x, o.y + y, o.z + z), active) ? 1.0f : 0.0f;
  return r;
}

BinaryMask ClickResponsiveOracle::predict_volume(const Volume& tumor_guidance,
                                                 const Volume& background_guidance) const {
  require_same_dims(tumor_guidance.dims(), label_.dims(), "predict_volume");
  require_same_dims(background_guidance.dims(), label_.dims(), "predict_volume");
  const Active a = resolve(
      [&](int c, size_t v) { return c == kTumorChannel ? tumor_guidance[v] : background_guidance[v]; });
  BinaryMask out(label_.dims(), false, label_.spacing());
  for (size_t i = 0; i < out.size(); ++i) out.set(i, predicted(i, a));
  return out;
}

}  // namespace volseg
