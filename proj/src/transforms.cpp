#include "volseg/transforms.hpp"

#include <algorithm>
#include <cmath>

namespace volseg {

double percentile(std::vector<float> values, double pct) {
  if (values.empty()) fail(ErrorKind::InvalidArgument, "percentile of empty set");
  const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(rank));
  const double frac = rank - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return a + frac * (b - a);
}

Volume percentile_normalize(const Volume& v, double lo_pct, double hi_pct) {
  if (v.size() == 0) fail(ErrorKind::InvalidArgument, "cannot normalize an empty volume");
  if (!(lo_pct >= 0.0 && hi_pct <= 100.0 && lo_pct < hi_pct))
    fail(ErrorKind::InvalidArgument, "percentiles must satisfy 0 <= lo < hi <= 100");
  std::vector<float> copy(v.values().begin(), v.values().end());
  const double p_lo = percentile(copy, lo_pct);
  const double p_hi = percentile(std::move(copy), hi_pct);
  Volume out(v.dims(), 0.0f, v.spacing());
  const double range = p_hi - p_lo;
  if (!(range > 0.0)) return out;
  for (size_t i = 0; i < v.size(); ++i) {
    const double c = std::clamp(static_cast<double>(v[i]), p_lo, p_hi);
    out[i] = static_cast<float>((c - p_lo) / range);
  }
  return out;
}

void AugmentConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(p_flip) || !prob(p_rot) || !prob(p_tumor) || !prob(p_bg))
    fail(ErrorKind::InvalidArgument, "augmentation probabilities must lie in [0,1]");
  if (std::fabs(p_tumor + p_bg - 1.0) > 1e-9)
    fail(ErrorKind::InvalidArgument, "p_tumor + p_bg must equal 1");
  if (!crop_size.valid()) fail(ErrorKind::InvalidArgument, "crop size must be >= 1 per axis");
}

CropResult biased_random_crop(const Volume& image, const BinaryMask& label, const AugmentConfig& cfg,
                              Rng& rng) {
  cfg.validate();
  require_same_dims(image.dims(), label.dims(), "biased_random_crop");
  const Dims& d = image.dims();
  const Dims& c = cfg.crop_size;
  if (c.x > d.x || c.y > d.y || c.z > d.z)
    fail(ErrorKind::InvalidArgument, "crop " + to_string(c) + " larger than volume " + to_string(d));

  CropResult r;
  const size_t n_fg = label.count();
  const size_t n_bg = label.size() - n_fg;
  bool want_tumor = rng.bernoulli(cfg.p_tumor);
  if (want_tumor && n_fg == 0) {
    r.warnings.push_back("tumor-centered crop requested but label is empty; using background center");
    want_tumor = false;
  } else if (!want_tumor && n_bg == 0) {
    r.warnings.push_back("background-centered crop requested but label is all foreground; using tumor center");
    want_tumor = true;
  }
  // k-th voxel of the chosen class in linear order.
  uint64_t k = rng.below(want_tumor ? n_fg : n_bg);
  size_t chosen = 0;
  for (size_t i = 0; i < label.size(); ++i) {
    if (label[i] == want_tumor) {
      if (k == 0) {
        chosen = i;
        break;
      }
      --k;
    }
  }
  r.center = unravel(d, chosen);
  r.tumor_centered = want_tumor;
  for (int a = 0; a < 3; ++a) r.origin[a] = std::clamp<int64_t>(r.center[a] - c[a] / 2, 0, d[a] - c[a]);
  r.image = extract(image, r.origin, c);
  r.label = extract(label, r.origin, c);
  return r;
}

namespace {

Index3 center_origin(const Dims& d, Dims& size) {
  Index3 o;
  for (int a = 0; a < 3; ++a) {
    size[a] = std::min(size[a], d[a]);
    o[a] = (d[a] - size[a]) / 2;
  }
  return o;
}

// Source coordinate for output voxel p under op, given the input dims.
Index3 source_of(const Index3& p, const Dims& d, const AxisOp& op) {
  Index3 s = p;
  if (op.kind == AxisOp::Kind::Flip) {
    s[op.axis] = d[op.axis] - 1 - p[op.axis];
    return s;
  }
  const int u = op.axis == 0 ? 1 : 0;
  const int v = op.axis == 2 ? 1 : 2;
  const int64_t nu = d[u];
  const int64_t nv = d[v];
  switch (op.quarter_turns) {
    case 1:  // out(a,b) = in(b, n-1-a)
      s[u] = p[v];
      s[v] = nu - 1 - p[u];
      break;
    case 2:
      s[u] = nu - 1 - p[u];
      s[v] = nv - 1 - p[v];
      break;
    case 3:  // out(a,b) = in(n-1-b, a)
      s[u] = nv - 1 - p[v];
      s[v] = p[u];
      break;
    default:
      fail(ErrorKind::InvalidArgument, "quarter_turns must be 1, 2 or 3");
  }
  return s;
}

void check_op(const Dims& d, const AxisOp& op) {
  if (op.axis < 0 || op.axis > 2) fail(ErrorKind::InvalidArgument, "axis must be 0, 1 or 2");
  if (op.kind == AxisOp::Kind::Rotate && op.quarter_turns != 2) {
    const int u = op.axis == 0 ? 1 : 0;
    const int v = op.axis == 2 ? 1 : 2;
    if (d[u] != d[v]) fail(ErrorKind::Shape, "odd quarter turns need a square plane");
  }
}

template <typename Grid, typename Get, typename Put>
void remap(const Grid& in, const AxisOp& op, Get get, Put put) {
  const Dims& d = in.dims();
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) put(linear_index(d, x, y, z), get(source_of({x, y, z}, d, op)));
}

}  // namespace

Volume center_crop(const Volume& v, const Dims& size) {
  Dims s = size;
  const Index3 o = center_origin(v.dims(), s);
  return extract(v, o, s);
}

BinaryMask center_crop(const BinaryMask& m, const Dims& size) {
  Dims s = size;
  const Index3 o = center_origin(m.dims(), s);
  return extract(m, o, s);
}

Volume apply_axis_op(const Volume& v, const AxisOp& op) {
  check_op(v.dims(), op);
  Volume out(v.dims(), 0.0f, v.spacing());
  remap(v, op, [&](const Index3& s) { return v.at(s); }, [&](size_t i, float val) { out[i] = val; });
  return out;
}

BinaryMask apply_axis_op(const BinaryMask& m, const AxisOp& op) {
  check_op(m.dims(), op);
  BinaryMask out(m.dims(), false, m.spacing());
  remap(m, op, [&](const Index3& s) { return m.at(s); }, [&](size_t i, bool val) { out.set(i, val); });
  return out;
}

FlipRotateResult random_flip_rotate(const Volume& image, const BinaryMask& label,
                                    const AugmentConfig& cfg, Rng& rng) {
  require_same_dims(image.dims(), label.dims(), "random_flip_rotate");
  FlipRotateResult r{image, label, {}, {}};
  const Dims& d = image.dims();
  for (int axis = 0; axis < 3; ++axis) {
    if (rng.bernoulli(cfg.p_flip)) r.applied.push_back({AxisOp::Kind::Flip, axis, 0});
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (!rng.bernoulli(cfg.p_rot)) continue;
    int k = static_cast<int>(rng.below(3)) + 1;
    const int u = axis == 0 ? 1 : 0;
    const int v = axis == 2 ? 1 : 2;
    if (d[u] != d[v] && k != 2) {
      r.warnings.push_back("rotation about axis " + std::to_string(axis) +
                           " restricted to 180 degrees on a non-square plane");
      k = 2;
    }
    r.applied.push_back({AxisOp::Kind::Rotate, axis, k});
  }
  for (const AxisOp& op : r.applied) {
    r.image = apply_axis_op(r.image, op);
    r.label = apply_axis_op(r.label, op);
  }
  return r;
}

}  // namespace volseg
