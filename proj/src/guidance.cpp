#include "volseg/guidance.hpp"

#include <algorithm>
#include <cmath>

#include "volseg/distance_transform.hpp"

namespace volseg {

std::string to_string(ClickClass c) { return c == ClickClass::Tumor ? "tumor" : "background"; }

ClickClass parse_click_class(const std::string& s) {
  if (s == "tumor") return ClickClass::Tumor;
  if (s == "background") return ClickClass::Background;
  fail(ErrorKind::InvalidArgument, "unknown click class '" + s + "' (expected tumor or background)");
}

void ClickSet::add(const Click& c) {
  if (!clicks_.empty() && c.iteration < clicks_.back().iteration)
    fail(ErrorKind::InvalidArgument, "click iteration " + std::to_string(c.iteration) +
                                         " precedes previous click iteration " +
                                         std::to_string(clicks_.back().iteration));
  if (c.iteration < 0) fail(ErrorKind::InvalidArgument, "click iteration must be non-negative");
  clicks_.push_back(c);
}

void ClickSet::remove_last() {
  if (clicks_.empty()) fail(ErrorKind::InvalidArgument, "no click to remove");
  clicks_.pop_back();
}

size_t ClickSet::count(ClickClass cls) const noexcept {
  return static_cast<size_t>(std::count_if(clicks_.begin(), clicks_.end(), [&](const Click& c) { return c.cls == cls; }));
}

void stamp_click(Volume& channel, const Index3& pos) {
  const Dims& d = channel.dims();
  if (!in_bounds(d, pos)) fail(ErrorKind::Shape, "click " + to_string(pos) + " outside volume " + to_string(d));
  channel.at(pos) = 1.0f;
  for (int axis = 0; axis < 3; ++axis)
    for (int step : {-1, 1}) {
      Index3 q = pos;
      q[axis] += step;
      if (in_bounds(d, q)) channel.at(q) = 1.0f;
    }
}

GuidanceChannels encode_clicks(const ClickSet& clicks, const Dims& dims, const Spacing& spacing) {
  GuidanceChannels g{Volume(dims, 0.0f, spacing), Volume(dims, 0.0f, spacing)};
  for (const Click& c : clicks) stamp_click(c.cls == ClickClass::Tumor ? g.tumor : g.background, c.pos);
  return g;
}

ErrorMasks error_masks(const BinaryMask& pred, const BinaryMask& label) {
  require_same_dims(pred.dims(), label.dims(), "error_masks");
  ErrorMasks e{BinaryMask(label.dims(), false, label.spacing()), BinaryMask(label.dims(), false, label.spacing())};
  for (size_t i = 0; i < label.size(); ++i) {
    e.under.set(i, label[i] && !pred[i]);
    e.over.set(i, pred[i] && !label[i]);
  }
  return e;
}

std::optional<Click> sample_click(const BinaryMask& mask, ClickClass cls, int iteration, Rng& rng) {
  std::vector<size_t> support;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) support.push_back(i);
  if (support.empty()) return std::nullopt;
  if (support.size() == 1) return Click{unravel(mask.dims(), support[0]), cls, iteration};

  const std::vector<double> edt = euclidean_distance_transform(mask);
  double dmax = 0.0;
  for (size_t i : support) dmax = std::max(dmax, edt[i]);
  // Shifting by the maximum leaves the normalized weights unchanged and
  // keeps exp() finite on large masks.
  std::vector<double> cumulative(support.size());
  double total = 0.0;
  for (size_t k = 0; k < support.size(); ++k) {
    total += std::exp(edt[support[k]] - dmax);
    cumulative[k] = total;
  }
  const double u = rng.uniform01() * total;
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  const size_t k = std::min(static_cast<size_t>(it - cumulative.begin()), support.size() - 1);
  return Click{unravel(mask.dims(), support[k]), cls, iteration};
}

}  // namespace volseg
