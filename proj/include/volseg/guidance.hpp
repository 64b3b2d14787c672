#pragma once

#include <optional>
#include <string>
#include <vector>

#include "volseg/random.hpp"
#include "volseg/volume.hpp"

namespace volseg {

enum class ClickClass { Tumor, Background };

std::string to_string(ClickClass c);
ClickClass parse_click_class(const std::string& s);

struct Click {
  Index3 pos;
  ClickClass cls = ClickClass::Tumor;
  int iteration = 0;

  friend bool operator==(const Click&, const Click&) = default;
};

/// Clicks in placement order; iteration numbers never decrease.
class ClickSet {
 public:
  void add(const Click& c);
  void remove_last();

  size_t size() const noexcept { return clicks_.size(); }
  bool empty() const noexcept { return clicks_.empty(); }
  size_t count(ClickClass cls) const noexcept;
  const Click& operator[](size_t i) const { return clicks_[i]; }
  const Click& back() const { return clicks_.back(); }
  auto begin() const noexcept { return clicks_.begin(); }
  auto end() const noexcept { return clicks_.end(); }

  friend bool operator==(const ClickSet&, const ClickSet&) = default;

 private:
  std::vector<Click> clicks_;
};

struct GuidanceChannels {
  Volume tumor;
  Volume background;
};

/// Each click marks a ball of Euclidean radius one voxel (the click voxel
/// plus its six face neighbours) with 1.0, clipped at the volume border.
/// Overlapping balls saturate. Throws Shape for out-of-bounds clicks.
GuidanceChannels encode_clicks(const ClickSet& clicks, const Dims& dims, const Spacing& spacing = {});

/// Marks one radius-1 ball in a channel.
void stamp_click(Volume& channel, const Index3& pos);

struct ErrorMasks {
  BinaryMask under;  // label and not predicted
  BinaryMask over;   // predicted and not label
};

ErrorMasks error_masks(const BinaryMask& pred, const BinaryMask& label);

/// Picks a voxel of `mask` with probability proportional to exp(edt), edt
/// being the Euclidean distance (voxel units) to the nearest voxel outside
/// the mask. Interior voxels are strongly preferred. Returns nullopt when
/// the mask is empty, meaning there is nothing to correct.
std::optional<Click> sample_click(const BinaryMask& mask, ClickClass cls, int iteration, Rng& rng);

}  // namespace volseg
