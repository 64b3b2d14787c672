#pragma once

#include <array>
#include <string>
#include <vector>

#include "volseg/random.hpp"
#include "volseg/volume.hpp"

namespace volseg {

/// Clips to the [lo_pct, hi_pct] percentiles of the whole volume (linear
/// interpolation between order statistics) and rescales to [0, 1]. A
/// degenerate range maps everything to 0.
Volume percentile_normalize(const Volume& v, double lo_pct = 0.05, double hi_pct = 99.95);

/// Percentile with linear interpolation between closest ranks, the same
/// definition numpy uses by default.
double percentile(std::vector<float> values, double pct);

struct AugmentConfig {
  double p_flip = 0.1;
  double p_rot = 0.1;
  Dims crop_size{224, 224, 224};
  double p_tumor = 0.6;
  double p_bg = 0.4;

  void validate() const;
};

struct CropResult {
  Volume image;
  BinaryMask label;
  Index3 origin;
  Index3 center;
  bool tumor_centered = false;
  std::vector<std::string> warnings;
};

/// Crop centered on a tumor voxel with probability p_tumor, otherwise on a
/// background voxel. The center is clamped so the crop stays in-bounds.
CropResult biased_random_crop(const Volume& image, const BinaryMask& label, const AugmentConfig& cfg,
                              Rng& rng);

/// Deterministic center crop; crop dims larger than the volume are clamped.
Volume center_crop(const Volume& v, const Dims& size);
BinaryMask center_crop(const BinaryMask& m, const Dims& size);

/// One elementary transform applied by random_flip_rotate.
struct AxisOp {
  enum class Kind { Flip, Rotate } kind;
  int axis;              // 0=x, 1=y, 2=z
  int quarter_turns = 0; // rotations only, 1..3
};

struct FlipRotateResult {
  Volume image;
  BinaryMask label;
  std::vector<AxisOp> applied;
  std::vector<std::string> warnings;
};

/// Per axis: flip with p_flip. Then per axis: rotate by k quarter turns
/// (k uniform in {1,2,3}) within the plane perpendicular to that axis with
/// p_rot. Non-square planes only admit k=2 so dims never change.
FlipRotateResult random_flip_rotate(const Volume& image, const BinaryMask& label,
                                    const AugmentConfig& cfg, Rng& rng);

/// Applies a single op. Quarter turn in plane (u, v) of size n:
/// out(n-1-v, u) = in(u, v), where (u, v) are the two remaining axes in
/// increasing order.
Volume apply_axis_op(const Volume& v, const AxisOp& op);
BinaryMask apply_axis_op(const BinaryMask& m, const AxisOp& op);

}  // namespace volseg
