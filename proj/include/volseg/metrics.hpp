#pragma once

#include "volseg/volume.hpp"

namespace volseg {

inline constexpr double kDefaultNsdToleranceMm = 2.0;

/// 2|P∩L| / (|P|+|L|); 1 when both masks are empty.
double dice(const BinaryMask& pred, const BinaryMask& label);

/// Foreground voxels with at least one face neighbour in the background.
/// Voxels on the grid edge count as boundary.
BinaryMask boundary(const BinaryMask& m);

/// Normalized surface Dice: the fraction of boundary voxels of either mask
/// lying within `tolerance_mm` of the other mask's boundary (spacing-aware
/// Euclidean distance between voxel centers). 1 if both masks are empty,
/// 0 if exactly one is.
double nsd(const BinaryMask& pred, const BinaryMask& label, double tolerance_mm = kDefaultNsdToleranceMm);

}  // namespace volseg
