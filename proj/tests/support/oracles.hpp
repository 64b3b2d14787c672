#pragma once

// Brute-force reference implementations. Deliberately naive: quadratic
// scans over voxels and windows, no shared code with the library.

#include <optional>
#include <vector>

#include "volseg/volume.hpp"

namespace volseg::testing {

/// Distance from each foreground voxel to the nearest background voxel or
/// out-of-grid position, by exhaustive search.
std::vector<double> brute_edt(const BinaryMask& mask, const Spacing& spacing);

double brute_dice(const BinaryMask& a, const BinaryMask& b);

/// Foreground voxels with a 6-neighbour that is background or off-grid.
std::vector<Index3> brute_boundary(const BinaryMask& m);

/// Pairwise surface distances between the two boundaries.
double brute_nsd(const BinaryMask& pred, const BinaryMask& label, double tol_mm);

/// Quantile (percent) with linear interpolation on a sorted copy.
double brute_percentile(std::vector<float> values, double pct);

struct BrutePatches {
  std::optional<size_t> tumor;
  std::optional<size_t> background;
};

/// Exhaustive search over windows: lowest patch Dice among windows holding
/// the relevant error, first index on ties.
BrutePatches brute_worst_patches(const BinaryMask& pred, const BinaryMask& label, const std::vector<Index3>& origins,
                                 const Dims& window);

/// Window origins enumerated by walking the stride along each axis.
std::vector<int64_t> brute_axis_origins(int64_t len, int64_t window, double overlap);

}  // namespace volseg::testing
