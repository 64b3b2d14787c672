#pragma once

#include <vector>

#include "volseg/volume.hpp"

namespace volseg {

/// Exact squared Euclidean distance from every voxel center to the nearest
/// site voxel center, physical units given by `spacing`. Separable lower
/// envelope of parabolas (Felzenszwalb & Huttenlocher), linear in the voxel
/// count. When `exterior_is_site` is set, every position just outside the
/// grid also counts as a site. Voxels with no reachable site get +inf.
std::vector<double> squared_distance_to(const BinaryMask& sites, const Spacing& spacing,
                                        bool exterior_is_site);

/// Distance from each foreground voxel to the nearest voxel outside the
/// mask, where the region beyond the grid counts as outside. Zero on
/// background. A single isolated voxel therefore has distance 1.
std::vector<double> euclidean_distance_transform(const BinaryMask& mask, const Spacing& spacing = {});

}  // namespace volseg
