#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "volseg/transforms.hpp"

using namespace volseg;
using namespace volseg::testing;

TEST(Normalize, ConstantVolumeIsZero) {
  const Volume v({3, 3, 3}, 5.0f);
  const Volume n = percentile_normalize(v);
  for (size_t i = 0; i < n.size(); ++i) EXPECT_EQ(n[i], 0.0f);
}

TEST(Normalize, MinMaxEndpoints) {
  const Volume v({2, 1, 1}, std::vector<float>{0.0f, 10.0f});
  const Volume n = percentile_normalize(v, 0.0, 100.0);
  EXPECT_EQ(n[0], 0.0f);
  EXPECT_EQ(n[1], 1.0f);
}

TEST(Normalize, MatchesSortedPercentiles) {
  std::vector<float> values(10000);
  for (size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(i);
  // Shuffle so the implementation cannot rely on sorted input.
  Rng rng(11);
  for (size_t i = values.size() - 1; i > 0; --i) std::swap(values[i], values[rng.below(i + 1)]);
  const Volume v({100, 10, 10}, values);
  const double lo = brute_percentile(values, 0.05), hi = brute_percentile(values, 99.95);
  EXPECT_NEAR(percentile(values, 0.05), lo, 1e-9);
  EXPECT_NEAR(percentile(values, 99.95), hi, 1e-9);
  const Volume n = percentile_normalize(v);
  size_t at_zero = 0, at_one = 0;
  for (size_t i = 0; i < n.size(); ++i) {
    const double expect = (std::clamp<double>(values[i], lo, hi) - lo) / (hi - lo);
    ASSERT_NEAR(n[i], expect, 1e-6);
    at_zero += n[i] == 0.0f;
    at_one += n[i] == 1.0f;
  }
  EXPECT_LE(at_zero, 10u);
  EXPECT_LE(at_one, 10u);
}

TEST(Normalize, RandomPercentilesMatchOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> values(1 + rng.below(500));
    for (float& f : values) f = static_cast<float>(rng.uniform01() * 100 - 50);
    const double pct = rng.uniform01() * 100.0;
    EXPECT_NEAR(percentile(values, pct), brute_percentile(values, pct), 1e-6);
  }
}

TEST(Normalize, IdempotentOnFullRange) {
  Rng rng(13);
  Volume v({7, 6, 5});
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(rng.uniform01() * 40.0);
  const Volume once = percentile_normalize(v, 0.0, 100.0);
  const Volume twice = percentile_normalize(once, 0.0, 100.0);
  for (size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(once[i], twice[i], 1e-6);
}

TEST(Normalize, RejectsBadPercentiles) {
  const Volume v({2, 2, 2}, 1.0f);
  EXPECT_THROW(percentile_normalize(v, 50.0, 10.0), Error);
  EXPECT_THROW(percentile_normalize(v, -1.0, 10.0), Error);
  EXPECT_THROW(percentile_normalize(v, 1.0, 101.0), Error);
}

TEST(Crop, ForcedTumorCenter) {
  Volume img({32, 32, 32});
  BinaryMask lab({32, 32, 32});
  lab.set({10, 10, 10}, true);
  AugmentConfig cfg;
  cfg.crop_size = {5, 5, 5};
  cfg.p_tumor = 1.0;
  cfg.p_bg = 0.0;
  Rng rng(1);
  const CropResult r = biased_random_crop(img, lab, cfg, rng);
  EXPECT_EQ(r.origin, (Index3{8, 8, 8}));
  EXPECT_TRUE(r.tumor_centered);
  EXPECT_EQ(r.label.dims(), (Dims{5, 5, 5}));
  EXPECT_TRUE(r.label.at(2, 2, 2));
}

TEST(Crop, FullSizeCropIsWholeVolume) {
  const SyntheticCase c = make_case({12, 10, 8}, 2, 4);
  AugmentConfig cfg;
  cfg.crop_size = {12, 10, 8};
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const CropResult r = biased_random_crop(c.image, c.label, cfg, rng);
    EXPECT_EQ(r.origin, (Index3{0, 0, 0}));
    EXPECT_EQ(r.image, c.image);
    EXPECT_EQ(r.label, c.label);
  }
}

TEST(Crop, TumorFrequencyMonteCarlo) {
  const SyntheticCase c = make_case({24, 24, 24}, 3, 5);
  AugmentConfig cfg;
  cfg.crop_size = {8, 8, 8};
  Rng rng(2024);
  int tumor = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const CropResult r = biased_random_crop(c.image, c.label, cfg, rng);
    tumor += r.tumor_centered;
    ASSERT_EQ(c.label.at(r.center), r.tumor_centered);
  }
  EXPECT_NEAR(static_cast<double>(tumor) / n, 0.6, 0.02);
}

TEST(Crop, EmptyLabelFallsBackWithWarning) {
  const Volume img({10, 10, 10});
  const BinaryMask lab({10, 10, 10});
  AugmentConfig cfg;
  cfg.crop_size = {4, 4, 4};
  cfg.p_tumor = 1.0;
  cfg.p_bg = 0.0;
  Rng rng(3);
  const CropResult r = biased_random_crop(img, lab, cfg, rng);
  EXPECT_FALSE(r.tumor_centered);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Crop, ImageAndLabelStayPaired) {
  SyntheticCase c = make_case({20, 18, 16}, 3, 6);
  // Tag every voxel with its own index so any misalignment shows.
  for (size_t i = 0; i < c.image.size(); ++i) c.image[i] = static_cast<float>(i);
  AugmentConfig cfg;
  cfg.crop_size = {7, 6, 5};
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const CropResult r = biased_random_crop(c.image, c.label, cfg, rng);
    for (size_t i = 0; i < r.image.size(); ++i) {
      const Index3 src = unravel(c.image.dims(), static_cast<size_t>(r.image[i]));
      ASSERT_EQ(c.label.at(src), r.label[i]);
    }
  }
}

TEST(Crop, Errors) {
  const SyntheticCase c = make_case({8, 8, 8}, 1, 1);
  AugmentConfig cfg;
  cfg.crop_size = {9, 8, 8};
  Rng rng(0);
  EXPECT_THROW(biased_random_crop(c.image, c.label, cfg, rng), Error);
  cfg.crop_size = {4, 4, 4};
  cfg.p_tumor = 0.7;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(CenterCrop, TakesMiddle) {
  Volume v({6, 6, 6});
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  const Volume c = center_crop(v, {2, 2, 2});
  EXPECT_EQ(c.at(0, 0, 0), v.at(2, 2, 2));
  const Volume big = center_crop(v, {10, 4, 10});
  EXPECT_EQ(big.dims(), (Dims{6, 4, 6}));
  EXPECT_EQ(big.at(0, 0, 0), v.at(0, 1, 0));
}

namespace {

// Reference transforms written directly from the definitions.
Volume ref_flip(const Volume& in, int axis) {
  Volume out(in.dims());
  const Dims d = in.dims();
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) {
        Index3 s{x, y, z};
        s[axis] = d[axis] - 1 - s[axis];
        out.at(x, y, z) = in.at(s);
      }
  return out;
}

// One quarter turn in plane (u, v): out(n-1-v, u) = in(u, v).
Volume ref_quarter(const Volume& in, int axis) {
  const int u = axis == 0 ? 1 : 0, w = axis == 2 ? 1 : 2;
  const Dims d = in.dims();
  Volume out(d);
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) {
        const Index3 p{x, y, z};
        Index3 q = p;
        q[u] = d[u] - 1 - p[w];
        q[w] = p[u];
        out.at(q) = in.at(p);
      }
  return out;
}

Volume asymmetric(const Dims& d) {
  Volume v(d);
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i * 7 % 101) + 0.25f * static_cast<float>(i);
  return v;
}

}  // namespace

TEST(FlipRotate, NoOpWithZeroProbabilities) {
  const SyntheticCase c = make_case({8, 8, 8}, 2, 2);
  AugmentConfig cfg;
  cfg.p_flip = 0.0;
  cfg.p_rot = 0.0;
  Rng rng(1);
  const FlipRotateResult r = random_flip_rotate(c.image, c.label, cfg, rng);
  EXPECT_EQ(r.image, c.image);
  EXPECT_EQ(r.label, c.label);
  EXPECT_TRUE(r.applied.empty());
}

TEST(FlipRotate, DoubleFlipIsIdentity) {
  const SyntheticCase c = make_case({9, 7, 5}, 2, 3);
  AugmentConfig cfg;
  cfg.p_flip = 1.0;
  cfg.p_rot = 0.0;
  Rng rng(1);
  const FlipRotateResult once = random_flip_rotate(c.image, c.label, cfg, rng);
  EXPECT_EQ(once.applied.size(), 3u);
  const FlipRotateResult twice = random_flip_rotate(once.image, once.label, cfg, rng);
  EXPECT_EQ(twice.image, c.image);
  EXPECT_EQ(twice.label, c.label);
}

TEST(FlipRotate, QuarterTurnMatchesDefinition) {
  const Volume v = asymmetric({5, 5, 5});
  for (int axis = 0; axis < 3; ++axis) {
    Volume expect = v;
    for (int k = 1; k <= 3; ++k) {
      expect = ref_quarter(expect, axis);
      EXPECT_EQ(apply_axis_op(v, {AxisOp::Kind::Rotate, axis, k}), expect) << "axis " << axis << " k " << k;
    }
    EXPECT_EQ(ref_quarter(expect, axis), v);
    EXPECT_EQ(apply_axis_op(v, {AxisOp::Kind::Flip, axis, 0}), ref_flip(v, axis));
  }
}

TEST(FlipRotate, SeededRunMatchesScriptedComposition) {
  const Volume v = asymmetric({8, 8, 8});
  BinaryMask m = BinaryMask::from_volume(v, 50.0f);
  AugmentConfig cfg;
  cfg.p_flip = 0.5;
  cfg.p_rot = 0.5;
  for (uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const FlipRotateResult r = random_flip_rotate(v, m, cfg, rng);
    // Replay the draws with the documented order to derive the op list.
    Rng replay(seed);
    Volume expect = v;
    size_t op = 0;
    for (int axis = 0; axis < 3; ++axis)
      if (replay.bernoulli(cfg.p_flip)) {
        ASSERT_LT(op, r.applied.size());
        EXPECT_EQ(r.applied[op].kind, AxisOp::Kind::Flip);
        EXPECT_EQ(r.applied[op++].axis, axis);
        expect = ref_flip(expect, axis);
      }
    for (int axis = 0; axis < 3; ++axis)
      if (replay.bernoulli(cfg.p_rot)) {
        const int k = static_cast<int>(replay.below(3)) + 1;
        ASSERT_LT(op, r.applied.size());
        EXPECT_EQ(r.applied[op].kind, AxisOp::Kind::Rotate);
        EXPECT_EQ(r.applied[op].quarter_turns, k);
        EXPECT_EQ(r.applied[op++].axis, axis);
        for (int i = 0; i < k; ++i) expect = ref_quarter(expect, axis);
      }
    EXPECT_EQ(op, r.applied.size());
    EXPECT_EQ(r.image, expect) << "seed " << seed;
    EXPECT_EQ(r.label, BinaryMask::from_volume(expect, 50.0f)) << "seed " << seed;
  }
}

TEST(FlipRotate, NonSquarePlaneRestrictedToHalfTurn) {
  const Volume v = asymmetric({6, 4, 4});
  const BinaryMask m = BinaryMask::from_volume(v, 50.0f);
  AugmentConfig cfg;
  cfg.p_flip = 0.0;
  cfg.p_rot = 1.0;
  bool warned = false;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const FlipRotateResult r = random_flip_rotate(v, m, cfg, rng);
    EXPECT_EQ(r.image.dims(), v.dims());
    for (const AxisOp& op : r.applied)
      if (op.axis != 0) EXPECT_EQ(op.quarter_turns, 2);  // planes (y,z) is square; the others are not
    warned |= !r.warnings.empty();
  }
  EXPECT_TRUE(warned);
}

TEST(FlipRotate, PairingPreserved) {
  Volume v = asymmetric({6, 6, 6});
  for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  const SyntheticCase c = make_case({6, 6, 6}, 1, 8);
  AugmentConfig cfg;
  cfg.p_flip = 0.5;
  cfg.p_rot = 0.5;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const FlipRotateResult r = random_flip_rotate(v, c.label, cfg, rng);
    for (size_t i = 0; i < r.image.size(); ++i)
      ASSERT_EQ(r.label[i], c.label[static_cast<size_t>(r.image[i])]) << "seed " << seed;
  }
}
