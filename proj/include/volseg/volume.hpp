#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "volseg/error.hpp"

namespace volseg {

/// Voxel counts along x, y, z.
struct Dims {
  int64_t x = 1;
  int64_t y = 1;
  int64_t z = 1;

  size_t count() const noexcept { return static_cast<size_t>(x * y * z); }
  bool valid() const noexcept { return x >= 1 && y >= 1 && z >= 1; }
  int64_t operator[](int axis) const noexcept { return axis == 0 ? x : (axis == 1 ? y : z); }
  int64_t& operator[](int axis) noexcept { return axis == 0 ? x : (axis == 1 ? y : z); }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Integer voxel coordinate.
struct Index3 {
  int64_t x = 0;
  int64_t y = 0;
  int64_t z = 0;

  int64_t operator[](int axis) const noexcept { return axis == 0 ? x : (axis == 1 ? y : z); }
  int64_t& operator[](int axis) noexcept { return axis == 0 ? x : (axis == 1 ? y : z); }
  friend bool operator==(const Index3&, const Index3&) = default;
  friend auto operator<=>(const Index3&, const Index3&) = default;
};

/// Millimeters per voxel.
struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  double operator[](int axis) const noexcept { return axis == 0 ? x : (axis == 1 ? y : z); }
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

std::string to_string(const Dims& d);
std::string to_string(const Index3& p);

inline bool in_bounds(const Dims& d, const Index3& p) noexcept {
  return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x < d.x && p.y < d.y && p.z < d.z;
}

/// x-fastest linear offset.
inline size_t linear_index(const Dims& d, int64_t x, int64_t y, int64_t z) noexcept {
  return static_cast<size_t>((z * d.y + y) * d.x + x);
}

inline Index3 unravel(const Dims& d, size_t i) noexcept {
  const auto li = static_cast<int64_t>(i);
  return {li % d.x, (li / d.x) % d.y, li / (d.x * d.y)};
}

/// Dense scalar grid with spacing metadata. Used for images, guidance
/// channels and probability maps alike.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Dims dims, float fill = 0.0f, Spacing spacing = {});
  Volume(Dims dims, std::vector<float> values, Spacing spacing = {});

  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  void set_spacing(Spacing s) noexcept { spacing_ = s; }
  size_t size() const noexcept { return values_.size(); }

  float& operator[](size_t i) noexcept { return values_[i]; }
  float operator[](size_t i) const noexcept { return values_[i]; }
  float& at(int64_t x, int64_t y, int64_t z) noexcept { return values_[linear_index(dims_, x, y, z)]; }
  float at(int64_t x, int64_t y, int64_t z) const noexcept {
    return values_[linear_index(dims_, x, y, z)];
  }
  float& at(const Index3& p) noexcept { return at(p.x, p.y, p.z); }
  float at(const Index3& p) const noexcept { return at(p.x, p.y, p.z); }

  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }

  /// Throws Shape if any value is NaN or infinite.
  void check_finite() const;

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims dims_{};
  Spacing spacing_{};
  std::vector<float> values_ = std::vector<float>(1, 0.0f);
};

/// One bit of foreground per voxel, stored as bytes.
class BinaryMask {
 public:
  BinaryMask() = default;
  explicit BinaryMask(Dims dims, bool fill = false, Spacing spacing = {});

  /// Foreground where value > threshold.
  static BinaryMask from_volume(const Volume& v, float threshold = 0.5f);

  const Dims& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  void set_spacing(Spacing s) noexcept { spacing_ = s; }
  size_t size() const noexcept { return bits_.size(); }

  bool operator[](size_t i) const noexcept { return bits_[i] != 0; }
  void set(size_t i, bool v) noexcept { bits_[i] = v ? 1 : 0; }
  bool at(int64_t x, int64_t y, int64_t z) const noexcept {
    return bits_[linear_index(dims_, x, y, z)] != 0;
  }
  bool at(const Index3& p) const noexcept { return at(p.x, p.y, p.z); }
  void set(const Index3& p, bool v) noexcept { bits_[linear_index(dims_, p.x, p.y, p.z)] = v ? 1 : 0; }

  size_t count() const noexcept;
  bool empty() const noexcept { return count() == 0; }
  Volume to_volume() const;

  std::span<const uint8_t> bits() const noexcept { return bits_; }

  friend bool operator==(const BinaryMask& a, const BinaryMask& b) {
    return a.dims_ == b.dims_ && a.bits_ == b.bits_;
  }

 private:
  Dims dims_{};
  Spacing spacing_{};
  std::vector<uint8_t> bits_ = std::vector<uint8_t>(1, 0);
};

void require_same_dims(const Dims& a, const Dims& b, const char* what);

/// Copies the box [origin, origin+size) out of a volume or mask.
Volume extract(const Volume& v, const Index3& origin, const Dims& size);
BinaryMask extract(const BinaryMask& m, const Index3& origin, const Dims& size);

}  // namespace volseg
