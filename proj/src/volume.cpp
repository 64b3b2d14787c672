#include "volseg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace volseg {

std::string to_string(const Dims& d) {
  std::ostringstream os;
  os << d.x << "x" << d.y << "x" << d.z;
  return os.str();
}

std::string to_string(const Index3& p) {
  std::ostringstream os;
  os << "(" << p.x << "," << p.y << "," << p.z << ")";
  return os.str();
}

Volume::Volume(Dims dims, float fill, Spacing spacing) : dims_(dims), spacing_(spacing) {
  if (!dims.valid()) fail(ErrorKind::Shape, "invalid volume dims " + to_string(dims));
  values_.assign(dims.count(), fill);
}

Volume::Volume(Dims dims, std::vector<float> values, Spacing spacing)
    : dims_(dims), spacing_(spacing), values_(std::move(values)) {
  if (!dims.valid()) fail(ErrorKind::Shape, "invalid volume dims " + to_string(dims));
  if (values_.size() != dims.count())
    fail(ErrorKind::Shape, "value count " + std::to_string(values_.size()) +
                               " does not match dims " + to_string(dims));
}

void Volume::check_finite() const {
  for (size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]))
      fail(ErrorKind::Shape, "non-finite value at voxel " + to_string(unravel(dims_, i)));
  }
}

BinaryMask::BinaryMask(Dims dims, bool fill, Spacing spacing) : dims_(dims), spacing_(spacing) {
  if (!dims.valid()) fail(ErrorKind::Shape, "invalid mask dims " + to_string(dims));
  bits_.assign(dims.count(), fill ? 1 : 0);
}

BinaryMask BinaryMask::from_volume(const Volume& v, float threshold) {
  BinaryMask m(v.dims(), false, v.spacing());
  for (size_t i = 0; i < v.size(); ++i) m.bits_[i] = v[i] > threshold ? 1 : 0;
  return m;
}

size_t BinaryMask::count() const noexcept {
  return static_cast<size_t>(std::count(bits_.begin(), bits_.end(), uint8_t{1}));
}

Volume BinaryMask::to_volume() const {
  Volume v(dims_, 0.0f, spacing_);
  for (size_t i = 0; i < bits_.size(); ++i) v[i] = bits_[i] ? 1.0f : 0.0f;
  return v;
}

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b))
    fail(ErrorKind::Shape,
         std::string(what) + ": dims mismatch " + to_string(a) + " vs " + to_string(b));
}

namespace {

void check_box(const Dims& d, const Index3& origin, const Dims& size) {
  if (!size.valid() || origin.x < 0 || origin.y < 0 || origin.z < 0 ||
      origin.x + size.x > d.x || origin.y + size.y > d.y || origin.z + size.z > d.z)
    fail(ErrorKind::Shape, "box " + to_string(origin) + "+" + to_string(size) +
                               " outside volume " + to_string(d));
}

}  // namespace

Volume extract(const Volume& v, const Index3& origin, const Dims& size) {
  check_box(v.dims(), origin, size);
  Volume out(size, 0.0f, v.spacing());
  for (int64_t z = 0; z < size.z; ++z)
    for (int64_t y = 0; y < size.y; ++y) {
      const float* src = &v.values()[linear_index(v.dims(), origin.x, origin.y + y, origin.z + z)];
      std::copy(src, src + size.x, &out.values()[linear_index(size, 0, y, z)]);
    }
  return out;
}

BinaryMask extract(const BinaryMask& m, const Index3& origin, const Dims& size) {
  check_box(m.dims(), origin, size);
  BinaryMask out(size, false, m.spacing());
  for (int64_t z = 0; z < size.z; ++z)
    for (int64_t y = 0; y < size.y; ++y)
      for (int64_t x = 0; x < size.x; ++x)
        out.set(linear_index(size, x, y, z), m.at(origin.x + x, origin.y + y, origin.z + z));
  return out;
}

}  // namespace volseg
