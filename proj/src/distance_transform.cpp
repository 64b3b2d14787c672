#include "volseg/distance_transform.hpp"

#include <cmath>
#include <limits>

namespace volseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// In-place 1D pass over `f` (length n, stride 1) with sample spacing s.
// Scratch buffers are reused across lines.
struct Envelope {
  std::vector<double> pos;     // parabola vertex positions (may be -1 or n)
  std::vector<double> height;  // f at the vertex
  std::vector<double> bound;   // envelope boundaries, size pos.size()+1
  std::vector<double> out;

  void run(double* f, int64_t n, double s, bool boundary_sites) {
    pos.clear();
    height.clear();
    bound.clear();
    const double s2 = s * s;
    auto add = [&](double q, double fq) {
      if (!std::isfinite(fq)) return;
      while (!pos.empty()) {
        const double p = pos.back();
        const double fp = height.back();
        const double x = ((fq + s2 * q * q) - (fp + s2 * p * p)) / (2.0 * s2 * (q - p));
        if (x <= bound.back()) {
          pos.pop_back();
          height.pop_back();
          bound.pop_back();
        } else {
          pos.push_back(q);
          height.push_back(fq);
          bound.push_back(x);
          return;
        }
      }
      pos.push_back(q);
      height.push_back(fq);
      bound.push_back(-kInf);
    };
    if (boundary_sites) add(-1.0, 0.0);
    for (int64_t i = 0; i < n; ++i) add(static_cast<double>(i), f[i]);
    if (boundary_sites) add(static_cast<double>(n), 0.0);

    out.assign(static_cast<size_t>(n), kInf);
    if (pos.empty()) {
      for (int64_t i = 0; i < n; ++i) f[i] = kInf;
      return;
    }
    size_t k = 0;
    for (int64_t i = 0; i < n; ++i) {
      const double x = static_cast<double>(i);
      while (k + 1 < pos.size() && bound[k + 1] < x) ++k;
      const double d = (x - pos[k]) * s;
      out[static_cast<size_t>(i)] = height[k] + d * d;
    }
    for (int64_t i = 0; i < n; ++i) f[i] = out[static_cast<size_t>(i)];
  }
};

}  // namespace

std::vector<double> squared_distance_to(const BinaryMask& sites, const Spacing& spacing,
                                        bool exterior_is_site) {
  const Dims& d = sites.dims();
  std::vector<double> g(d.count());
  for (size_t i = 0; i < g.size(); ++i) g[i] = sites[i] ? 0.0 : kInf;

  Envelope env;
  std::vector<double> line;
  for (int axis = 0; axis < 3; ++axis) {
    const int64_t n = d[axis];
    const int a1 = axis == 0 ? 1 : 0;
    const int a2 = axis == 2 ? 1 : 2;
    line.resize(static_cast<size_t>(n));
    Index3 p;
    for (p[a2] = 0; p[a2] < d[a2]; ++p[a2]) {
      for (p[a1] = 0; p[a1] < d[a1]; ++p[a1]) {
        for (p[axis] = 0; p[axis] < n; ++p[axis])
          line[static_cast<size_t>(p[axis])] = g[linear_index(d, p.x, p.y, p.z)];
        env.run(line.data(), n, spacing[axis], exterior_is_site);
        for (p[axis] = 0; p[axis] < n; ++p[axis])
          g[linear_index(d, p.x, p.y, p.z)] = line[static_cast<size_t>(p[axis])];
      }
    }
  }
  return g;
}

std::vector<double> euclidean_distance_transform(const BinaryMask& mask, const Spacing& spacing) {
  BinaryMask outside(mask.dims(), false, mask.spacing());
  for (size_t i = 0; i < mask.size(); ++i) outside.set(i, !mask[i]);
  std::vector<double> d = squared_distance_to(outside, spacing, true);
  for (double& v : d) v = std::sqrt(v);
  return d;
}

}  // namespace volseg
