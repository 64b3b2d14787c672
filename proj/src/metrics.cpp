#include "volseg/metrics.hpp"

#include "volseg/distance_transform.hpp"

namespace volseg {

double dice(const BinaryMask& pred, const BinaryMask& label) {
  require_same_dims(pred.dims(), label.dims(), "dice");
  size_t np = 0, nl = 0, both = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i];
    const bool l = label[i];
    np += p;
    nl += l;
    both += p && l;
  }
  if (np + nl == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(np + nl);
}

BinaryMask boundary(const BinaryMask& m) {
  const Dims& d = m.dims();
  BinaryMask b(d, false, m.spacing());
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) {
        if (!m.at(x, y, z)) continue;
        const bool edge = x == 0 || y == 0 || z == 0 || x == d.x - 1 || y == d.y - 1 || z == d.z - 1;
        if (edge || !m.at(x - 1, y, z) || !m.at(x + 1, y, z) || !m.at(x, y - 1, z) ||
            !m.at(x, y + 1, z) || !m.at(x, y, z - 1) || !m.at(x, y, z + 1))
          b.set(linear_index(d, x, y, z), true);
      }
  return b;
}

double nsd(const BinaryMask& pred, const BinaryMask& label, double tolerance_mm) {
  require_same_dims(pred.dims(), label.dims(), "nsd");
  if (!(pred.spacing() == label.spacing())) fail(ErrorKind::Shape, "nsd: spacing mismatch");
  if (!(tolerance_mm > 0.0)) fail(ErrorKind::InvalidArgument, "nsd tolerance must be positive");
  const BinaryMask bp = boundary(pred);
  const BinaryMask bl = boundary(label);
  const size_t np = bp.count();
  const size_t nl = bl.count();
  if (np == 0 && nl == 0) return 1.0;
  if (np == 0 || nl == 0) return 0.0;

  const double tol2 = tolerance_mm * tolerance_mm;
  const std::vector<double> to_label = squared_distance_to(bl, label.spacing(), false);
  const std::vector<double> to_pred = squared_distance_to(bp, pred.spacing(), false);
  size_t hits = 0;
  for (size_t i = 0; i < bp.size(); ++i) {
    if (bp[i] && to_label[i] <= tol2) ++hits;
    if (bl[i] && to_pred[i] <= tol2) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(np + nl);
}

}  // namespace volseg
