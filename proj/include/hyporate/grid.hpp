#ifndef HYPORATE_GRID_HPP_
#define HYPORATE_GRID_HPP_

#include <cstddef>
#include <vector>

#include "hyporate/errors.hpp"
#include "hyporate/linalg.hpp"

namespace hyporate {

/// Tensor-product node grid on a box. Non-periodic axes place nodes on both
/// endpoints with trapezoid quadrature weights; periodic axes drop the right
/// endpoint and use uniform weights. Flat indexing is row-major with axis 0
/// slowest, which is also the order every emitter walks the grid in.
struct GridBox {
  Vec lo, hi;
  std::vector<int> shape;
  std::vector<bool> periodic;

  int dim() const { return static_cast<int>(shape.size()); }

  size_t size() const {
    size_t s = 1;
    for (int n : shape) s *= static_cast<size_t>(n);
    return s;
  }

  double spacing(int axis) const {
    const double len = hi[axis] - lo[axis];
    if (shape[axis] == 1) return 0.0;
    return periodic[axis] ? len / shape[axis] : len / (shape[axis] - 1);
  }

  void to_multi(size_t flat, std::vector<int>& idx) const {
    idx.resize(shape.size());
    for (int a = dim() - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(flat % shape[a]);
      flat /= shape[a];
    }
  }

  size_t to_flat(const std::vector<int>& idx) const {
    size_t f = 0;
    for (int a = 0; a < dim(); ++a) f = f * shape[a] + static_cast<size_t>(idx[a]);
    return f;
  }

  Vec point(const std::vector<int>& idx) const {
    Vec x(dim());
    for (int a = 0; a < dim(); ++a) x[a] = lo[a] + idx[a] * spacing(a);
    return x;
  }

  Vec point(size_t flat) const {
    std::vector<int> idx;
    to_multi(flat, idx);
    return point(idx);
  }

  /// Trapezoid weight along one axis (uniform when periodic).
  double axis_weight(int axis, int i) const {
    if (shape[axis] == 1) return 1.0;
    const double h = spacing(axis);
    if (periodic[axis]) return h;
    return (i == 0 || i == shape[axis] - 1) ? 0.5 * h : h;
  }

  double weight(const std::vector<int>& idx) const {
    double w = 1.0;
    for (int a = 0; a < dim(); ++a) w *= axis_weight(a, idx[a]);
    return w;
  }

  /// Node index shifted along an axis, wrapping when periodic. Returns -1
  /// when the shift leaves a non-periodic axis.
  long shift(const std::vector<int>& idx, int axis, int offset) const {
    int j = idx[axis] + offset;
    if (periodic[axis]) {
      j %= shape[axis];
      if (j < 0) j += shape[axis];
    } else if (j < 0 || j >= shape[axis]) {
      return -1;
    }
    std::vector<int> nb = idx;
    nb[axis] = j;
    return static_cast<long>(to_flat(nb));
  }
};

inline GridBox make_grid(const Vec& lo, const Vec& hi, const std::vector<int>& shape,
                         const std::vector<bool>& periodic) {
  if (lo.size() != hi.size() || static_cast<size_t>(lo.size()) != shape.size() ||
      shape.size() != periodic.size())
    throw ConfigParse("grid: lo/hi/shape/periodic dimension mismatch");
  for (size_t a = 0; a < shape.size(); ++a) {
    if (shape[a] < 1) throw ConfigParse("grid: need at least one node per axis");
    if (shape[a] > 1 && !(hi[a] > lo[a])) throw ConfigParse("grid: hi must exceed lo");
  }
  return GridBox{lo, hi, shape, periodic};
}

inline GridBox make_grid(const Vec& lo, const Vec& hi, int nodes_per_axis, bool all_periodic = false) {
  return make_grid(lo, hi, std::vector<int>(lo.size(), nodes_per_axis),
                   std::vector<bool>(lo.size(), all_periodic));
}

inline std::vector<Vec> grid_points(const GridBox& g) {
  std::vector<Vec> pts;
  pts.reserve(g.size());
  for (size_t f = 0; f < g.size(); ++f) pts.push_back(g.point(f));
  return pts;
}

}  // namespace hyporate

#endif  // HYPORATE_GRID_HPP_
