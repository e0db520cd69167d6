#ifndef HYPORATE_DENSITY_HPP_
#define HYPORATE_DENSITY_HPP_

#include <vector>

#include "hyporate/grid.hpp"

namespace hyporate {

/// A discretized density on a node grid. Values are per node; integrals use
/// the grid's trapezoid weights.
struct DensityField {
  GridBox grid;
  std::vector<double> values;
  double time = 0.0;

  double mass() const {
    std::vector<double> cell(values.size());
    std::vector<int> idx;
    for (size_t f = 0; f < values.size(); ++f) {
      grid.to_multi(f, idx);
      cell[f] = values[f] * grid.weight(idx);
    }
    return pairwise_sum(cell);
  }

  void normalize() {
    const double m = mass();
    if (!(m > 0.0)) throw NonPositiveDensity("density mass not positive");
    for (double& v : values) v /= m;
  }
};

template <class F>
DensityField sample_density(const GridBox& grid, const F& p, bool normalize = true) {
  DensityField d{grid, std::vector<double>(grid.size()), 0.0};
  for (size_t f = 0; f < grid.size(); ++f) d.values[f] = p(grid.point(f));
  if (normalize) d.normalize();
  return d;
}

}  // namespace hyporate

#endif  // HYPORATE_DENSITY_HPP_
