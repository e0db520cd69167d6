#ifndef HYPORATE_FD_HPP_
#define HYPORATE_FD_HPP_

#include <cmath>
#include <functional>
#include <limits>

#include "hyporate/linalg.hpp"

namespace hyporate {
namespace fd {

// 4th-order central stencils on callables. Step sizes: cbrt(eps) for first
// derivatives, eps^(1/6)/2 for second derivatives (direct stencil) — the
// nested-first-derivative route at the cbrt step loses six digits to
// roundoff, which the tensor assembly cannot afford.

inline double step1(const Vec& x) {
  static const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
  double s = 1.0;
  for (int i = 0; i < x.size(); ++i) s = std::max(s, std::abs(x[i]));
  return h0 * s;
}

inline double step2(const Vec& x) {
  static const double h0 = 0.5 * std::pow(std::numeric_limits<double>::epsilon(), 1.0 / 6.0);
  double s = 1.0;
  for (int i = 0; i < x.size(); ++i) s = std::max(s, std::abs(x[i]));
  return h0 * s;
}

template <class F>
double d1(const F& f, Vec x, int axis, double h) {
  const double x0 = x[axis];
  x[axis] = x0 - 2 * h;
  const double fm2 = f(x);
  x[axis] = x0 - h;
  const double fm1 = f(x);
  x[axis] = x0 + h;
  const double fp1 = f(x);
  x[axis] = x0 + 2 * h;
  const double fp2 = f(x);
  return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
}

template <class F>
double d1(const F& f, const Vec& x, int axis) {
  return d1(f, x, axis, step1(x));
}

template <class F>
double d2_same(const F& f, Vec x, int axis, double h) {
  const double x0 = x[axis];
  const double f0 = f(x);
  x[axis] = x0 - 2 * h;
  const double fm2 = f(x);
  x[axis] = x0 - h;
  const double fm1 = f(x);
  x[axis] = x0 + h;
  const double fp1 = f(x);
  x[axis] = x0 + 2 * h;
  const double fp2 = f(x);
  return (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
}

// Mixed second derivative: 4th-order D1 in `axis_b` applied to 4th-order D1
// values in `axis_a`, both at the second-derivative step.
template <class F>
double d2_mixed(const F& f, const Vec& x, int axis_a, int axis_b, double h) {
  auto inner = [&](const Vec& y) { return d1(f, y, axis_a, h); };
  return d1(inner, x, axis_b, h);
}

template <class F>
double d2(const F& f, const Vec& x, int axis_a, int axis_b) {
  const double h = step2(x);
  return axis_a == axis_b ? d2_same(f, x, axis_a, h) : d2_mixed(f, x, axis_a, axis_b, h);
}

}  // namespace fd

// 4th-order stencil coefficients shared by the grid-based differentiators in
// gamma_calculus and the table-backed fields in io.
inline constexpr double kD1C4[5] = {1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0};

}  // namespace hyporate

#endif  // HYPORATE_FD_HPP_
