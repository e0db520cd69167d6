#ifndef HYPORATE_LINALG_HPP_
#define HYPORATE_LINALG_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "hyporate/errors.hpp"

namespace hyporate {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Eigen-decomposition of a small dense symmetric matrix by cyclic Jacobi
/// rotations. Deterministic sweep order (row-major upper triangle), so the
/// result is bit-reproducible regardless of thread count or build flags.
struct SymEig {
  Vec values;   // ascending
  Mat vectors;  // columns, orthonormal
};

inline SymEig jacobi_eigh(const Mat& a_in, double off_tol = 1e-14, int max_sweeps = 100) {
  const int n = static_cast<int>(a_in.rows());
  Mat a = 0.5 * (a_in + a_in.transpose());
  Mat v = Mat::Identity(n, n);
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);

  auto off_norm = [&]() {
    double s = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) s += a(p, q) * a(p, q);
    return std::sqrt(2.0 * s);
  };

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_norm() <= off_tol * scale * n) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  SymEig out;
  out.values = a.diagonal();
  out.vectors = v;
  // sort ascending, stable permutation
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int i, int j) { return out.values[i] < out.values[j]; });
  Vec vals(n);
  Mat vecs(n, n);
  for (int k = 0; k < n; ++k) {
    vals[k] = out.values[idx[k]];
    vecs.col(k) = out.vectors.col(idx[k]);
  }
  out.values = vals;
  out.vectors = vecs;
  return out;
}

inline double min_eig_sym(const Mat& a) { return jacobi_eigh(a).values[0]; }

/// M^{-1/2} for symmetric positive definite M. Throws SingularMass when the
/// smallest eigenvalue is below 1e-12 times the largest magnitude one.
inline Mat sym_inv_sqrt(const Mat& m) {
  SymEig e = jacobi_eigh(m);
  const double top = std::max(std::abs(e.values[0]), std::abs(e.values[e.values.size() - 1]));
  if (!(e.values[0] > 1e-12 * top) || top == 0.0)
    throw SingularMass("mass matrix numerically singular (min eig " +
                       std::to_string(e.values[0]) + ")");
  Vec d = e.values.cwiseSqrt().cwiseInverse();
  return e.vectors * d.asDiagonal() * e.vectors.transpose();
}

/// Deterministic pairwise summation; independent of how the values were
/// produced (thread partitioning never changes the reduction tree).
inline double pairwise_sum(std::span<const double> x) {
  const size_t n = x.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const size_t half = n / 2;
  return pairwise_sum(x.subspan(0, half)) + pairwise_sum(x.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& x) {
  return pairwise_sum(std::span<const double>(x.data(), x.size()));
}

inline double max_abs(const Mat& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

inline double relative_deviation(const Mat& a, const Mat& b) {
  const double scale = std::max({max_abs(a), max_abs(b), 1e-300});
  return max_abs(a - b) / scale;
}

}  // namespace hyporate

#endif  // HYPORATE_LINALG_HPP_
