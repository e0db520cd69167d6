#ifndef HYPORATE_CERTIFICATE_HPP_
#define HYPORATE_CERTIFICATE_HPP_

#include <cmath>
#include <limits>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "hyporate/errors.hpp"
#include "hyporate/grid.hpp"
#include "hyporate/linalg.hpp"
#include "hyporate/model.hpp"
#include "hyporate/parallel.hpp"
#include "hyporate/tensor.hpp"

namespace hyporate {

/// Smallest generalized eigenvalue of the pencil (R, M): the largest lambda
/// with R >= lambda M fails exactly above it. Computed as the smallest
/// eigenvalue of M^{-1/2} R M^{-1/2} by cyclic Jacobi.
inline double pencil_min_eig(const Mat& R, const Mat& M) {
  Mat W = sym_inv_sqrt(M);
  Mat S = W * (0.5 * (R + R.transpose())) * W;
  S = 0.5 * (S + S.transpose());
  return min_eig_sym(S);
}

/// A certified-rate field over a grid: per point the smallest generalized
/// eigenvalue of (R(x), a a^T + z z^T), plus its infimum over the grid.
struct RateMap {
  GridBox grid;
  std::vector<double> lambda_field;
  double lambda_inf = 0.0;
  double beta = 0.0;
  Vec z_params;
};

inline RateMap rate_map(const Model& model, const GridBox& grid, double beta,
                        const AssemblyOptions& opts = {}) {
  RateMap out;
  out.grid = grid;
  out.beta = beta;
  if (model.family() == Family::Underdamped1D)
    out.z_params = static_cast<const Underdamped1DModel&>(model).z();
  out.lambda_field.assign(grid.size(), 0.0);

  std::mutex err_mutex;
  std::string err_msg;
  parallel_for(grid.size(), [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      const Vec x = grid.point(i);
      try {
        HessianBundle b = assemble(model, x, beta, opts);
        out.lambda_field[i] = pencil_min_eig(b.R_total, b.mass);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (err_msg.empty()) {
          err_msg = std::string(e.what()) + " at grid point [";
          for (int a = 0; a < x.size(); ++a) err_msg += (a ? "," : "") + std::to_string(x[a]);
          err_msg += "]";
        }
        return;
      }
    }
  });
  if (!err_msg.empty()) throw Error(err_msg);

  out.lambda_inf = out.lambda_field[0];
  for (double v : out.lambda_field) out.lambda_inf = std::min(out.lambda_inf, v);
  return out;
}

/// Worst-case smallest eigenvalue of R(x) - lambda_inf (a a^T + z z^T) over
/// the map's grid; certificate soundness requires it >= -1e-9.
inline double certificate_soundness(const Model& model, const RateMap& map,
                                    const AssemblyOptions& opts = {}) {
  double worst = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < map.grid.size(); ++i) {
    const Vec x = map.grid.point(i);
    HessianBundle b = assemble(model, x, map.beta, opts);
    worst = std::min(worst, min_eig_sym(Mat(b.R_total - map.lambda_inf * b.mass)));
  }
  return worst;
}

struct SweepResult {
  double best_beta = 0.0;
  Vec best_z;
  RateMap best_map;
  // lattice diagnostics in row-major (beta outer, z inner) order
  std::vector<double> lambda_inf_table;
};

/// Exhaustive lattice sweep over beta and constant z vectors; the winner is
/// the argmax of lambda_inf with ties broken by smaller |z| then smaller
/// |beta|, then lattice order.
inline SweepResult sweep_parameters(const Underdamped1DModel& model, const GridBox& grid,
                                    const std::vector<double>& betas, const std::vector<Vec>& zs,
                                    const AssemblyOptions& opts = {}) {
  if (betas.empty() || zs.empty()) throw EmptyRange("sweep: empty beta or z range");
  SweepResult res;
  bool first = true;
  for (double beta : betas) {
    for (const Vec& z : zs) {
      Underdamped1DModel variant = model.with_z(Eigen::Vector2d(z[0], z[1]));
      RateMap map = rate_map(variant, grid, beta, opts);
      res.lambda_inf_table.push_back(map.lambda_inf);
      bool better = first;
      if (!first) {
        if (map.lambda_inf > res.best_map.lambda_inf)
          better = true;
        else if (map.lambda_inf == res.best_map.lambda_inf) {
          if (z.norm() < res.best_z.norm())
            better = true;
          else if (z.norm() == res.best_z.norm() && std::abs(beta) < std::abs(res.best_beta))
            better = true;
        }
      }
      if (better) {
        res.best_beta = beta;
        res.best_z = z;
        res.best_map = std::move(map);
        first = false;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Closed-form sufficient conditions.
// ---------------------------------------------------------------------------

struct ConditionReport {
  std::string family;
  std::vector<std::pair<std::string, double>> margins;  // PASS iff all > 0
  bool pass = false;

  double margin(const std::string& name) const {
    for (const auto& [k, v] : margins)
      if (k == name) return v;
    throw Error("unknown margin: " + name);
  }
};

inline ConditionReport check_1d_sufficient(double r, double lambda_lo, double lambda_hi,
                                           double z2, double delta) {
  if (!(r > 0.0)) throw Error("check_1d_sufficient: r must be positive");
  ConditionReport rep;
  rep.family = "underdamped1d";
  const double m1 = 2.0 * r * lambda_lo - lambda_hi * lambda_hi - (r * r - delta);
  const double m2 = 2.0 * (z2 - z2 * z2) * lambda_lo + (4.0 * r * r - 2.0 * r) * z2 +
                    2.0 * z2 * z2 * z2 - std::pow(z2, 4) - (2.0 * r + 1.0) * z2 * z2 - delta;
  const double upper = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * r));
  const double m3 = std::min(z2, upper - z2);
  rep.margins = {{"hessian_bound", m1}, {"z2_polynomial", m2}, {"z2_interval", m3}};
  rep.pass = m1 > 0.0 && m2 > 0.0 && m3 > 0.0;
  return rep;
}

inline ConditionReport check_oscillator_sufficient(double lambda_lo, double lambda_hi, double z2,
                                                   double N, double eps, double delta1) {
  if (!(N > 0.0) || !(eps > 0.0))
    throw Error("check_oscillator_sufficient: N and eps must be positive");
  ConditionReport rep;
  rep.family = "oscillator3";
  const double m1 = 2.0 * lambda_lo - lambda_hi * lambda_hi - (1.0 - delta1);
  const double m2 = -std::pow(z2 * z2 + N * N, 2) + 2.0 * (N * N - z2 * z2) * lambda_lo -
                    lambda_hi * lambda_hi;
  const double m3 = 2.0 * z2 + 2.0 * z2 * z2 * z2 - std::pow(z2, 4) - 3.0 * z2 * z2 +
                    2.0 * (z2 - z2 * z2) * lambda_lo - delta1;
  const double upper = std::min(0.5 * (1.0 + std::sqrt(5.0)), N);
  const double m4 = std::min(z2, upper - z2);
  rep.margins = {{"spectral_bound", m1}, {"middle_mode", m2}, {"corner_mode", m3},
                 {"z2_interval", m4}};
  rep.pass = m1 > 0.0 && m2 > 0.0 && m3 > 0.0 && m4 > 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Blockwise PSD test for the 6x6 oscillator tensor.
// ---------------------------------------------------------------------------

struct SchurReport {
  double r1_min_eig = 0.0;
  double schur_min_eig = 0.0;
  double full_min_eig = 0.0;  // direct 6x6 check, for cross-validation
  bool psd = false;
};

inline SchurReport oscillator_schur_check(const HessianBundle& bundle) {
  const Mat& R = bundle.R_total;
  if (R.rows() != 6) throw Error("oscillator_schur_check expects a 6x6 tensor");
  Mat R1 = R.topLeftCorner(3, 3);
  Mat R2 = R.topRightCorner(3, 3);
  Mat R3 = R.bottomRightCorner(3, 3);
  const double scale = std::max(R.cwiseAbs().maxCoeff(), 1e-300);
  SymEig e1 = jacobi_eigh(R1);
  if (std::abs(e1.values[0]) < 1e-12 * scale && std::abs(e1.values[2]) < 1e-12 * scale)
    throw SingularBlock("R1 block numerically zero");
  if (std::abs(e1.values.cwiseAbs().minCoeff()) < 1e-12 * scale)
    throw SingularBlock("R1 block singular; Schur complement undefined");
  Mat R1inv = e1.vectors * e1.values.cwiseInverse().asDiagonal() * e1.vectors.transpose();
  Mat schur = R3 - R2 * R1inv * R2;
  schur = 0.5 * (schur + schur.transpose());

  SchurReport rep;
  rep.r1_min_eig = e1.values[0];
  rep.schur_min_eig = min_eig_sym(schur);
  rep.full_min_eig = min_eig_sym(R);
  const double tol = 1e-10 * std::max(1.0, scale);
  rep.psd = rep.r1_min_eig >= -tol && rep.schur_min_eig >= -tol;
  return rep;
}

}  // namespace hyporate

#endif  // HYPORATE_CERTIFICATE_HPP_
