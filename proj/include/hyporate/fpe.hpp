#ifndef HYPORATE_FPE_HPP_
#define HYPORATE_FPE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "hyporate/density.hpp"
#include "hyporate/errors.hpp"
#include "hyporate/gamma_calculus.hpp"
#include "hyporate/grid.hpp"
#include "hyporate/model.hpp"
#include "hyporate/parallel.hpp"

namespace hyporate {

struct Functionals {
  double I_az = 0.0, KL = 0.0, L1 = 0.0;
};

/// Explicit finite-volume integrator for
///   d_t p = div(p a a^T grad log(p/pi)) + div(p gamma).
/// The diffusion flux is written as pi a a^T grad(h) with h = p/pi, so the
/// discrete equilibrium is exactly the sampled pi. The transport term is the
/// well-balanced form Div(g h_up) - h Div(g) with g = pi gamma at faces
/// (upwinded along the characteristic velocity -gamma), which also vanishes
/// identically at h == 1. Mass is renormalized each step.
class FpeSolver {
 public:
  FpeSolver(const Model& model, const GridBox& grid) : grid_(grid) {
    const int d = grid.dim();
    if (d > 3) throw Error("fpe solver supports at most 3 dimensions");
    for (int a = 0; a < d; ++a)
      if (grid.shape[a] < 3) throw ConfigParse("fpe solver needs at least 3 nodes per axis");
    nn_ = grid.size();
    pi_.resize(nn_);
    gamma_.assign(d, std::vector<double>(nn_));
    M_.assign(d * d, std::vector<double>(nn_));
    MN_.assign(d * d, std::vector<double>(nn_));
    for (size_t i = 0; i < nn_; ++i) {
      const Vec x = grid.point(i);
      pi_[i] = std::exp(model.log_pi(x));
      const Vec g = compute_gamma(model, x);
      const Mat A = model.diffusion(x);
      const Mat Z = model.auxiliary(x);
      const Mat M = A * A.transpose();
      const Mat MN = M + Z * Z.transpose();
      for (int a = 0; a < d; ++a) {
        gamma_[a][i] = g[a];
        for (int b = 0; b < d; ++b) {
          M_[a * d + b][i] = M(a, b);
          MN_[a * d + b][i] = MN(a, b);
        }
      }
    }

    // neighbor tables (flat indices, -1 outside), axis widths, quadrature
    nbm2_.assign(d, std::vector<long>(nn_));
    nbm1_.assign(d, std::vector<long>(nn_));
    nbp1_.assign(d, std::vector<long>(nn_));
    nbp2_.assign(d, std::vector<long>(nn_));
    width_.assign(d, std::vector<double>(nn_));
    weight_.assign(nn_, 1.0);
    std::vector<int> idx;
    for (size_t i = 0; i < nn_; ++i) {
      grid.to_multi(i, idx);
      for (int a = 0; a < d; ++a) {
        nbm2_[a][i] = grid.shift(idx, a, -2);
        nbm1_[a][i] = grid.shift(idx, a, -1);
        nbp1_[a][i] = grid.shift(idx, a, 1);
        nbp2_[a][i] = grid.shift(idx, a, 2);
        width_[a][i] = grid.axis_weight(a, idx[a]);
        weight_[i] *= grid.axis_weight(a, idx[a]);
      }
    }

    // normalize pi on the grid so equal densities give zero functionals
    {
      std::vector<double> cell(nn_);
      for (size_t i = 0; i < nn_; ++i) cell[i] = pi_[i] * weight_[i];
      const double mass = pairwise_sum(cell);
      for (size_t i = 0; i < nn_; ++i) pi_[i] /= mass;
    }

    has_cross_ = false;
    for (int a = 0; a < d && !has_cross_; ++a)
      for (int b = 0; b < d && !has_cross_; ++b)
        if (a != b)
          for (size_t i = 0; i < nn_; ++i)
            if (std::abs(M_[a * d + b][i]) > 1e-14) {
              has_cross_ = true;
              break;
            }

    // advertised stability bound; non-periodic boundary nodes carry
    // half-width cells, doubling their update rate
    double rate = 0.0;
    for (int a = 0; a < d; ++a) {
      double mmax = 0.0, gmax = 0.0;
      for (size_t i = 0; i < nn_; ++i) {
        mmax = std::max(mmax, std::abs(M_[a * d + a][i]));
        gmax = std::max(gmax, std::abs(gamma_[a][i]));
      }
      const double h = grid.spacing(a);
      const double wmin = grid.periodic[a] ? h : 0.5 * h;
      rate += 2.0 * mmax / (h * wmin) + gmax / wmin;
      if (has_cross_)
        for (int b = 0; b < d; ++b)
          if (b != a) {
            double cmax = 0.0;
            for (size_t i = 0; i < nn_; ++i) cmax = std::max(cmax, std::abs(M_[a * d + b][i]));
            rate += cmax / (wmin * grid.spacing(b));
          }
    }
    cfl_limit_ = rate > 0.0 ? 1.0 / rate : 1e30;
  }

  const GridBox& grid() const { return grid_; }
  const std::vector<double>& pi() const { return pi_; }
  double cfl_dt(double safety = 0.4) const { return safety * cfl_limit_; }

  DensityField equilibrium() const { return DensityField{grid_, pi_, 0.0}; }

  void step(DensityField& p, double dt) const {
    if (!(dt > 0.0)) throw CflViolation("dt must be positive");
    if (dt > cfl_limit_)
      throw CflViolation("dt " + std::to_string(dt) + " exceeds stability bound " +
                         std::to_string(cfl_limit_));
    std::vector<double> k1(nn_), tmp(nn_), k2(nn_);
    rhs(p.values, k1);
    for (size_t i = 0; i < nn_; ++i) tmp[i] = p.values[i] + dt * k1[i];
    rhs(tmp, k2);
    double minv = 0.0, maxv = 0.0;
    for (size_t i = 0; i < nn_; ++i) {
      p.values[i] = 0.5 * (p.values[i] + tmp[i] + dt * k2[i]);
      minv = std::min(minv, p.values[i]);
      maxv = std::max(maxv, p.values[i]);
    }
    if (minv < -1e-12 * std::max(maxv, 1.0)) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6e (max %.6e)", minv, maxv);
      throw NegativeDensity(std::string("density went negative: min ") + buf);
    }
    for (double& v : p.values) v = std::max(v, 0.0);
    p.normalize();
    p.time += dt;
  }

  /// Trapezoid integrals of the three distance functionals. Nodes where the
  /// positivity clamp produced an exact zero contribute their continuum
  /// limits (0 to I and KL, |0 - pi| to L1); the floored log only feeds the
  /// difference stencils of neighbors, whose own density weight is tiny
  /// wherever zeros can occur.
  Functionals functionals(const DensityField& p) const {
    const int d = grid_.dim();
    std::vector<double> logh(nn_);
    for (size_t i = 0; i < nn_; ++i) {
      if (p.values[i] < 0.0) throw NonPositiveDensity("functional of negative density");
      logh[i] = std::log(std::max(p.values[i], 1e-300) / pi_[i]);
    }
    std::vector<double> ti(nn_), tkl(nn_), tl1(nn_);
    std::vector<double> grad(d);
    for (size_t i = 0; i < nn_; ++i) {
      const double w = weight_[i];
      tl1[i] = w * std::abs(p.values[i] - pi_[i]);
      if (p.values[i] <= 0.0) {
        ti[i] = 0.0;
        tkl[i] = 0.0;
        continue;
      }
      for (int a = 0; a < d; ++a) grad[a] = central_d1(logh, i, a);
      double quad = 0.0;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) quad += grad[a] * MN_[a * d + b][i] * grad[b];
      ti[i] = w * p.values[i] * quad;
      tkl[i] = w * p.values[i] * logh[i];
    }
    Functionals f;
    f.I_az = pairwise_sum(ti);
    f.KL = pairwise_sum(tkl);
    f.L1 = pairwise_sum(tl1);
    return f;
  }

 private:
  double central_d1(const std::vector<double>& v, size_t i, int axis) const {
    const double h = grid_.spacing(axis);
    const long ip = nbp1_[axis][i];
    const long im = nbm1_[axis][i];
    if (ip >= 0 && im >= 0) return (v[ip] - v[im]) / (2.0 * h);
    if (ip >= 0) return (-3.0 * v[i] + 4.0 * v[ip] - v[nbp2_[axis][i]]) / (2.0 * h);
    return (3.0 * v[i] - 4.0 * v[im] + v[nbm2_[axis][i]]) / (2.0 * h);
  }

  static double minmod(double a, double b) {
    if (a * b <= 0.0) return 0.0;
    return std::abs(a) < std::abs(b) ? a : b;
  }

  // minmod-limited reconstruction of h at the face between i and ip, taken
  // from the upwind side for characteristic velocity c (= -g)
  double face_h(const std::vector<double>& h, size_t i, long ip, int axis, double c) const {
    if (c >= 0.0) {
      const long im = nbm1_[axis][i];
      if (im < 0) return h[i];
      return h[i] + 0.5 * minmod(h[i] - h[im], h[ip] - h[i]);
    }
    const long ipp = nbp1_[axis][ip];
    if (ipp < 0) return h[ip];
    return h[ip] - 0.5 * minmod(h[ip] - h[i], h[ipp] - h[ip]);
  }

  void rhs(const std::vector<double>& pv, std::vector<double>& out) const {
    const int d = grid_.dim();
    std::vector<double> h(nn_);
    for (size_t i = 0; i < nn_; ++i) h[i] = pv[i] / pi_[i];

    // node-centered gradient of h for cross-diffusion terms
    std::vector<std::vector<double>> gradh;
    if (has_cross_) {
      gradh.assign(d, std::vector<double>(nn_));
      for (size_t i = 0; i < nn_; ++i)
        for (int a = 0; a < d; ++a) gradh[a][i] = central_d1(h, i, a);
    }

    parallel_for(nn_, [&](size_t lo, size_t hi_) {
      for (size_t i = lo; i < hi_; ++i) {
        double acc = 0.0;
        for (int a = 0; a < d; ++a) {
          const double w = width_[a][i];
          const double hspace = grid_.spacing(a);
          double flux_hi = 0.0, flux_lo = 0.0, g_hi = 0.0, g_lo = 0.0;
          const long ip = nbp1_[a][i];
          if (ip >= 0) {
            const double pm = 0.5 * (pi_[i] * M_[a * d + a][i] + pi_[ip] * M_[a * d + a][ip]);
            flux_hi = pm * (h[ip] - h[i]) / hspace;
            if (has_cross_)
              for (int b = 0; b < d; ++b)
                if (b != a) {
                  const double pmc =
                      0.5 * (pi_[i] * M_[a * d + b][i] + pi_[ip] * M_[a * d + b][ip]);
                  flux_hi += pmc * 0.5 * (gradh[b][i] + gradh[b][ip]);
                }
            g_hi = 0.5 * (pi_[i] * gamma_[a][i] + pi_[ip] * gamma_[a][ip]);
            flux_hi += g_hi * face_h(h, i, ip, a, -g_hi);
          }
          const long im = nbm1_[a][i];
          if (im >= 0) {
            const double pm = 0.5 * (pi_[im] * M_[a * d + a][im] + pi_[i] * M_[a * d + a][i]);
            flux_lo = pm * (h[i] - h[im]) / hspace;
            if (has_cross_)
              for (int b = 0; b < d; ++b)
                if (b != a) {
                  const double pmc =
                      0.5 * (pi_[im] * M_[a * d + b][im] + pi_[i] * M_[a * d + b][i]);
                  flux_lo += pmc * 0.5 * (gradh[b][im] + gradh[b][i]);
                }
            g_lo = 0.5 * (pi_[im] * gamma_[a][im] + pi_[i] * gamma_[a][i]);
            flux_lo += g_lo * face_h(h, static_cast<size_t>(im), i, a, -g_lo);
          }
          acc += (flux_hi - flux_lo) / w;
          acc -= h[i] * (g_hi - g_lo) / w;
        }
        out[i] = acc;
      }
    });
  }

  GridBox grid_;
  size_t nn_ = 0;
  std::vector<double> pi_;
  std::vector<std::vector<double>> gamma_;
  std::vector<std::vector<double>> M_, MN_;
  std::vector<std::vector<long>> nbm2_, nbm1_, nbp1_, nbp2_;
  std::vector<std::vector<double>> width_;
  std::vector<double> weight_;
  bool has_cross_ = false;
  double cfl_limit_ = 0.0;
};

inline Functionals compute_functionals(const Model& model, const DensityField& p) {
  return FpeSolver(model, p.grid).functionals(p);
}

// ---------------------------------------------------------------------------
// Decay experiment against a certified rate.
// ---------------------------------------------------------------------------

struct FunctionalTrace {
  std::vector<double> times, I_az, KL, L1;
  double I0 = 0.0;
  double fitted_rate_I = 0.0;  // slope diagnostic, not the verdict
};

struct DecayVerdicts {
  bool envelope_I = false, envelope_KL = false, envelope_L1 = false;
  bool dissipation_ok = false;
  double max_dissipation_err = 0.0;
  std::vector<double> sample_times, measured_dIdt, predicted_dIdt;
};

struct DecayOptions {
  double envelope_tol = 0.05;
  double dissipation_tol = 0.02;
  int max_records = 2000;
  int n_samples = 5;
  double cfl_safety = 0.4;
};

/// Pointwise envelope checks of the certified decay:
///   I(t)  <= (1+tol) e^{-2 lambda t} I(0)
///   KL(t) <= (1+tol) (1/(2 lambda)) e^{-2 lambda t} I(0)
///   L1(t) <= (1+tol) sqrt(I(0)/lambda) e^{-lambda t}
inline void evaluate_envelopes(const FunctionalTrace& tr, double lambda, double tol,
                               bool& env_I, bool& env_KL, bool& env_L1) {
  env_I = env_KL = env_L1 = true;
  for (size_t k = 0; k < tr.times.size(); ++k) {
    const double t = tr.times[k];
    const double decay = std::exp(-2.0 * lambda * t);
    if (tr.I_az[k] > (1.0 + tol) * decay * tr.I0) env_I = false;
    if (tr.KL[k] > (1.0 + tol) * decay * tr.I0 / (2.0 * lambda)) env_KL = false;
    if (tr.L1[k] > (1.0 + tol) * std::sqrt(tr.I0 / lambda) * std::exp(-lambda * t))
      env_L1 = false;
  }
}

inline std::pair<FunctionalTrace, DecayVerdicts> run_decay_experiment(
    const Model& model, const DensityField& p0, double t_final, double dt, double lambda_inf,
    const DecayOptions& opts = {}) {
  if (!(lambda_inf > 0.0)) throw Error("decay experiment needs a positive certified rate");
  FpeSolver solver(model, p0.grid);
  if (dt <= 0.0) dt = solver.cfl_dt(opts.cfl_safety);
  const long nsteps = static_cast<long>(std::ceil(t_final / dt));
  dt = t_final / static_cast<double>(nsteps);
  const long stride = std::max<long>(1, nsteps / opts.max_records);

  DensityField p = p0;
  p.normalize();
  p.time = 0.0;

  FunctionalTrace tr;
  auto record = [&]() {
    Functionals f = solver.functionals(p);
    tr.times.push_back(p.time);
    tr.I_az.push_back(f.I_az);
    tr.KL.push_back(f.KL);
    tr.L1.push_back(f.L1);
  };
  record();
  tr.I0 = tr.I_az[0];

  // snapshots for the dissipation cross-check, away from t=0 transients
  std::vector<double> sample_times(opts.n_samples);
  for (int s = 0; s < opts.n_samples; ++s) sample_times[s] = (0.05 + 0.05 * s) * t_final;
  std::vector<DensityField> snapshots;
  std::vector<size_t> snapshot_record;
  size_t next_sample = 0;

  for (long k = 0; k < nsteps; ++k) {
    solver.step(p, dt);
    if (k % stride == stride - 1 || k == nsteps - 1) {
      record();
      if (next_sample < sample_times.size() && p.time >= sample_times[next_sample]) {
        snapshots.push_back(p);
        snapshot_record.push_back(tr.times.size() - 1);
        ++next_sample;
      }
    }
  }

  DecayVerdicts v;
  evaluate_envelopes(tr, lambda_inf, opts.envelope_tol, v.envelope_I, v.envelope_KL,
                     v.envelope_L1);

  v.dissipation_ok = true;
  for (size_t s = 0; s < snapshots.size(); ++s) {
    const size_t k = snapshot_record[s];
    if (k == 0 || k + 1 >= tr.times.size()) continue;
    const double dIdt = (tr.I_az[k + 1] - tr.I_az[k - 1]) / (tr.times[k + 1] - tr.times[k - 1]);
    const double rhs = fisher_dissipation_rhs(model, snapshots[s]);
    const double err = std::abs(dIdt - rhs) / std::max(std::abs(rhs), 1e-300);
    v.sample_times.push_back(snapshots[s].time);
    v.measured_dIdt.push_back(dIdt);
    v.predicted_dIdt.push_back(rhs);
    v.max_dissipation_err = std::max(v.max_dissipation_err, err);
    if (err > opts.dissipation_tol) v.dissipation_ok = false;
  }

  // least-squares slope of log I over the usable part, as a diagnostic
  {
    std::vector<double> ts, ys;
    for (size_t k = 0; k < tr.times.size(); ++k)
      if (tr.I_az[k] > 1e-12 * tr.I0) {
        ts.push_back(tr.times[k]);
        ys.push_back(std::log(tr.I_az[k]));
      }
    if (ts.size() >= 2) {
      double st = 0, sy = 0, stt = 0, sty = 0;
      for (size_t k = 0; k < ts.size(); ++k) {
        st += ts[k];
        sy += ys[k];
        stt += ts[k] * ts[k];
        sty += ts[k] * ys[k];
      }
      const double nN = static_cast<double>(ts.size());
      const double slope = (nN * sty - st * sy) / (nN * stt - st * st);
      tr.fitted_rate_I = -0.5 * slope;
    }
  }
  return {tr, v};
}

}  // namespace hyporate

#endif  // HYPORATE_FPE_HPP_
