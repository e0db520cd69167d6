#ifndef HYPORATE_MODEL_HPP_
#define HYPORATE_MODEL_HPP_

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hyporate/errors.hpp"
#include "hyporate/fd.hpp"
#include "hyporate/grid.hpp"
#include "hyporate/linalg.hpp"

namespace hyporate {

enum class Family { Generic, DiagonalNondegenerate, Underdamped1D, OscillatorChain3 };

struct Domain {
  Vec lo, hi;
  std::vector<bool> periodic;
};

/// Scalar potential with analytic derivatives. d3/d4 are only consulted by
/// variable-friction models (r = 1/V'' needs them for r', r'').
struct Potential1D {
  std::function<double(double)> v, d1, d2, d3, d4;
};

inline Potential1D quadratic_potential(double k = 1.0) {
  return {[k](double x) { return 0.5 * k * x * x; },
          [k](double x) { return k * x; },
          [k](double) { return k; },
          [](double) { return 0.0; },
          [](double) { return 0.0; }};
}

/// V(x) = (x^p - x)/scale on x > 0.
inline Potential1D power_linear_potential(double p, double scale) {
  return {[p, scale](double x) { return (std::pow(x, p) - x) / scale; },
          [p, scale](double x) { return (p * std::pow(x, p - 1) - 1.0) / scale; },
          [p, scale](double x) { return p * (p - 1) * std::pow(x, p - 2) / scale; },
          [p, scale](double x) { return p * (p - 1) * (p - 2) * std::pow(x, p - 3) / scale; },
          [p, scale](double x) { return p * (p - 1) * (p - 2) * (p - 3) * std::pow(x, p - 4) / scale; }};
}

/// V(x) = c (1 - cos x), periodic pinning/interaction potential.
inline Potential1D trig_potential(double c = 1.0) {
  return {[c](double x) { return c * (1.0 - std::cos(x)); },
          [c](double x) { return c * std::sin(x); },
          [c](double x) { return c * std::cos(x); },
          [c](double x) { return -c * std::sin(x); },
          [c](double x) { return -c * std::cos(x); }};
}

namespace fd {

template <class F>
Mat mat_d1(const F& f, Vec x, int axis, double h) {
  const double x0 = x[axis];
  x[axis] = x0 - 2 * h;
  Mat fm2 = f(x);
  x[axis] = x0 - h;
  Mat fm1 = f(x);
  x[axis] = x0 + h;
  Mat fp1 = f(x);
  x[axis] = x0 + 2 * h;
  Mat fp2 = f(x);
  return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
}

template <class F>
Mat mat_d2_same(const F& f, Vec x, int axis, double h) {
  const double x0 = x[axis];
  Mat f0 = f(x);
  x[axis] = x0 - 2 * h;
  Mat fm2 = f(x);
  x[axis] = x0 - h;
  Mat fm1 = f(x);
  x[axis] = x0 + h;
  Mat fp1 = f(x);
  x[axis] = x0 + 2 * h;
  Mat fp2 = f(x);
  return (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
}

template <class F>
Mat mat_d2(const F& f, const Vec& x, int a, int b) {
  const double h = step2(x);
  if (a == b) return mat_d2_same(f, x, a, h);
  auto inner = [&](const Vec& y) { return mat_d1(f, y, a, h); };
  return mat_d1(inner, x, b, h);
}

}  // namespace fd

/// An SDE model dX = b dt + sqrt(2) a dB with auxiliary directions z and a
/// known (un-normalized) log invariant density. Evaluation is const and
/// thread-safe; instances are immutable after construction. Derivative
/// methods default to 4th-order finite differences of the value methods;
/// built-in families override them with closed forms.
class Model {
 public:
  virtual ~Model() = default;

  virtual Family family() const = 0;
  virtual int n() const = 0;
  virtual int m() const = 0;
  int dim() const { return n() + m(); }

  virtual Vec drift(const Vec& x) const = 0;
  virtual Mat diffusion(const Vec& x) const = 0;  // dim x n
  virtual Mat auxiliary(const Vec& x) const = 0;  // dim x m
  virtual double log_pi(const Vec& x) const = 0;

  const Domain& domain() const { return domain_; }
  void set_domain(Domain d) { domain_ = std::move(d); }

  virtual Mat diffusion_d1(const Vec& x, int h) const {
    return fd::mat_d1([this](const Vec& y) { return diffusion(y); }, x, h, fd::step1(x));
  }
  virtual Mat diffusion_d2(const Vec& x, int h, int g) const {
    return fd::mat_d2([this](const Vec& y) { return diffusion(y); }, x, h, g);
  }
  virtual Mat auxiliary_d1(const Vec& x, int h) const {
    return fd::mat_d1([this](const Vec& y) { return auxiliary(y); }, x, h, fd::step1(x));
  }
  virtual Mat auxiliary_d2(const Vec& x, int h, int g) const {
    return fd::mat_d2([this](const Vec& y) { return auxiliary(y); }, x, h, g);
  }
  virtual Vec grad_log_pi(const Vec& x) const {
    Vec g(dim());
    for (int a = 0; a < dim(); ++a)
      g[a] = fd::d1([this](const Vec& y) { return log_pi(y); }, x, a);
    return g;
  }
  virtual Mat hess_log_pi(const Vec& x) const {
    Mat h(dim(), dim());
    for (int a = 0; a < dim(); ++a)
      for (int b = a; b < dim(); ++b) {
        h(a, b) = fd::d2([this](const Vec& y) { return log_pi(y); }, x, a, b);
        h(b, a) = h(a, b);
      }
    return h;
  }
  /// (h, j) entry is the derivative of drift component j along axis h.
  virtual Mat drift_jacobian(const Vec& x) const {
    Mat j(dim(), dim());
    for (int a = 0; a < dim(); ++a) {
      Vec row = fd::mat_d1([this](const Vec& y) -> Mat { return drift(y); }, x, a, fd::step1(x));
      j.row(a) = row.transpose();
    }
    return j;
  }

 protected:
  Domain domain_;
};

namespace detail {
inline void require_finite(const Mat& v, const char* what, const Vec& x) {
  if (!v.allFinite()) {
    std::string msg = std::string(what) + " evaluates non-finite at x = [";
    for (int i = 0; i < x.size(); ++i) msg += (i ? "," : "") + std::to_string(x[i]);
    throw NonFiniteField(msg + "]");
  }
}
}  // namespace detail

/// gamma = a a^T grad(log pi) - b + row divergences of a a^T.
inline Vec compute_gamma(const Model& model, const Vec& x) {
  const int d = model.dim();
  const Mat A = model.diffusion(x);
  const Vec b = model.drift(x);
  const Vec s = model.grad_log_pi(x);
  detail::require_finite(A, "diffusion", x);
  detail::require_finite(b, "drift", x);
  detail::require_finite(s, "grad log pi", x);
  const Mat M = A * A.transpose();
  Vec corr = Vec::Zero(d);
  for (int j = 0; j < d; ++j) {
    Mat dAj = model.diffusion_d1(x, j);
    Mat dMj = dAj * A.transpose() + A * dAj.transpose();
    corr += dMj.col(j);
  }
  return M * s - b + corr;
}

/// (i, j) entry is the derivative of gamma_j along axis i.
inline Mat gamma_jacobian(const Model& model, const Vec& x) {
  const int d = model.dim();
  const Mat A = model.diffusion(x);
  const Mat M = A * A.transpose();
  const Vec s = model.grad_log_pi(x);
  const Mat Hs = model.hess_log_pi(x);
  const Mat Jb = model.drift_jacobian(x);

  std::vector<Mat> dA(d), dM(d);
  for (int h = 0; h < d; ++h) {
    dA[h] = model.diffusion_d1(x, h);
    dM[h] = dA[h] * A.transpose() + A * dA[h].transpose();
  }
  Mat J(d, d);
  for (int i = 0; i < d; ++i) {
    Vec dMs = dM[i] * s + M * Hs.col(i);
    Vec dcorr = Vec::Zero(d);
    for (int k = 0; k < d; ++k) {
      Mat d2A_ik = model.diffusion_d2(x, i, k);
      Mat d2M_ik = d2A_ik * A.transpose() + dA[k] * dA[i].transpose() +
                   dA[i] * dA[k].transpose() + A * d2A_ik.transpose();
      dcorr += d2M_ik.col(k);
    }
    J.row(i) = (dMs - Jb.row(i).transpose() + dcorr).transpose();
  }
  return J;
}

// ---------------------------------------------------------------------------
// Shared per-point evaluation cache for tensor assembly and Gamma calculus.
// ---------------------------------------------------------------------------

struct PointData {
  int n = 0, m = 0, d = 0;
  Vec x;
  Mat A, Z;
  std::vector<Mat> dA, dZ;                 // d entries
  std::vector<std::vector<Mat>> d2A, d2Z;  // d x d entries
  Vec s;                                   // grad log pi
  Mat Hs;                                  // hess log pi
  Mat M, N;                                // a a^T, z z^T
  std::vector<Mat> dM, dN;
  std::vector<std::vector<Mat>> d2M, d2N;
  Vec gamma;
  Mat Jgamma;  // (i,j) = d_i gamma_j
  Vec w;       // M s
  Mat Jw;      // (alpha, h) = d_alpha w_h
  Vec divA, divZ;  // column divergences
  Vec divM, divN;  // divM[g] = sum_h d_h M(h,g)
};

inline PointData make_point_data(const Model& model, const Vec& x) {
  PointData p;
  p.n = model.n();
  p.m = model.m();
  p.d = model.dim();
  p.x = x;
  p.A = model.diffusion(x);
  p.Z = model.auxiliary(x);
  p.s = model.grad_log_pi(x);
  p.Hs = model.hess_log_pi(x);
  detail::require_finite(p.A, "diffusion", x);
  detail::require_finite(p.Z, "auxiliary", x);
  detail::require_finite(p.s, "grad log pi", x);
  detail::require_finite(p.Hs, "hess log pi", x);

  const int d = p.d;
  p.dA.resize(d);
  p.dZ.resize(d);
  for (int h = 0; h < d; ++h) {
    p.dA[h] = model.diffusion_d1(x, h);
    p.dZ[h] = model.auxiliary_d1(x, h);
  }
  p.d2A.assign(d, std::vector<Mat>(d));
  p.d2Z.assign(d, std::vector<Mat>(d));
  for (int h = 0; h < d; ++h)
    for (int g = h; g < d; ++g) {
      p.d2A[h][g] = model.diffusion_d2(x, h, g);
      p.d2Z[h][g] = model.auxiliary_d2(x, h, g);
      if (g != h) {
        p.d2A[g][h] = p.d2A[h][g];
        p.d2Z[g][h] = p.d2Z[h][g];
      }
    }

  p.M = p.A * p.A.transpose();
  p.N = p.Z * p.Z.transpose();
  p.dM.resize(d);
  p.dN.resize(d);
  for (int h = 0; h < d; ++h) {
    p.dM[h] = p.dA[h] * p.A.transpose() + p.A * p.dA[h].transpose();
    p.dN[h] = p.dZ[h] * p.Z.transpose() + p.Z * p.dZ[h].transpose();
  }
  p.d2M.assign(d, std::vector<Mat>(d));
  p.d2N.assign(d, std::vector<Mat>(d));
  for (int h = 0; h < d; ++h)
    for (int g = h; g < d; ++g) {
      p.d2M[h][g] = p.d2A[h][g] * p.A.transpose() + p.dA[g] * p.dA[h].transpose() +
                    p.dA[h] * p.dA[g].transpose() + p.A * p.d2A[h][g].transpose();
      p.d2N[h][g] = p.d2Z[h][g] * p.Z.transpose() + p.dZ[g] * p.dZ[h].transpose() +
                    p.dZ[h] * p.dZ[g].transpose() + p.Z * p.d2Z[h][g].transpose();
      if (g != h) {
        p.d2M[g][h] = p.d2M[h][g];
        p.d2N[g][h] = p.d2N[h][g];
      }
    }

  const Vec b = model.drift(x);
  detail::require_finite(b, "drift", x);
  p.w = p.M * p.s;
  Vec corr = Vec::Zero(d);
  for (int j = 0; j < d; ++j) corr += p.dM[j].col(j);
  p.gamma = p.w - b + corr;

  const Mat Jb = model.drift_jacobian(x);
  p.Jw.resize(d, d);
  for (int a = 0; a < d; ++a) p.Jw.row(a) = (p.dM[a] * p.s + p.M * p.Hs.col(a)).transpose();
  p.Jgamma.resize(d, d);
  for (int i = 0; i < d; ++i) {
    Vec dcorr = Vec::Zero(d);
    for (int k = 0; k < d; ++k) dcorr += p.d2M[i][k].col(k);
    p.Jgamma.row(i) = (p.Jw.row(i).transpose() - Jb.row(i).transpose() + dcorr).transpose();
  }

  p.divA = Vec::Zero(p.n);
  for (int i = 0; i < p.n; ++i)
    for (int h = 0; h < d; ++h) p.divA[i] += p.dA[h](h, i);
  p.divZ = Vec::Zero(p.m);
  for (int k = 0; k < p.m; ++k)
    for (int h = 0; h < d; ++h) p.divZ[k] += p.dZ[h](h, k);
  p.divM = Vec::Zero(d);
  p.divN = Vec::Zero(d);
  for (int g = 0; g < d; ++g)
    for (int h = 0; h < d; ++h) {
      p.divM[g] += p.dM[h](h, g);
      p.divN[g] += p.dN[h](h, g);
    }
  return p;
}

// ---------------------------------------------------------------------------
// Stationarity of the decomposition: div(pi gamma) = 0.
// ---------------------------------------------------------------------------

struct StationarityReport {
  bool pass = false;
  double max_residual = 0.0;
  Vec worst_point;
  std::vector<double> residuals;
};

/// Normalized residual |div(pi gamma)| / (1 + pi |gamma|) over a point set.
/// fd_step = 0 uses the model's derivative methods (analytic for built-ins);
/// fd_step > 0 differentiates the product pi*gamma directly with a 4th-order
/// stencil at that step.
inline StationarityReport check_stationarity(const Model& model, const std::vector<Vec>& points,
                                             double tol, double fd_step = 0.0) {
  StationarityReport rep;
  rep.residuals.reserve(points.size());
  for (const Vec& x : points) {
    const double pi = std::exp(model.log_pi(x));
    const Vec gamma = compute_gamma(model, x);
    double div_pg;
    if (fd_step > 0.0) {
      div_pg = 0.0;
      for (int j = 0; j < model.dim(); ++j)
        div_pg += fd::d1(
            [&model, j](const Vec& y) {
              return std::exp(model.log_pi(y)) * compute_gamma(model, y)[j];
            },
            x, j, fd_step);
    } else {
      const Vec s = model.grad_log_pi(x);
      const Mat Jg = gamma_jacobian(model, x);
      div_pg = pi * (s.dot(gamma) + Jg.trace());
    }
    const double res = std::abs(div_pg) / (1.0 + pi * gamma.norm());
    rep.residuals.push_back(res);
    if (res >= rep.max_residual) {
      rep.max_residual = res;
      rep.worst_point = x;
    }
  }
  rep.pass = rep.max_residual < tol;
  return rep;
}

inline void require_stationarity(const Model& model, const std::vector<Vec>& points, double tol) {
  StationarityReport rep = check_stationarity(model, points, tol);
  if (!rep.pass)
    throw ToleranceExceeded("stationarity residual " + std::to_string(rep.max_residual) +
                                " exceeds tol at worst point",
                            rep.max_residual);
}

// ---------------------------------------------------------------------------
// Structure condition: z_k^T grad a_i^T lies in the row span of a^T.
// ---------------------------------------------------------------------------

struct StructureReport {
  bool pass = false;
  double max_residual = 0.0;  // relative
  int worst_k = -1, worst_i = -1;
  std::vector<Mat> coeffs;  // per k: n x n, row i holds the fitted span coefficients
};

inline StructureReport check_structure_condition(const Model& model, const Vec& x, double tol) {
  StructureReport rep;
  const int n = model.n(), m = model.m(), d = model.dim();
  rep.coeffs.assign(std::max(m, 0), Mat::Zero(n, n));
  if (m == 0 || n == 0) {
    rep.pass = true;
    return rep;
  }
  const Mat A = model.diffusion(x);
  const Mat Z = model.auxiliary(x);
  std::vector<Mat> dA(d);
  for (int h = 0; h < d; ++h) dA[h] = model.diffusion_d1(x, h);

  Eigen::CompleteOrthogonalDecomposition<Mat> cod(A);
  const bool deficient = cod.rank() < n;
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < n; ++i) {
      Vec w = Vec::Zero(d);
      for (int alpha = 0; alpha < d; ++alpha) w += Z(alpha, k) * dA[alpha].col(i);
      Vec c = cod.solve(w);
      rep.coeffs[k].row(i) = c.transpose();
      const double wn = w.norm();
      const double res = wn < 1e-150 ? 0.0 : (A * c - w).norm() / wn;
      if (res >= rep.max_residual) {
        rep.max_residual = res;
        rep.worst_k = k;
        rep.worst_i = i;
      }
    }
  }
  if (deficient && rep.max_residual >= tol)
    throw RankDeficientSpan("diffusion rows numerically dependent; span-membership verdict ambiguous");
  rep.pass = rep.max_residual < tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Frame expansion coefficients lambda, omega, alpha.
// ---------------------------------------------------------------------------

struct ExpansionCoefficients {
  std::vector<Mat> lambda;  // d mats of n x d: lambda[h](k,l) expands d_h of a-row k
  std::vector<Mat> omega;   // d mats of m x d
  Vec alpha;                // d
  double lambda_residual = 0.0, omega_residual = 0.0, alpha_residual = 0.0;
  double frame_condition = 0.0;
};

struct ExpansionOptions {
  double cond_cap = 1e12;
  bool strict = true;  // throw SingularFrame above the cap
};

inline ExpansionCoefficients expansion_coefficients(const PointData& p,
                                                    const ExpansionOptions& opts = {}) {
  const int n = p.n, m = p.m, d = p.d;
  Mat F(d, d);
  F.leftCols(n) = p.A;
  if (m > 0) F.rightCols(m) = p.Z;

  Eigen::JacobiSVD<Mat> svd(F, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues()[0];
  const double smin = svd.singularValues()[d - 1];
  ExpansionCoefficients out;
  out.frame_condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (opts.strict && !(out.frame_condition < opts.cond_cap))
    throw SingularFrame("frame [a z] condition " + std::to_string(out.frame_condition) +
                        " above cap");
  svd.setThreshold(1e-13);

  auto solve = [&](const Vec& rhs, double& worst) {
    Vec c = svd.solve(rhs);
    const double rn = rhs.norm();
    const double res = rn < 1e-150 ? 0.0 : (F * c - rhs).norm() / rn;
    worst = std::max(worst, res);
    return c;
  };

  out.lambda.assign(d, Mat::Zero(n, d));
  out.omega.assign(d, Mat::Zero(std::max(m, 0), d));
  for (int h = 0; h < d; ++h) {
    for (int k = 0; k < n; ++k)
      out.lambda[h].row(k) = solve(p.dA[h].col(k), out.lambda_residual).transpose();
    for (int k = 0; k < m; ++k)
      out.omega[h].row(k) = solve(p.dZ[h].col(k), out.omega_residual).transpose();
  }
  out.alpha = solve(p.gamma, out.alpha_residual);
  return out;
}

inline ExpansionCoefficients expansion_coefficients(const Model& model, const Vec& x,
                                                    const ExpansionOptions& opts = {}) {
  return expansion_coefficients(make_point_data(model, x), opts);
}

// ---------------------------------------------------------------------------
// Built-in families.
// ---------------------------------------------------------------------------

struct GenericFields {
  std::function<Vec(const Vec&)> drift;
  std::function<Mat(const Vec&)> diffusion;
  std::function<Mat(const Vec&)> auxiliary;
  std::function<double(const Vec&)> log_pi;
  // optional analytic derivatives; finite differences when absent
  std::function<Mat(const Vec&, int)> diffusion_d1, auxiliary_d1;
  std::function<Mat(const Vec&, int, int)> diffusion_d2, auxiliary_d2;
  std::function<Vec(const Vec&)> grad_log_pi;
  std::function<Mat(const Vec&)> hess_log_pi;
  std::function<Mat(const Vec&)> drift_jacobian;
};

class GenericModel : public Model {
 public:
  GenericModel(int n, int m, GenericFields fields, Domain dom)
      : n_(n), m_(m), f_(std::move(fields)) {
    domain_ = std::move(dom);
  }

  Family family() const override { return Family::Generic; }
  int n() const override { return n_; }
  int m() const override { return m_; }
  Vec drift(const Vec& x) const override { return f_.drift(x); }
  Mat diffusion(const Vec& x) const override { return f_.diffusion(x); }
  Mat auxiliary(const Vec& x) const override {
    return f_.auxiliary ? f_.auxiliary(x) : Mat::Zero(dim(), m_);
  }
  double log_pi(const Vec& x) const override { return f_.log_pi(x); }

  Mat diffusion_d1(const Vec& x, int h) const override {
    return f_.diffusion_d1 ? f_.diffusion_d1(x, h) : Model::diffusion_d1(x, h);
  }
  Mat diffusion_d2(const Vec& x, int h, int g) const override {
    return f_.diffusion_d2 ? f_.diffusion_d2(x, h, g) : Model::diffusion_d2(x, h, g);
  }
  Mat auxiliary_d1(const Vec& x, int h) const override {
    if (f_.auxiliary_d1) return f_.auxiliary_d1(x, h);
    if (!f_.auxiliary) return Mat::Zero(dim(), m_);
    return Model::auxiliary_d1(x, h);
  }
  Mat auxiliary_d2(const Vec& x, int h, int g) const override {
    if (f_.auxiliary_d2) return f_.auxiliary_d2(x, h, g);
    if (!f_.auxiliary) return Mat::Zero(dim(), m_);
    return Model::auxiliary_d2(x, h, g);
  }
  Vec grad_log_pi(const Vec& x) const override {
    return f_.grad_log_pi ? f_.grad_log_pi(x) : Model::grad_log_pi(x);
  }
  Mat hess_log_pi(const Vec& x) const override {
    return f_.hess_log_pi ? f_.hess_log_pi(x) : Model::hess_log_pi(x);
  }
  Mat drift_jacobian(const Vec& x) const override {
    return f_.drift_jacobian ? f_.drift_jacobian(x) : Model::drift_jacobian(x);
  }

 private:
  int n_, m_;
  GenericFields f_;
};

/// Diagonal non-degenerate family: a = diag(a_ii(x_i)), z absent, pi = e^-V,
/// drift b = -a a^T grad V + row divergences of a a^T - gamma with a
/// user-supplied divergence-free (w.r.t. e^-V) gamma.
struct DiagonalCoef {
  std::function<double(double)> a, a1, a2;
};

class DiagonalModel : public Model {
 public:
  DiagonalModel(std::vector<DiagonalCoef> coef, std::function<double(const Vec&)> V,
                std::function<Vec(const Vec&)> gradV, std::function<Mat(const Vec&)> hessV,
                std::function<Vec(const Vec&)> gamma, std::function<Mat(const Vec&)> gamma_jac,
                Domain dom)
      : coef_(std::move(coef)),
        V_(std::move(V)),
        gradV_(std::move(gradV)),
        hessV_(std::move(hessV)),
        gamma_(std::move(gamma)),
        gamma_jac_(std::move(gamma_jac)) {
    domain_ = std::move(dom);
  }

  Family family() const override { return Family::DiagonalNondegenerate; }
  int n() const override { return static_cast<int>(coef_.size()); }
  int m() const override { return 0; }

  Vec drift(const Vec& x) const override {
    const int nn = n();
    Vec b(nn);
    const Vec gV = gradV_(x);
    const Vec g = gamma_(x);
    for (int i = 0; i < nn; ++i) {
      const double a = coef_[i].a(x[i]);
      const double a1 = coef_[i].a1(x[i]);
      b[i] = -a * a * gV[i] + 2.0 * a * a1 - g[i];
    }
    return b;
  }
  Mat diffusion(const Vec& x) const override {
    Mat A = Mat::Zero(n(), n());
    for (int i = 0; i < n(); ++i) A(i, i) = coef_[i].a(x[i]);
    return A;
  }
  Mat auxiliary(const Vec&) const override { return Mat::Zero(n(), 0); }
  double log_pi(const Vec& x) const override { return -V_(x); }

  Mat diffusion_d1(const Vec& x, int h) const override {
    Mat d = Mat::Zero(n(), n());
    d(h, h) = coef_[h].a1(x[h]);
    return d;
  }
  Mat diffusion_d2(const Vec& x, int h, int g) const override {
    Mat d = Mat::Zero(n(), n());
    if (h == g) d(h, h) = coef_[h].a2(x[h]);
    return d;
  }
  Mat auxiliary_d1(const Vec&, int) const override { return Mat::Zero(n(), 0); }
  Mat auxiliary_d2(const Vec&, int, int) const override { return Mat::Zero(n(), 0); }
  Vec grad_log_pi(const Vec& x) const override { return -gradV_(x); }
  Mat hess_log_pi(const Vec& x) const override { return -hessV_(x); }
  Mat drift_jacobian(const Vec& x) const override {
    const int nn = n();
    const Vec gV = gradV_(x);
    const Mat HV = hessV_(x);
    const Mat Jg = gamma_jac_(x);
    Mat J = Mat::Zero(nn, nn);
    for (int h = 0; h < nn; ++h)
      for (int j = 0; j < nn; ++j) {
        const double a = coef_[j].a(x[j]);
        double v = -a * a * HV(h, j);
        if (h == j) {
          const double a1 = coef_[j].a1(x[j]);
          const double a2 = coef_[j].a2(x[j]);
          v += -2.0 * a * a1 * gV[j] + 2.0 * (a1 * a1 + a * a2);
        }
        J(h, j) = v - Jg(h, j);
      }
    return J;
  }

  const DiagonalCoef& coef(int i) const { return coef_[i]; }
  Vec gamma_field(const Vec& x) const { return gamma_(x); }
  Mat gamma_field_jacobian(const Vec& x) const { return gamma_jac_(x); }
  double potential(const Vec& x) const { return V_(x); }
  Vec potential_grad(const Vec& x) const { return gradV_(x); }
  Mat potential_hess(const Vec& x) const { return hessV_(x); }

 private:
  std::vector<DiagonalCoef> coef_;
  std::function<double(const Vec&)> V_;
  std::function<Vec(const Vec&)> gradV_;
  std::function<Mat(const Vec&)> hessV_;
  std::function<Vec(const Vec&)> gamma_;
  std::function<Mat(const Vec&)> gamma_jac_;
};

/// Underdamped Langevin dynamics in one spatial dimension: state (x, v),
/// dx = v dt, dv = (-r(x) v - U'(x)) dt + sqrt(2 r(x)) dB.
struct FrictionSpec {
  enum Kind { Constant, InverseHessian } kind = Constant;
  double value = 1.0;
};

class Underdamped1DModel : public Model {
 public:
  Underdamped1DModel(Potential1D U, FrictionSpec friction, Eigen::Vector2d z, Domain dom)
      : U_(std::move(U)), friction_(friction), z_(z) {
    domain_ = std::move(dom);
  }

  Family family() const override { return Family::Underdamped1D; }
  int n() const override { return 1; }
  int m() const override { return 1; }

  double r(double x) const {
    return friction_.kind == FrictionSpec::Constant ? friction_.value : 1.0 / U_.d2(x);
  }
  double r1(double x) const {
    if (friction_.kind == FrictionSpec::Constant) return 0.0;
    const double u2 = U_.d2(x);
    return -U_.d3(x) / (u2 * u2);
  }
  double r2(double x) const {
    if (friction_.kind == FrictionSpec::Constant) return 0.0;
    const double u2 = U_.d2(x), u3 = U_.d3(x), u4 = U_.d4(x);
    return -u4 / (u2 * u2) + 2.0 * u3 * u3 / (u2 * u2 * u2);
  }

  Vec drift(const Vec& x) const override {
    Vec b(2);
    b[0] = x[1];
    b[1] = -r(x[0]) * x[1] - U_.d1(x[0]);
    return b;
  }
  Mat diffusion(const Vec& x) const override {
    const double rx = r(x[0]);
    if (!std::isfinite(rx))
      throw NonFiniteField("friction evaluates non-finite at x = " + std::to_string(x[0]));
    if (!(rx > 0.0)) throw NonPositiveDiffusion("r(x) <= 0 at x = " + std::to_string(x[0]));
    Mat A(2, 1);
    A << 0.0, std::sqrt(rx);
    return A;
  }
  Mat auxiliary(const Vec&) const override {
    Mat Z(2, 1);
    Z << z_[0], z_[1];
    return Z;
  }
  double log_pi(const Vec& x) const override { return -(0.5 * x[1] * x[1] + U_.v(x[0])); }

  Mat diffusion_d1(const Vec& x, int h) const override {
    Mat d = Mat::Zero(2, 1);
    if (h == 0) d(1, 0) = sqrt_r_d1(x[0]);
    return d;
  }
  Mat diffusion_d2(const Vec& x, int h, int g) const override {
    Mat d = Mat::Zero(2, 1);
    if (h == 0 && g == 0) d(1, 0) = sqrt_r_d2(x[0]);
    return d;
  }
  Mat auxiliary_d1(const Vec&, int) const override { return Mat::Zero(2, 1); }
  Mat auxiliary_d2(const Vec&, int, int) const override { return Mat::Zero(2, 1); }
  Vec grad_log_pi(const Vec& x) const override {
    Vec g(2);
    g << -U_.d1(x[0]), -x[1];
    return g;
  }
  Mat hess_log_pi(const Vec& x) const override {
    Mat h = Mat::Zero(2, 2);
    h(0, 0) = -U_.d2(x[0]);
    h(1, 1) = -1.0;
    return h;
  }
  Mat drift_jacobian(const Vec& x) const override {
    Mat j(2, 2);
    j(0, 0) = 0.0;
    j(0, 1) = -r1(x[0]) * x[1] - U_.d2(x[0]);
    j(1, 0) = 1.0;
    j(1, 1) = -r(x[0]);
    return j;
  }

  Underdamped1DModel with_z(const Eigen::Vector2d& z) const {
    Underdamped1DModel copy = *this;
    copy.z_ = z;
    return copy;
  }

  const Potential1D& potential() const { return U_; }
  const Eigen::Vector2d& z() const { return z_; }

 private:
  double sqrt_r_d1(double x) const { return r1(x) / (2.0 * std::sqrt(r(x))); }
  double sqrt_r_d2(double x) const {
    const double rx = r(x), rp = r1(x), rpp = r2(x);
    const double s = std::sqrt(rx);
    return rpp / (2.0 * s) - rp * rp / (4.0 * rx * s);
  }

  Potential1D U_;
  FrictionSpec friction_;
  Eigen::Vector2d z_;
};

/// Three-oscillator chain with nearest-neighbor coupling: state
/// (q0,q1,q2,p0,p1,p2), heat baths at the two ends (xi0 = xi2 = xi), Gibbs
/// invariant measure exp(-H/T).
struct Z32Spec {
  enum Kind { Constant, QuadraticWell } kind = Constant;  // QuadraticWell: N - eps p0^2 / 2
  double value = 1.0;                                     // constant value, or N
  double eps = 0.0;

  double eval(double p0) const {
    return kind == Constant ? value : value - 0.5 * eps * p0 * p0;
  }
  double d_p0(double p0) const { return kind == Constant ? 0.0 : -eps * p0; }
  double d2_p0p0() const { return kind == Constant ? 0.0 : -eps; }
};

struct OscillatorZ {
  double z1 = 1.0, z2 = 0.2, z31 = 0.0, z33 = 0.0;
  Z32Spec z32;
};

class OscillatorChain3Model : public Model {
 public:
  OscillatorChain3Model(Potential1D V1, Potential1D V2, double xi, double T, OscillatorZ z,
                        Domain dom)
      : V1_(std::move(V1)), V2_(std::move(V2)), xi_(xi), T_(T), z_(z) {
    domain_ = std::move(dom);
  }

  Family family() const override { return Family::OscillatorChain3; }
  int n() const override { return 2; }
  int m() const override { return 4; }

  double hamiltonian(const Vec& x) const {
    double h = 0.0;
    for (int i = 0; i < 3; ++i) h += 0.5 * x[3 + i] * x[3 + i] + V1_.v(x[i]);
    h += V2_.v(x[1] - x[0]) + V2_.v(x[2] - x[1]);
    return h;
  }
  Vec grad_q_H(const Vec& x) const {
    const double d1 = x[1] - x[0], d2 = x[2] - x[1];
    Vec g(3);
    g[0] = V1_.d1(x[0]) - V2_.d1(d1);
    g[1] = V1_.d1(x[1]) + V2_.d1(d1) - V2_.d1(d2);
    g[2] = V1_.d1(x[2]) + V2_.d1(d2);
    return g;
  }
  /// Hessian of H in the q block (the matrix the eigenvalue bounds refer to).
  Mat qq_hessian(const Vec& x) const {
    const double a = V2_.d2(x[1] - x[0]), b = V2_.d2(x[2] - x[1]);
    Mat L = Mat::Zero(3, 3);
    L(0, 0) = V1_.d2(x[0]) + a;
    L(0, 1) = L(1, 0) = -a;
    L(1, 1) = V1_.d2(x[1]) + a + b;
    L(1, 2) = L(2, 1) = -b;
    L(2, 2) = V1_.d2(x[2]) + b;
    return L;
  }

  Vec drift(const Vec& x) const override {
    Vec b(6);
    const Vec gq = grad_q_H(x);
    b[0] = x[3];
    b[1] = x[4];
    b[2] = x[5];
    b[3] = -xi_ * x[3] - gq[0];
    b[4] = -gq[1];
    b[5] = -xi_ * x[5] - gq[2];
    return b;
  }
  Mat diffusion(const Vec&) const override {
    Mat A = Mat::Zero(6, 2);
    const double c = std::sqrt(xi_ * T_);
    A(3, 0) = c;
    A(5, 1) = c;
    return A;
  }
  Mat auxiliary(const Vec& x) const override {
    Mat Z = Mat::Zero(6, 4);
    for (int i = 0; i < 3; ++i) {
      Z(i, i) = z_.z1;
      Z(3 + i, i) = z_.z2;
    }
    Z(3, 3) = z_.z31;
    Z(4, 3) = z_.z32.eval(x[3]);
    Z(5, 3) = z_.z33;
    return Z;
  }
  double log_pi(const Vec& x) const override { return -hamiltonian(x) / T_; }

  Mat diffusion_d1(const Vec&, int) const override { return Mat::Zero(6, 2); }
  Mat diffusion_d2(const Vec&, int, int) const override { return Mat::Zero(6, 2); }
  Mat auxiliary_d1(const Vec& x, int h) const override {
    Mat d = Mat::Zero(6, 4);
    if (h == 3) d(4, 3) = z_.z32.d_p0(x[3]);
    return d;
  }
  Mat auxiliary_d2(const Vec&, int h, int g) const override {
    Mat d = Mat::Zero(6, 4);
    if (h == 3 && g == 3) d(4, 3) = z_.z32.d2_p0p0();
    return d;
  }
  Vec grad_log_pi(const Vec& x) const override {
    Vec g(6);
    const Vec gq = grad_q_H(x);
    for (int i = 0; i < 3; ++i) {
      g[i] = -gq[i] / T_;
      g[3 + i] = -x[3 + i] / T_;
    }
    return g;
  }
  Mat hess_log_pi(const Vec& x) const override {
    Mat h = Mat::Zero(6, 6);
    h.topLeftCorner(3, 3) = -qq_hessian(x) / T_;
    h.bottomRightCorner(3, 3) = -Mat::Identity(3, 3) / T_;
    return h;
  }
  Mat drift_jacobian(const Vec& x) const override {
    Mat j = Mat::Zero(6, 6);
    const Mat L = qq_hessian(x);
    // d_h b_j with b = (p, -xi*p - grad_q H), xi* = (xi, 0, xi)
    for (int i = 0; i < 3; ++i) j(3 + i, i) = 1.0;
    j.block(0, 3, 3, 3) = -L;
    j(3, 3) -= xi_;
    j(5, 5) -= xi_;
    return j;
  }

  double xi() const { return xi_; }
  double temperature() const { return T_; }
  const OscillatorZ& z_params() const { return z_; }
  const Potential1D& pinning() const { return V1_; }
  const Potential1D& interaction() const { return V2_; }

 private:
  Potential1D V1_, V2_;
  double xi_, T_;
  OscillatorZ z_;
};

}  // namespace hyporate

#endif  // HYPORATE_MODEL_HPP_
