// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Each criterion pins its tolerances in code; none defer to
// runtime calibration.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hyporate/hyporate.hpp"

namespace hr = hyporate;
using hr::Mat;
using hr::Vec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const std::string& name, double budget_sec,
         const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (sec >= budget_sec) {
    out.pass = false;
    out.detail += (out.detail.empty() ? "" : "; ") + std::string("runtime budget exceeded");
  }
  std::printf("[criterion %d] %s (%.2fs, budget %gs) %s%s%s\n", id,
              out.pass ? "PASS" : "FAIL", sec, budget_sec, name.c_str(),
              out.detail.empty() ? "" : " -- ", out.detail.c_str());
  std::fflush(stdout);
  if (!out.pass) ++failures;
}

hr::Domain box2(double lo, double hi) {
  hr::Domain d;
  d.lo = Vec::Constant(2, lo);
  d.hi = Vec::Constant(2, hi);
  d.periodic = {false, false};
  return d;
}

hr::Underdamped1DModel benchmark_model(double half_box = 1.0) {
  return hr::Underdamped1DModel(hr::quadratic_potential(1.0),
                                hr::FrictionSpec{hr::FrictionSpec::Constant, 1.0}, {1.0, 0.1},
                                box2(-half_box, half_box));
}

hr::Underdamped1DModel variable_model() {
  return hr::Underdamped1DModel(hr::power_linear_potential(2.5, 3.75),
                                hr::FrictionSpec{hr::FrictionSpec::InverseHessian, 0.0},
                                {1.0, 0.1}, box2(0.5, 1.0));
}

hr::OscillatorChain3Model oscillator_model(double z2, double N, double eps, double k1,
                                           double k2) {
  hr::Domain d;
  d.lo = Vec::Constant(6, -3.0);
  d.hi = Vec::Constant(6, 3.0);
  d.periodic = {true, true, true, false, false, false};
  hr::OscillatorZ z;
  z.z1 = 1.0;
  z.z2 = z2;
  z.z32 = eps == 0.0 ? hr::Z32Spec{hr::Z32Spec::Constant, N, 0.0}
                     : hr::Z32Spec{hr::Z32Spec::QuadraticWell, N, eps};
  return hr::OscillatorChain3Model(hr::quadratic_potential(k1), hr::quadratic_potential(k2),
                                   1.0, 1.0, z, d);
}

std::vector<Vec> random_points(int count, const hr::Domain& dom, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::vector<Vec> pts;
  for (int k = 0; k < count; ++k) {
    Vec x(dom.lo.size());
    for (int a = 0; a < x.size(); ++a) x[a] = dom.lo[a] + u(rng) * (dom.hi[a] - dom.lo[a]);
    pts.push_back(x);
  }
  return pts;
}

char buf[256];

}  // namespace

int main() {
  hr::RateMap benchmark_map;  // criterion 1 output, reused by 5 and 7

  run(1, "constant-diffusion rate field is 0.0975, spatially constant", 5.0, [&]() {
    auto model = benchmark_model();
    hr::GridBox grid = hr::make_grid(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0), 41);
    benchmark_map = hr::rate_map(model, grid, 0.0);
    double lo = benchmark_map.lambda_field[0], hi = lo;
    for (double v : benchmark_map.lambda_field) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    bool ok = true;
    for (double v : benchmark_map.lambda_field) ok = ok && std::abs(v - 0.0975) <= 1e-3;
    ok = ok && (hi - lo) <= 1e-6;
    std::snprintf(buf, sizeof(buf), "lambda_inf=%.6f spread=%.2e", benchmark_map.lambda_inf,
                  hi - lo);
    return Outcome{ok, buf};
  });

  run(2, "beta=0.1 lifts the origin rate to 0.1 and beats beta=0", 5.0, [&]() {
    auto model = benchmark_model();
    Vec origin = Vec::Zero(2);
    hr::GridBox pt = hr::make_grid(origin, origin, {1, 1}, {false, false});
    const double l0 = hr::rate_map(model, pt, 0.0).lambda_inf;
    const double l1 = hr::rate_map(model, pt, 0.1).lambda_inf;
    const bool ok = std::abs(l1 - 0.1) <= 1e-3 && l1 > l0;
    std::snprintf(buf, sizeof(buf), "lambda(0,0): beta=0 -> %.6f, beta=0.1 -> %.6f", l0, l1);
    return Outcome{ok, buf};
  });

  run(3, "closed-form sufficient conditions match the quoted verdicts", 1.0, [&]() {
    hr::ConditionReport od = hr::check_1d_sufficient(1.0, 0.9, 0.9, 0.3, 0.02);
    bool ok = od.pass;
    for (const auto& [k, v] : od.margins) ok = ok && v > 0.0;

    hr::ConditionReport osc = hr::check_oscillator_sufficient(0.6, 0.65, 0.2, 1.0, 1e-7, 0.225);
    bool osc_ok = osc.pass;
    for (const auto& [k, v] : osc.margins) osc_ok = osc_ok && v > 0.0;

    hr::ConditionReport neg1 = hr::check_1d_sufficient(1.0, 0.0, 0.0, 0.3, 0.02);
    hr::ConditionReport neg2 = hr::check_oscillator_sufficient(0.0, 0.65, 0.2, 1.0, 1e-7, 0.225);
    ok = ok && !neg1.pass && !neg2.pass;

    std::string detail;
    if (!osc_ok) {
      std::snprintf(buf, sizeof(buf),
                    "oscillator leg FAILS as printed: middle-mode margin %.4f < 0 "
                    "(inequality is unsatisfiable for any lam_lo <= lam_hi, z2 > 0; "
                    "see the project notes)",
                    osc.margin("middle_mode"));
      detail = buf;
    }
    return Outcome{ok && osc_ok, detail};
  });

  run(4, "closed-form assemblers agree with the generic definition to 1e-8", 10.0, [&]() {
    double worst = 0.0;
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> ub(-0.5, 1.5);

    // diagonal family: n=1 with general a, gamma, beta
    {
      std::vector<hr::DiagonalCoef> coef = {{[](double x) { return 1.2 + 0.3 * std::sin(x); },
                                             [](double x) { return 0.3 * std::cos(x); },
                                             [](double x) { return -0.3 * std::sin(x); }}};
      auto V = [](const Vec& x) { return 0.5 * x[0] * x[0]; };
      auto gV = [](const Vec& x) { return Vec(x); };
      auto hV = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
      auto gz = [](const Vec& x) {
        Vec g(1);
        g[0] = 0.25 * std::exp(0.5 * x[0] * x[0]);
        return g;
      };
      auto gjz = [](const Vec& x) {
        Mat j(1, 1);
        j(0, 0) = 0.25 * x[0] * std::exp(0.5 * x[0] * x[0]);
        return j;
      };
      hr::Domain dom;
      dom.lo = Vec::Constant(1, -1.0);
      dom.hi = Vec::Constant(1, 1.0);
      dom.periodic = {false};
      hr::DiagonalModel dm(coef, V, gV, hV, gz, gjz, dom);
      for (const Vec& x : random_points(20, dom, 11)) {
        const double beta = ub(rng);
        worst = std::max(worst,
                         hr::relative_deviation(hr::assemble_diagonal(dm, x, beta).R_total,
                                                hr::assemble_generic(dm, x, beta).R_total));
      }
    }
    double worst_diag = worst;

    // underdamped family, constant and variable friction, random beta
    double worst_under = 0.0;
    {
      auto mc = benchmark_model();
      for (const Vec& x : random_points(20, mc.domain(), 13)) {
        const double beta = ub(rng);
        worst_under = std::max(
            worst_under,
            hr::relative_deviation(hr::assemble_underdamped(mc, x[0], x[1], beta, mc.z()).R_total,
                                   hr::assemble_generic(mc, x, beta).R_total));
      }
      auto mv = variable_model();
      for (const Vec& x : random_points(20, mv.domain(), 17)) {
        const double beta = ub(rng);
        worst_under = std::max(
            worst_under,
            hr::relative_deviation(hr::assemble_underdamped(mv, x[0], x[1], beta, mv.z()).R_total,
                                   hr::assemble_generic(mv, x, beta).R_total));
      }
    }

    // oscillator family at constant z32 (exact configuration of the display)
    double worst_osc = 0.0;
    auto om = oscillator_model(0.2, 1.0, 0.0, 0.62, 0.015);
    for (const Vec& x : random_points(20, om.domain(), 19))
      worst_osc = std::max(worst_osc,
                           hr::relative_deviation(hr::assemble_oscillator(om, x).R_total,
                                                  hr::assemble_generic(om, x, 0.0).R_total));

    // documented printed-form deviations, reported but never patched in
    auto oe = oscillator_model(0.2, 1.0, 1e-7, 0.62, 0.015);
    Vec xs = Vec::Constant(6, 0.7);
    const double dev_eps = hr::relative_deviation(hr::assemble_oscillator(oe, xs).R_total,
                                                  hr::assemble_generic(oe, xs, 0.0).R_total);
    const bool ok = worst_diag < 1e-8 && worst_under < 1e-8 && worst_osc < 1e-8;
    std::snprintf(buf, sizeof(buf),
                  "worst rel dev: diagonal %.1e, underdamped %.1e, oscillator %.1e; "
                  "printed-form gap at eps=1e-7: %.1e (reported, not patched)",
                  worst_diag, worst_under, worst_osc, dev_eps);
    return Outcome{ok, buf};
  });

  run(5, "certificate soundness: R - lambda_inf M >= -1e-9 on every grid point", 30.0, [&]() {
    auto model = benchmark_model();
    const double w1 = hr::certificate_soundness(model, benchmark_map);
    auto vm = variable_model();
    hr::GridBox vgrid = hr::make_grid(Vec::Constant(2, 0.5), Vec::Constant(2, 1.0), 41);
    hr::RateMap vmap = hr::rate_map(vm, vgrid, 0.6);
    const double w2 = hr::certificate_soundness(vm, vmap);
    std::snprintf(buf, sizeof(buf), "worst min-eig: %.2e (benchmark), %.2e (variable)", w1, w2);
    return Outcome{w1 >= -1e-9 && w2 >= -1e-9, buf};
  });

  run(6, "weak-form Bochner identity: residual < 1e-3 at 64^2, 4x decrease on doubling", 30.0,
      [&]() {
        auto model = benchmark_model(4.0);
        auto density = [&](const Vec& x) {
          return std::exp(model.log_pi(x)) * (1.0 + 0.1 * std::sin(x[0]) * std::sin(x[1]));
        };
        auto residual_at = [&](int n) {
          hr::GridBox g = hr::make_grid(Vec::Constant(2, -4.0), Vec::Constant(2, 4.0), n);
          return hr::verify_bochner(model, hr::sample_density(g, density), 0.0, 1e-3);
        };
        hr::BochnerReport r32 = residual_at(32);
        hr::BochnerReport r64 = residual_at(64);
        hr::BochnerReport r128 = residual_at(128);
        // the doubling that reaches the stated 64^2 grid shows the 4x gain;
        // past it the residual sits at the rounding floor (identity exact)
        const bool ok = r64.pass && r64.residual * 4.0 <= r32.residual && r128.residual < 1e-3;
        std::snprintf(buf, sizeof(buf),
                      "residuals: %.2e (32^2) -> %.2e (64^2) -> %.2e (128^2); "
                      "32->64 ratio %.0f; 64^2 already at the rounding floor",
                      r32.residual, r64.residual, r128.residual, r32.residual / r64.residual);
        return Outcome{ok, buf};
      });

  hr::DecayVerdicts decay_verdicts;
  bool decay_ran = false;

  run(7, "decay envelopes hold at tol 0.05 for t in [0,20]; 10x rate breaks them", 60.0, [&]() {
    auto model = benchmark_model(5.0);
    hr::GridBox grid = hr::make_grid(Vec::Constant(2, -5.0), Vec::Constant(2, 5.0), 96);
    hr::DensityField p0 = hr::sample_density(grid, [&](const Vec& x) {
      const double dx = x[0] - 0.8, dv = x[1] + 0.5;
      return std::exp(-0.5 * (dx * dx + dv * dv));
    });
    const double lambda = benchmark_map.lambda_inf;
    auto [trace, verdicts] = hr::run_decay_experiment(model, p0, 20.0, 0.0, lambda);
    decay_verdicts = verdicts;
    decay_ran = true;

    bool inflated_I = true, e2 = true, e3 = true;
    hr::evaluate_envelopes(trace, 10.0 * lambda, 0.05, inflated_I, e2, e3);
    const bool ok = verdicts.envelope_I && verdicts.envelope_KL && verdicts.envelope_L1 &&
                    !inflated_I;
    std::snprintf(buf, sizeof(buf),
                  "envelopes I/KL/L1: %d/%d/%d; inflated-rate control breaks I: %s; fitted "
                  "rate %.3f vs certified %.4f",
                  verdicts.envelope_I, verdicts.envelope_KL, verdicts.envelope_L1,
                  inflated_I ? "NO" : "yes", trace.fitted_rate_I, lambda);
    return Outcome{ok, buf};
  });

  run(8, "dI/dt matches the Gamma-operator dissipation integral within 2%", 10.0, [&]() {
    if (!decay_ran) return Outcome{false, "criterion 7 run unavailable"};
    std::string detail = "rel errs:";
    for (size_t s = 0; s < decay_verdicts.sample_times.size(); ++s) {
      const double err = std::abs(decay_verdicts.measured_dIdt[s] -
                                  decay_verdicts.predicted_dIdt[s]) /
                         std::abs(decay_verdicts.predicted_dIdt[s]);
      std::snprintf(buf, sizeof(buf), " t=%.1f: %.4f", decay_verdicts.sample_times[s], err);
      detail += buf;
    }
    return Outcome{decay_verdicts.dissipation_ok && decay_verdicts.sample_times.size() == 5,
                   detail};
  });

  run(9, "Schur verdict equals the 6x6 eigenvalue sign on 50 random draws", 30.0, [&]() {
    std::mt19937 rng(20240811);
    std::uniform_real_distribution<double> uz(0.05, 1.2), uN(0.3, 1.8), uk(0.1, 1.2),
        ux(-1.5, 1.5);
    int disagreements = 0, psd_count = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const double eps = (trial % 3 == 0) ? 0.0 : std::pow(10.0, -7.0 + 5.0 * (trial % 5) / 4.0);
      auto model = oscillator_model(uz(rng), uN(rng), eps, uk(rng), uk(rng));
      Vec x(6);
      for (int i = 0; i < 6; ++i) x[i] = ux(rng);
      hr::HessianBundle b = hr::assemble_oscillator(model, x);
      hr::SchurReport rep = hr::oscillator_schur_check(b);
      const double scale = std::max(1.0, b.R_total.cwiseAbs().maxCoeff());
      const bool full_psd = rep.full_min_eig >= -1e-10 * scale;
      if (rep.psd != full_psd) ++disagreements;
      psd_count += rep.psd;
    }
    std::snprintf(buf, sizeof(buf), "disagreements: %d/50 (PSD verdicts: %d)", disagreements,
                  psd_count);
    return Outcome{disagreements == 0, buf};
  });

  std::printf("%d of 9 criteria failed\n", failures);
  return failures;
}
