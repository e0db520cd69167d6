// Command-line front end: rate certificates, parameter sweeps, closed-form
// sufficient conditions, identity verification, Fokker-Planck decay runs, and
// figure reproduction.
//
// Exit codes: 0 = success / all verdicts PASS, 1 = a verdict FAILED,
// 2 = configuration or runtime error.

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hyporate/hyporate.hpp"

namespace hr = hyporate;

namespace {

std::vector<double> parse_range(const std::string& spec) {
  // "lo:hi:count" inclusive linspace, or a single value
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ':')) parts.push_back(std::stod(tok));
  if (parts.size() == 1) return {parts[0]};
  if (parts.size() != 3) throw hr::ConfigParse("range spec must be lo:hi:count: " + spec);
  const int count = static_cast<int>(parts[2]);
  if (count < 1) throw hr::ConfigParse("range count must be >= 1: " + spec);
  std::vector<double> out;
  for (int i = 0; i < count; ++i)
    out.push_back(count == 1 ? parts[0] : parts[0] + (parts[1] - parts[0]) * i / (count - 1));
  return out;
}

Eigen::Vector2d parse_z(const std::string& spec) {
  std::stringstream ss(spec);
  std::string tok;
  std::vector<double> v;
  while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
  if (v.size() != 2) throw hr::ConfigParse("--z expects z1,z2");
  return {v[0], v[1]};
}

hr::GridBox domain_grid(const hr::Model& model, int nodes) {
  const auto& dom = model.domain();
  return hr::make_grid(dom.lo, dom.hi, std::vector<int>(dom.lo.size(), nodes), dom.periodic);
}

int cmd_certify(const std::string& config, double beta, const std::string& zspec, int grid_nodes,
                const std::string& out_csv, const std::string& out_svg,
                const std::string& dump_path, bool as_json) {
  auto model = hr::model_from_file(config);
  if (grid_nodes < 3) throw hr::ConfigParse("--grid must be >= 3");
  if (!zspec.empty()) {
    if (model->family() != hr::Family::Underdamped1D)
      throw hr::ConfigParse("--z applies to the underdamped1d family only");
    auto* um = static_cast<hr::Underdamped1DModel*>(model.get());
    *um = um->with_z(parse_z(zspec));
  }
  hr::GridBox grid = domain_grid(*model, grid_nodes);
  if (grid.size() > 2000000)
    throw hr::ConfigParse("grid too large for certify; use `check` for high-dimensional models");
  hr::RateMap map = hr::rate_map(*model, grid, beta);
  if (!out_csv.empty()) hr::write_rate_map_csv(out_csv, map);
  if (!out_svg.empty()) {
    if (grid.dim() != 2) throw hr::ConfigParse("--svg requires a 2-d domain");
    char title[128];
    std::snprintf(title, sizeof(title), "certified rate, beta=%g", beta);
    hr::svg_heatmap(out_svg, grid, map.lambda_field, title);
  }
  if (!dump_path.empty()) {
    hr::json arr = hr::json::array();
    for (size_t i = 0; i < grid.size(); ++i)
      arr.push_back(hr::dump_tensor_record(*model, grid.point(i), beta));
    hr::write_json(dump_path, arr);
  }
  if (as_json) {
    hr::json j{{"lambda_inf", map.lambda_inf}, {"beta", beta}, {"grid", grid_nodes}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "lambda_inf = " << hr::fmt_double(map.lambda_inf) << " (beta=" << beta
              << ", grid " << grid_nodes << "^" << grid.dim() << ")\n";
  }
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& beta_range,
              const std::string& z2_range, int grid_nodes, const std::string& out_csv,
              bool as_json) {
  auto model = hr::model_from_file(config);
  if (model->family() != hr::Family::Underdamped1D)
    throw hr::ConfigParse("sweep supports the underdamped1d family");
  auto* um = static_cast<hr::Underdamped1DModel*>(model.get());
  std::vector<double> betas = parse_range(beta_range);
  std::vector<double> z2s = parse_range(z2_range);
  std::vector<hr::Vec> zs;
  for (double z2 : z2s) {
    hr::Vec z(2);
    z << 1.0, z2;
    zs.push_back(z);
  }
  hr::GridBox grid = domain_grid(*model, grid_nodes);
  hr::SweepResult res = hr::sweep_parameters(*um, grid, betas, zs);
  if (!out_csv.empty()) hr::write_rate_map_csv(out_csv, res.best_map);
  if (as_json) {
    hr::json j{{"best_beta", res.best_beta},
               {"best_z", {res.best_z[0], res.best_z[1]}},
               {"lambda_inf", res.best_map.lambda_inf}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "best: beta=" << res.best_beta << " z=(" << res.best_z[0] << ","
              << res.best_z[1] << ") lambda_inf=" << hr::fmt_double(res.best_map.lambda_inf)
              << "\n";
  }
  return 0;
}

int print_condition(const hr::ConditionReport& rep, bool as_json) {
  if (as_json) {
    std::cout << hr::to_json(rep).dump(2) << "\n";
  } else {
    std::cout << rep.family << ": " << (rep.pass ? "PASS" : "FAIL") << "\n";
    for (const auto& [k, v] : rep.margins)
      std::cout << "  margin " << k << " = " << hr::fmt_double(v) << "\n";
  }
  return rep.pass ? 0 : 1;
}

int cmd_simulate(const std::string& config, double t_final, const std::string& dt_spec,
                 const std::string& cert_path, double lambda_flag, int grid_nodes,
                 const std::string& out_csv, const std::string& p0_spec, double tol,
                 bool as_json) {
  auto model = hr::model_from_file(config);
  if (model->dim() > 3)
    throw hr::ConfigParse("simulate supports at most 3 dimensions (certificates for the "
                          "oscillator family come from `check`)");
  double lambda = lambda_flag;
  if (!cert_path.empty()) lambda = hr::read_certificate_lambda(cert_path);
  if (!(lambda > 0.0))
    throw hr::ConfigParse("need a positive certified rate (--certificate or --lambda)");

  hr::GridBox grid = domain_grid(*model, grid_nodes);
  hr::DensityField p0{grid, std::vector<double>(grid.size()), 0.0};
  if (p0_spec.rfind("gauss:", 0) == 0) {
    std::vector<double> mu;
    std::stringstream ss(p0_spec.substr(6));
    std::string tok;
    while (std::getline(ss, tok, ',')) mu.push_back(std::stod(tok));
    if (static_cast<int>(mu.size()) != grid.dim())
      throw hr::ConfigParse("--p0 gauss: needs one coordinate per dimension");
    for (size_t i = 0; i < grid.size(); ++i) {
      const hr::Vec x = grid.point(i);
      double q = 0.0;
      for (int a = 0; a < grid.dim(); ++a) q += 0.5 * (x[a] - mu[a]) * (x[a] - mu[a]);
      p0.values[i] = std::exp(-q);
    }
  } else if (p0_spec == "perturb") {
    for (size_t i = 0; i < grid.size(); ++i) {
      const hr::Vec x = grid.point(i);
      double s = 1.0;
      for (int a = 0; a < grid.dim(); ++a)
        s *= std::sin(2.0 * M_PI * (x[a] - grid.lo[a]) / (grid.hi[a] - grid.lo[a]));
      p0.values[i] = std::exp(model->log_pi(x)) * (1.0 + 0.5 * s);
    }
  } else {
    throw hr::ConfigParse("--p0 must be 'perturb' or 'gauss:mu1,...'");
  }
  p0.normalize();

  double dt = 0.0;
  if (dt_spec != "auto") dt = std::stod(dt_spec);
  auto [trace, verdicts] = hr::run_decay_experiment(*model, p0, t_final, dt, lambda,
                                                    hr::DecayOptions{tol, 0.02, 2000, 5, 0.4});
  if (!out_csv.empty()) hr::write_trace_csv(out_csv, trace, lambda, tol);
  const bool pass =
      verdicts.envelope_I && verdicts.envelope_KL && verdicts.envelope_L1 && verdicts.dissipation_ok;
  if (as_json) {
    hr::json j{{"lambda", lambda},
               {"I0", trace.I0},
               {"envelope_I", verdicts.envelope_I},
               {"envelope_KL", verdicts.envelope_KL},
               {"envelope_L1", verdicts.envelope_L1},
               {"dissipation_ok", verdicts.dissipation_ok},
               {"max_dissipation_err", verdicts.max_dissipation_err},
               {"fitted_rate", trace.fitted_rate_I},
               {"pass", pass}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "decay envelopes: I " << (verdicts.envelope_I ? "PASS" : "FAIL") << ", KL "
              << (verdicts.envelope_KL ? "PASS" : "FAIL") << ", L1 "
              << (verdicts.envelope_L1 ? "PASS" : "FAIL") << "; dissipation "
              << (verdicts.dissipation_ok ? "PASS" : "FAIL")
              << " (max err " << hr::fmt_double(verdicts.max_dissipation_err) << ")\n"
              << "fitted I-decay rate " << hr::fmt_double(trace.fitted_rate_I)
              << " vs certified " << hr::fmt_double(lambda) << "\n";
  }
  return pass ? 0 : 1;
}

int cmd_verify(const std::string& config, const std::string& identity, int grid_nodes,
               double tol, double beta, bool as_json) {
  auto model = hr::model_from_file(config);
  hr::json report;
  bool pass = false;
  if (identity == "stationarity") {
    const double use_tol = tol > 0 ? tol : 1e-6;
    int nodes = grid_nodes > 0 ? grid_nodes : 11;
    while (std::pow(nodes, model->dim()) > 50000 && nodes > 3) nodes -= 2;
    hr::GridBox grid = domain_grid(*model, nodes);
    hr::StationarityReport rep =
        hr::check_stationarity(*model, hr::grid_points(grid), use_tol);
    report = hr::to_json(rep);
    report["tolerance"] = use_tol;
    pass = rep.pass;
  } else if (identity == "bochner") {
    if (model->dim() > 3) throw hr::ConfigParse("bochner verification grids support dim <= 3");
    const double use_tol = tol > 0 ? tol : 1e-3;
    hr::GridBox grid = domain_grid(*model, grid_nodes > 0 ? grid_nodes : 64);
    // periodic axes need a perturbation smooth across the seam
    auto perturb = [&](const hr::Vec& x) {
      double s = 1.0;
      for (int a = 0; a < grid.dim(); ++a) {
        const double t = (x[a] - grid.lo[a]) / (grid.hi[a] - grid.lo[a]);
        s *= std::sin((grid.periodic[a] ? 2.0 : 1.0) * M_PI * t);
      }
      return s;
    };
    hr::DensityField p = hr::sample_density(grid, [&](const hr::Vec& x) {
      return std::exp(model->log_pi(x)) * (1.0 + 0.3 * perturb(x));
    });
    hr::BochnerReport rep = hr::verify_bochner(*model, p, beta, use_tol);
    report = hr::to_json(rep);
    pass = rep.pass;
  } else if (identity == "dissipation") {
    if (model->dim() > 3) throw hr::ConfigParse("dissipation verification supports dim <= 3");
    const double use_tol = tol > 0 ? tol : 0.02;
    hr::GridBox grid = domain_grid(*model, grid_nodes > 0 ? grid_nodes : 96);
    auto perturb = [&](const hr::Vec& x) {
      double s = 1.0;
      for (int a = 0; a < grid.dim(); ++a) {
        const double t = (x[a] - grid.lo[a]) / (grid.hi[a] - grid.lo[a]);
        s *= std::sin((grid.periodic[a] ? 2.0 : 1.0) * M_PI * t);
      }
      return s;
    };
    hr::DensityField p0 = hr::sample_density(grid, [&](const hr::Vec& x) {
      return std::exp(model->log_pi(x)) * (1.0 + 0.3 * perturb(x));
    });
    // measured dI/dt along a short integration vs the Gamma-operator integral
    auto [trace, verdicts] = hr::run_decay_experiment(
        *model, p0, 1.0, 0.0, 1e-6, hr::DecayOptions{1e9, use_tol, 400, 3, 0.4});
    pass = verdicts.dissipation_ok;
    report = hr::json{{"identity", "dissipation"},
                      {"residual", verdicts.max_dissipation_err},
                      {"tolerance", use_tol},
                      {"pass", pass}};
  } else {
    throw hr::ConfigParse("--identity must be bochner|stationarity|dissipation");
  }
  if (as_json)
    std::cout << report.dump(2) << "\n";
  else
    std::cout << identity << ": " << (pass ? "PASS" : "FAIL")
              << " (residual " << report["residual"].dump() << ")\n";
  return pass ? 0 : 1;
}

int cmd_reproduce(const std::string& which, const std::string& out_dir) {
  struct Panel {
    std::string tag;
    double beta;
  };
  std::unique_ptr<hr::Underdamped1DModel> model;
  std::vector<Panel> panels;
  hr::Domain dom;
  if (which == "const-diffusion") {
    dom.lo = hr::Vec(2);
    dom.lo << -1.0, -1.0;
    dom.hi = hr::Vec(2);
    dom.hi << 1.0, 1.0;
    dom.periodic = {false, false};
    model = std::make_unique<hr::Underdamped1DModel>(
        hr::quadratic_potential(1.0), hr::FrictionSpec{hr::FrictionSpec::Constant, 1.0},
        Eigen::Vector2d(1.0, 0.1), dom);
    panels = {{"beta0", 0.0}, {"beta0.1", 0.1}};
  } else if (which == "variable-diffusion") {
    dom.lo = hr::Vec(2);
    dom.lo << 0.5, 0.5;
    dom.hi = hr::Vec(2);
    dom.hi << 1.0, 1.0;
    dom.periodic = {true, true};
    model = std::make_unique<hr::Underdamped1DModel>(
        hr::power_linear_potential(2.5, 3.75),
        hr::FrictionSpec{hr::FrictionSpec::InverseHessian, 0.0}, Eigen::Vector2d(1.0, 0.1), dom);
    panels = {{"beta0", 0.0}, {"beta0.6", 0.6}};
  } else {
    throw hr::ConfigParse("--figure must be const-diffusion or variable-diffusion");
  }
  hr::GridBox grid = hr::make_grid(dom.lo, dom.hi, {41, 41}, {false, false});
  for (const Panel& p : panels) {
    hr::RateMap map = hr::rate_map(*model, grid, p.beta);
    const std::string base = out_dir + "/" + which + "_" + p.tag;
    hr::write_rate_map_csv(base + ".csv", map);
    char title[160];
    std::snprintf(title, sizeof(title), "rate field %s beta=%g (inf %.6g)", which.c_str(),
                  p.beta, map.lambda_inf);
    hr::svg_heatmap(base + ".svg", grid, map.lambda_field, title);
    std::cout << base << ".{csv,svg}: lambda_inf = " << hr::fmt_double(map.lambda_inf) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"convergence-rate certificates for degenerate non-reversible SDEs"};
  app.require_subcommand(1);
  app.fallthrough();  // --json may follow the subcommand arguments
  bool as_json = false;
  app.add_flag("--json", as_json, "machine-readable output");

  // certify
  auto* certify = app.add_subcommand("certify", "rate field over the model domain");
  std::string config, zspec, out_csv, out_svg, dump_path;
  double beta = 0.0;
  int grid_nodes = 41;
  certify->add_option("--config", config, "model json")->required();
  certify->add_option("--beta", beta, "beta parameter");
  certify->add_option("--z", zspec, "constant z as z1,z2 (underdamped1d)");
  certify->add_option("--grid", grid_nodes, "nodes per axis (default 41)");
  certify->add_option("--out", out_csv, "rate map csv");
  certify->add_option("--svg", out_svg, "heatmap svg");
  certify->add_option("--dump-tensor", dump_path, "per-point tensor diagnostics json");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "lattice sweep over beta and z2");
  std::string beta_range = "0:1:11", z2_range = "0:1:11";
  std::string sweep_config, sweep_out;
  int sweep_grid = 21;
  sweep->add_option("--config", sweep_config, "model json")->required();
  sweep->add_option("--beta", beta_range, "beta range lo:hi:count");
  sweep->add_option("--z2", z2_range, "z2 range lo:hi:count (z1 fixed at 1)");
  sweep->add_option("--grid", sweep_grid, "nodes per axis");
  sweep->add_option("--out", sweep_out, "csv for the winning rate map");

  // check
  auto* check = app.add_subcommand("check", "closed-form sufficient conditions");
  std::string family;
  double r = 1.0, lam_lo = 0.0, lam_hi = 0.0, z2 = 0.0, delta = 0.0, delta1 = 0.0, Ncap = 1.0,
         eps = 1e-7;
  check->add_option("--family", family, "underdamped1d | oscillator3")->required();
  check->add_option("--r", r, "friction constant (underdamped1d)");
  check->add_option("--lam-lo", lam_lo, "lower eigenvalue bound")->required();
  check->add_option("--lam-hi", lam_hi, "upper eigenvalue bound")->required();
  check->add_option("--z2", z2, "z2 parameter")->required();
  check->add_option("--delta", delta, "slack (underdamped1d)");
  check->add_option("--delta1", delta1, "slack (oscillator3)");
  check->add_option("--N", Ncap, "z32 level (oscillator3)");
  check->add_option("--eps", eps, "z32 curvature (oscillator3)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Fokker-Planck decay experiment");
  std::string sim_config, dt_spec = "auto", cert_path, trace_out, p0_spec = "gauss-default";
  double t_final = 20.0, lambda_flag = 0.0, env_tol = 0.05;
  int sim_grid = 96;
  simulate->add_option("--config", sim_config, "model json")->required();
  simulate->add_option("--t-final", t_final, "integration horizon");
  simulate->add_option("--dt", dt_spec, "time step or 'auto'");
  simulate->add_option("--certificate", cert_path, "rate map csv (lambda_inf = min)");
  simulate->add_option("--lambda", lambda_flag, "certified rate (overrides --certificate)");
  simulate->add_option("--grid", sim_grid, "nodes per axis");
  simulate->add_option("--out", trace_out, "trace csv");
  simulate->add_option("--p0", p0_spec, "'perturb' or 'gauss:mu1,mu2,...'");
  simulate->add_option("--tol", env_tol, "envelope tolerance (default 0.05)");

  // verify
  auto* verify = app.add_subcommand("verify", "numerical identity checks");
  std::string verify_config, identity;
  double verify_tol = 0.0, verify_beta = 0.0;
  int verify_grid = 0;
  verify->add_option("--config", verify_config, "model json")->required();
  verify->add_option("--identity", identity, "bochner | stationarity | dissipation")->required();
  verify->add_option("--grid", verify_grid, "nodes per axis");
  verify->add_option("--tol", verify_tol, "tolerance override");
  verify->add_option("--beta", verify_beta, "beta (bochner)");

  // reproduce
  auto* reproduce = app.add_subcommand("reproduce", "regenerate the rate-field figure pairs");
  std::string figure, out_dir = ".";
  reproduce->add_option("--figure", figure, "const-diffusion | variable-diffusion")->required();
  reproduce->add_option("--out-dir", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (certify->parsed())
      return cmd_certify(config, beta, zspec, grid_nodes, out_csv, out_svg, dump_path, as_json);
    if (sweep->parsed())
      return cmd_sweep(sweep_config, beta_range, z2_range, sweep_grid, sweep_out, as_json);
    if (check->parsed()) {
      if (family == "underdamped1d")
        return print_condition(hr::check_1d_sufficient(r, lam_lo, lam_hi, z2, delta), as_json);
      if (family == "oscillator3")
        return print_condition(
            hr::check_oscillator_sufficient(lam_lo, lam_hi, z2, Ncap, eps, delta1), as_json);
      throw hr::ConfigParse("--family must be underdamped1d or oscillator3");
    }
    if (simulate->parsed()) {
      std::string p0 = p0_spec;
      if (p0 == "gauss-default") {
        auto model = hr::model_from_file(sim_config);
        const auto& dom = model->domain();
        p0 = "gauss:";
        for (int a = 0; a < dom.lo.size(); ++a) {
          const double mu = 0.5 * (dom.lo[a] + dom.hi[a]) + 0.08 * (dom.hi[a] - dom.lo[a]);
          p0 += (a ? "," : "") + hr::fmt_double(mu);
        }
      }
      return cmd_simulate(sim_config, t_final, dt_spec, cert_path, lambda_flag, sim_grid,
                          trace_out, p0, env_tol, as_json);
    }
    if (verify->parsed())
      return cmd_verify(verify_config, identity, verify_grid, verify_tol, verify_beta, as_json);
    if (reproduce->parsed()) return cmd_reproduce(figure, out_dir);
  } catch (const hr::ConfigParse& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
