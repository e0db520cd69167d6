#ifndef HYPORATE_IO_HPP_
#define HYPORATE_IO_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyporate/certificate.hpp"
#include "hyporate/fpe.hpp"
#include "hyporate/gamma_calculus.hpp"
#include "hyporate/model.hpp"
#include "hyporate/tensor.hpp"

namespace hyporate {

using json = nlohmann::json;

/// Shortest round-trip decimal form of a double.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = std::strtod(buf, nullptr);
  if (back == v) {
    // try shorter representations for readability
    for (int prec = 1; prec <= 16; ++prec) {
      char b2[40];
      std::snprintf(b2, sizeof(b2), "%.*g", prec, v);
      if (std::strtod(b2, nullptr) == v) return b2;
    }
  }
  return buf;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParse("cannot open csv: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigParse("empty csv: " + path);
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) t.header.push_back(cell);
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::vector<double> row;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      row.push_back(std::strtod(cell.c_str(), &end));
      if (end == cell.c_str())
        throw ConfigParse(path + ":" + std::to_string(lineno) + ": not a number: " + cell);
    }
    if (row.size() != t.header.size())
      throw ConfigParse(path + ":" + std::to_string(lineno) + ": column count mismatch");
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void write_rate_map_csv(const std::string& path, const RateMap& map) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  const int d = map.grid.dim();
  for (int a = 0; a < d; ++a) out << "x" << (a + 1) << ",";
  out << "lambda\n";
  for (size_t i = 0; i < map.grid.size(); ++i) {
    const Vec x = map.grid.point(i);
    for (int a = 0; a < d; ++a) out << fmt_double(x[a]) << ",";
    out << fmt_double(map.lambda_field[i]) << "\n";
  }
}

/// Minimum of the lambda column of a rate-map CSV.
inline double read_certificate_lambda(const std::string& path) {
  CsvTable t = read_csv(path);
  if (t.header.empty() || t.header.back() != "lambda")
    throw ConfigParse(path + ": expected a trailing 'lambda' column");
  if (t.rows.empty()) throw ConfigParse(path + ": no data rows");
  double lo = t.rows[0].back();
  for (const auto& r : t.rows) lo = std::min(lo, r.back());
  return lo;
}

inline void write_trace_csv(const std::string& path, const FunctionalTrace& tr, double lambda,
                            double tol) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "t,I_az,KL,L1,envelope_I,envelope_KL,envelope_L1,pass\n";
  for (size_t k = 0; k < tr.times.size(); ++k) {
    const double t = tr.times[k];
    const double eI = (1.0 + tol) * std::exp(-2.0 * lambda * t) * tr.I0;
    const double eKL = eI / (2.0 * lambda);
    const double eL1 = (1.0 + tol) * std::sqrt(tr.I0 / lambda) * std::exp(-lambda * t);
    const bool ok = tr.I_az[k] <= eI && tr.KL[k] <= eKL && tr.L1[k] <= eL1;
    out << fmt_double(t) << "," << fmt_double(tr.I_az[k]) << "," << fmt_double(tr.KL[k]) << ","
        << fmt_double(tr.L1[k]) << "," << fmt_double(eI) << "," << fmt_double(eKL) << ","
        << fmt_double(eL1) << "," << (ok ? 1 : 0) << "\n";
  }
}

// ---------------------------------------------------------------------------
// SVG heatmap
// ---------------------------------------------------------------------------

namespace detail {
// 17 anchors of a viridis-like ramp, linearly interpolated to 256 steps.
inline const unsigned char kPaletteAnchors[17][3] = {
    {68, 1, 84},    {71, 24, 106},  {72, 46, 124},  {69, 67, 135},  {63, 86, 140},
    {57, 104, 142}, {50, 121, 142}, {44, 138, 141}, {39, 154, 137}, {38, 170, 130},
    {49, 186, 117}, {73, 200, 99},  {107, 212, 77}, {146, 220, 54}, {187, 226, 35},
    {227, 229, 29}, {253, 231, 37}};

inline void palette256(int i, unsigned char rgb[3]) {
  const double t = i / 255.0 * 16.0;
  const int a = std::min(15, static_cast<int>(t));
  const double f = t - a;
  for (int c = 0; c < 3; ++c)
    rgb[c] = static_cast<unsigned char>(std::lround((1.0 - f) * kPaletteAnchors[a][c] +
                                                    f * kPaletteAnchors[a + 1][c]));
}
}  // namespace detail

/// Self-contained heatmap: one rect per grid cell, 256-step color ramp, a
/// side colorbar, min/max annotations. Values walk the grid in flat order.
inline void svg_heatmap(const std::string& path, const GridBox& grid,
                        const std::vector<double>& values, const std::string& title) {
  if (grid.dim() != 2) throw Error("svg_heatmap expects a 2-d grid");
  const int nx = grid.shape[0], ny = grid.shape[1];
  double vmin = values[0], vmax = values[0];
  for (double v : values) {
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  const double span = (vmax - vmin) > 0 ? (vmax - vmin) : 1.0;

  const int cell = 8, margin = 60, barw = 18;
  const int W = margin * 2 + nx * cell + barw + 30, H = margin * 2 + ny * cell;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
  out << "<text x=\"" << margin << "\" y=\"" << margin - 28
      << "\" font-family=\"monospace\" font-size=\"13\">" << title << "</text>\n";
  out << "<text x=\"" << margin << "\" y=\"" << margin - 10
      << "\" font-family=\"monospace\" font-size=\"11\">min " << fmt_double(vmin) << "  max "
      << fmt_double(vmax) << "</text>\n";
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const double v = values[static_cast<size_t>(i) * ny + j];
      int q = static_cast<int>(std::lround((v - vmin) / span * 255.0));
      q = std::clamp(q, 0, 255);
      unsigned char rgb[3];
      detail::palette256(q, rgb);
      // x1 rightwards, x2 upwards
      const int px = margin + i * cell;
      const int py = margin + (ny - 1 - j) * cell;
      char color[8];
      std::snprintf(color, sizeof(color), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
      out << "<rect x=\"" << px << "\" y=\"" << py << "\" width=\"" << cell << "\" height=\""
          << cell << "\" fill=\"" << color << "\"/>\n";
    }
  // colorbar
  const int bx = margin + nx * cell + 12;
  for (int j = 0; j < 256; ++j) {
    unsigned char rgb[3];
    detail::palette256(255 - j, rgb);
    char color[8];
    std::snprintf(color, sizeof(color), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
    const double y0 = margin + j * (ny * cell / 256.0);
    out << "<rect x=\"" << bx << "\" y=\"" << y0 << "\" width=\"" << barw << "\" height=\""
        << (ny * cell / 256.0 + 0.5) << "\" fill=\"" << color << "\"/>\n";
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Tabulated fields (Generic family model files)
// ---------------------------------------------------------------------------

/// A scalar field sampled on a regular grid, loaded from CSV with header
/// x1,...,xd,value in row-major node order. Values interpolate multilinearly;
/// derivative queries interpolate tables built with 4th-order interior
/// stencils (one-sided 2nd order at edges).
class TabulatedField {
 public:
  TabulatedField(GridBox grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    const int d = grid_.dim();
    d1_.resize(d);
    for (int a = 0; a < d; ++a) d1_[a] = table_d1(values_, a);
    d2_.assign(d * d, {});
    for (int a = 0; a < d; ++a)
      for (int b = a; b < d; ++b) {
        d2_[a * d + b] = table_d1(d1_[a], b);
        if (b != a) d2_[b * d + a] = d2_[a * d + b];
      }
  }

  static TabulatedField from_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    if (t.header.empty() || t.header.back() != "value")
      throw ConfigParse(path + ": expected trailing 'value' column");
    const int d = static_cast<int>(t.header.size()) - 1;
    std::vector<std::vector<double>> coords(d);
    for (const auto& r : t.rows)
      for (int a = 0; a < d; ++a) {
        auto& c = coords[a];
        if (std::find(c.begin(), c.end(), r[a]) == c.end()) c.push_back(r[a]);
      }
    Vec lo(d), hi(d);
    std::vector<int> shape(d);
    for (int a = 0; a < d; ++a) {
      std::sort(coords[a].begin(), coords[a].end());
      shape[a] = static_cast<int>(coords[a].size());
      lo[a] = coords[a].front();
      hi[a] = coords[a].back();
    }
    GridBox g = make_grid(lo, hi, shape, std::vector<bool>(d, false));
    if (g.size() != t.rows.size()) throw ConfigParse(path + ": rows do not fill the grid");
    std::vector<double> vals(t.rows.size());
    for (size_t i = 0; i < t.rows.size(); ++i) vals[i] = t.rows[i].back();
    return TabulatedField(std::move(g), std::move(vals));
  }

  double value(const Vec& x) const { return interp(values_, x); }
  double d1(const Vec& x, int axis) const { return interp(d1_[axis], x); }
  double d2(const Vec& x, int a, int b) const { return interp(d2_[a * grid_.dim() + b], x); }
  const GridBox& grid() const { return grid_; }

 private:
  std::vector<double> table_d1(const std::vector<double>& v, int axis) const {
    std::vector<double> out(v.size());
    const double h = grid_.spacing(axis);
    std::vector<int> idx;
    for (size_t f = 0; f < v.size(); ++f) {
      grid_.to_multi(f, idx);
      const int i = idx[axis], nmax = grid_.shape[axis];
      auto at = [&](int off) {
        std::vector<int> j = idx;
        j[axis] = i + off;
        return v[grid_.to_flat(j)];
      };
      if (i >= 2 && i + 2 < nmax)
        out[f] = (at(-2) - 8 * at(-1) + 8 * at(1) - at(2)) / (12 * h);
      else if (i + 2 < nmax && i >= 1)
        out[f] = (at(1) - at(-1)) / (2 * h);
      else if (i + 2 < nmax)
        out[f] = (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h);
      else if (i >= 2)
        out[f] = (3 * at(0) - 4 * at(-1) + at(-2)) / (2 * h);
      else
        out[f] = (at(1) - at(-1)) / (2 * h);
    }
    return out;
  }

  double interp(const std::vector<double>& v, const Vec& x) const {
    const int d = grid_.dim();
    std::vector<int> base(d);
    std::vector<double> frac(d);
    for (int a = 0; a < d; ++a) {
      const double t = (x[a] - grid_.lo[a]) / grid_.spacing(a);
      int i = static_cast<int>(std::floor(t));
      i = std::clamp(i, 0, grid_.shape[a] - 2);
      base[a] = i;
      frac[a] = std::clamp(t - i, 0.0, 1.0);
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
      double wgt = 1.0;
      std::vector<int> idx = base;
      for (int a = 0; a < d; ++a) {
        if (corner & (1 << a)) {
          idx[a] += 1;
          wgt *= frac[a];
        } else {
          wgt *= 1.0 - frac[a];
        }
      }
      acc += wgt * v[grid_.to_flat(idx)];
    }
    return acc;
  }

  GridBox grid_;
  std::vector<double> values_;
  std::vector<std::vector<double>> d1_;
  std::vector<std::vector<double>> d2_;
};

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

namespace detail {

inline Potential1D potential_from_json(const json& j, const std::string& where) {
  const std::string type = j.value("type", "");
  if (type == "quadratic") return quadratic_potential(j.value("k", 1.0));
  if (type == "power_linear")
    return power_linear_potential(j.at("p").get<double>(), j.at("scale").get<double>());
  if (type == "trig") return trig_potential(j.value("c", 1.0));
  throw ConfigParse(where + ": unknown potential type '" + type + "'");
}

inline Domain domain_from_json(const json& j, int d) {
  if (!j.contains("domain")) throw ConfigParse("model: missing 'domain'");
  const json& dj = j.at("domain");
  auto lo = dj.at("lo").get<std::vector<double>>();
  auto hi = dj.at("hi").get<std::vector<double>>();
  std::vector<bool> per = dj.contains("periodic") ? dj.at("periodic").get<std::vector<bool>>()
                                                  : std::vector<bool>(d, false);
  if (static_cast<int>(lo.size()) != d || static_cast<int>(hi.size()) != d ||
      static_cast<int>(per.size()) != d)
    throw ConfigParse("model.domain: lo/hi/periodic must have length " + std::to_string(d));
  Domain dom;
  dom.lo = Eigen::Map<Vec>(lo.data(), d);
  dom.hi = Eigen::Map<Vec>(hi.data(), d);
  dom.periodic = per;
  return dom;
}

}  // namespace detail

inline std::unique_ptr<Model> model_from_json(const json& j, const std::string& base_dir = ".") {
  if (!j.contains("family")) throw ConfigParse("model: missing 'family'");
  const std::string family = j.at("family").get<std::string>();
  const json params = j.value("params", json::object());

  // n and m are implied for the built-in families; validate when present
  auto check_nm = [&](int n, int m) {
    if (j.contains("n") && j.at("n").get<int>() != n)
      throw ConfigParse("model.n: family '" + family + "' has n = " + std::to_string(n));
    if (j.contains("m") && j.at("m").get<int>() != m)
      throw ConfigParse("model.m: family '" + family + "' has m = " + std::to_string(m));
  };

  if (family == "underdamped1d") {
    Potential1D U = detail::potential_from_json(params.at("potential"), "params.potential");
    FrictionSpec fr;
    const json& fj = params.at("friction");
    const std::string ft = fj.value("type", "constant");
    if (ft == "constant") {
      fr.kind = FrictionSpec::Constant;
      fr.value = fj.value("value", 1.0);
    } else if (ft == "inverse_hessian") {
      fr.kind = FrictionSpec::InverseHessian;
    } else {
      throw ConfigParse("params.friction.type: unknown '" + ft + "'");
    }
    auto zv = params.value("z", std::vector<double>{1.0, 0.1});
    if (zv.size() != 2) throw ConfigParse("params.z: expected 2 entries");
    check_nm(1, 1);
    return std::make_unique<Underdamped1DModel>(U, fr, Eigen::Vector2d(zv[0], zv[1]),
                                                detail::domain_from_json(j, 2));
  }

  if (family == "oscillator3") {
    Potential1D V1 = detail::potential_from_json(params.at("pinning"), "params.pinning");
    Potential1D V2 = detail::potential_from_json(params.at("interaction"), "params.interaction");
    OscillatorZ z;
    if (params.contains("z")) {
      const json& zj = params.at("z");
      z.z1 = zj.value("z1", 1.0);
      z.z2 = zj.value("z2", 0.2);
      z.z31 = zj.value("z31", 0.0);
      z.z33 = zj.value("z33", 0.0);
      if (zj.contains("z32")) {
        const json& wj = zj.at("z32");
        const std::string wt = wj.value("type", "constant");
        if (wt == "constant") {
          z.z32.kind = Z32Spec::Constant;
          z.z32.value = wj.value("value", 1.0);
        } else if (wt == "quadratic_well") {
          z.z32.kind = Z32Spec::QuadraticWell;
          z.z32.value = wj.at("N").get<double>();
          z.z32.eps = wj.at("eps").get<double>();
        } else {
          throw ConfigParse("params.z.z32.type: unknown '" + wt + "'");
        }
      }
    }
    check_nm(2, 4);
    return std::make_unique<OscillatorChain3Model>(V1, V2, params.value("xi", 1.0),
                                                   params.value("T", 1.0), z,
                                                   detail::domain_from_json(j, 6));
  }

  if (family == "diagonal") {
    const json& aj = params.at("a");
    const int n = static_cast<int>(aj.size());
    std::vector<DiagonalCoef> coef;
    for (const auto& cj : aj) {
      const std::string t = cj.value("type", "constant");
      if (t == "constant") {
        const double v = cj.value("value", 1.0);
        coef.push_back({[v](double) { return v; }, [](double) { return 0.0; },
                        [](double) { return 0.0; }});
      } else if (t == "sinusoidal") {
        const double b = cj.value("base", 1.0), c = cj.value("amp", 0.2), w = cj.value("freq", 1.0);
        coef.push_back({[b, c, w](double x) { return b + c * std::sin(w * x); },
                        [c, w](double x) { return c * w * std::cos(w * x); },
                        [c, w](double x) { return -c * w * w * std::sin(w * x); }});
      } else {
        throw ConfigParse("params.a[]: unknown coefficient type '" + t + "'");
      }
    }
    auto ks = params.at("potential_k").get<std::vector<double>>();
    if (static_cast<int>(ks.size()) != n) throw ConfigParse("params.potential_k: length != n");
    auto V = [ks](const Vec& x) {
      double v = 0.0;
      for (size_t i = 0; i < ks.size(); ++i) v += 0.5 * ks[i] * x[i] * x[i];
      return v;
    };
    auto gradV = [ks](const Vec& x) {
      Vec g(x.size());
      for (int i = 0; i < x.size(); ++i) g[i] = ks[i] * x[i];
      return g;
    };
    auto hessV = [ks, n](const Vec&) {
      Mat h = Mat::Zero(n, n);
      for (int i = 0; i < n; ++i) h(i, i) = ks[i];
      return h;
    };
    std::function<Vec(const Vec&)> gamma = [n](const Vec&) { return Vec::Zero(n); };
    std::function<Mat(const Vec&)> gjac = [n](const Vec&) { return Mat::Zero(n, n); };
    if (params.contains("gamma")) {
      const json& gj = params.at("gamma");
      const std::string gt = gj.value("type", "zero");
      if (gt == "rotation2d") {
        if (n != 2) throw ConfigParse("params.gamma rotation2d needs n == 2");
        const double c = gj.value("c", 1.0);
        gamma = [c, gradV](const Vec& x) {
          const Vec g = gradV(x);
          Vec out(2);
          out << -c * g[1], c * g[0];
          return out;
        };
        gjac = [c, hessV](const Vec& x) {
          const Mat h = hessV(x);
          Mat out(2, 2);  // (i,j) = d_i gamma_j
          out(0, 0) = -c * h(0, 1);
          out(0, 1) = c * h(0, 0);
          out(1, 0) = -c * h(1, 1);
          out(1, 1) = c * h(1, 0);
          return out;
        };
      } else if (gt != "zero") {
        throw ConfigParse("params.gamma.type: unknown '" + gt + "'");
      }
    }
    check_nm(n, 0);
    return std::make_unique<DiagonalModel>(coef, V, gradV, hessV, gamma, gjac,
                                           detail::domain_from_json(j, n));
  }

  if (family == "generic") {
    const int n = j.at("n").get<int>();
    const int m = j.at("m").get<int>();
    const int d = n + m;
    const json& fj = params.at("fields");
    auto load = [&](const std::string& p) {
      return std::make_shared<TabulatedField>(TabulatedField::from_csv(base_dir + "/" + p));
    };
    auto bpaths = fj.at("drift").get<std::vector<std::string>>();
    if (static_cast<int>(bpaths.size()) != d) throw ConfigParse("fields.drift: need n+m files");
    std::vector<std::shared_ptr<TabulatedField>> bt;
    for (auto& p : bpaths) bt.push_back(load(p));
    auto apaths = fj.at("diffusion").get<std::vector<std::vector<std::string>>>();
    if (static_cast<int>(apaths.size()) != d) throw ConfigParse("fields.diffusion: need n+m rows");
    std::vector<std::vector<std::shared_ptr<TabulatedField>>> at(d);
    for (int r = 0; r < d; ++r) {
      if (static_cast<int>(apaths[r].size()) != n)
        throw ConfigParse("fields.diffusion: need n columns");
      for (auto& p : apaths[r]) at[r].push_back(load(p));
    }
    std::vector<std::vector<std::shared_ptr<TabulatedField>>> zt(d);
    if (m > 0) {
      auto zpaths = fj.at("auxiliary").get<std::vector<std::vector<std::string>>>();
      if (static_cast<int>(zpaths.size()) != d)
        throw ConfigParse("fields.auxiliary: need n+m rows");
      for (int r = 0; r < d; ++r) {
        if (static_cast<int>(zpaths[r].size()) != m)
          throw ConfigParse("fields.auxiliary: need m columns");
        for (auto& p : zpaths[r]) zt[r].push_back(load(p));
      }
    }
    auto lp = load(fj.at("log_pi").get<std::string>());

    GenericFields gf;
    gf.drift = [bt, d](const Vec& x) {
      Vec b(d);
      for (int i = 0; i < d; ++i) b[i] = bt[i]->value(x);
      return b;
    };
    gf.diffusion = [at, d, n](const Vec& x) {
      Mat A(d, n);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < n; ++c) A(r, c) = at[r][c]->value(x);
      return A;
    };
    gf.diffusion_d1 = [at, d, n](const Vec& x, int h) {
      Mat A(d, n);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < n; ++c) A(r, c) = at[r][c]->d1(x, h);
      return A;
    };
    gf.diffusion_d2 = [at, d, n](const Vec& x, int h, int g) {
      Mat A(d, n);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < n; ++c) A(r, c) = at[r][c]->d2(x, h, g);
      return A;
    };
    if (m > 0) {
      gf.auxiliary = [zt, d, m](const Vec& x) {
        Mat Z(d, m);
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < m; ++c) Z(r, c) = zt[r][c]->value(x);
        return Z;
      };
      gf.auxiliary_d1 = [zt, d, m](const Vec& x, int h) {
        Mat Z(d, m);
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < m; ++c) Z(r, c) = zt[r][c]->d1(x, h);
        return Z;
      };
      gf.auxiliary_d2 = [zt, d, m](const Vec& x, int h, int g) {
        Mat Z(d, m);
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < m; ++c) Z(r, c) = zt[r][c]->d2(x, h, g);
        return Z;
      };
    }
    gf.log_pi = [lp](const Vec& x) { return lp->value(x); };
    gf.grad_log_pi = [lp, d](const Vec& x) {
      Vec g(d);
      for (int a = 0; a < d; ++a) g[a] = lp->d1(x, a);
      return g;
    };
    gf.hess_log_pi = [lp, d](const Vec& x) {
      Mat h(d, d);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) h(a, b) = lp->d2(x, a, b);
      return h;
    };
    return std::make_unique<GenericModel>(n, m, gf, detail::domain_from_json(j, d));
  }

  throw ConfigParse("model: unknown family '" + family + "'");
}

inline std::unique_ptr<Model> model_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigParse("cannot open model file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigParse(path + ": " + e.what());
  }
  std::string dir = ".";
  const auto slash = path.find_last_of('/');
  if (slash != std::string::npos) dir = path.substr(0, slash);
  try {
    return model_from_json(j, dir);
  } catch (const json::exception& e) {
    throw ConfigParse(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports and diagnostics
// ---------------------------------------------------------------------------

inline json to_json(const ConditionReport& r) {
  json j;
  j["family"] = r.family;
  j["pass"] = r.pass;
  for (const auto& [k, v] : r.margins) j["margins"][k] = v;
  return j;
}

inline json to_json(const BochnerReport& r) {
  return json{{"identity", "bochner"},
              {"lhs", r.lhs},
              {"rhs", r.rhs},
              {"residual", r.residual},
              {"tolerance", r.tolerance},
              {"pass", r.pass}};
}

inline json to_json(const StationarityReport& r) {
  json j{{"identity", "stationarity"}, {"residual", r.max_residual}, {"pass", r.pass}};
  if (r.worst_point.size()) {
    std::vector<double> wp(r.worst_point.data(), r.worst_point.data() + r.worst_point.size());
    j["worst_point"] = wp;
  }
  return j;
}

inline json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

/// Per-point diagnostics record behind --dump-tensor.
inline json dump_tensor_record(const Model& model, const Vec& x, double beta,
                               const AssemblyOptions& opts = {}) {
  HessianBundle b = assemble(model, x, beta, opts);
  json j;
  std::vector<double> xs(x.data(), x.data() + x.size());
  j["x"] = xs;
  j["beta"] = beta;
  j["blocks"]["R_a"] = matrix_to_json(b.R_a);
  j["blocks"]["R_z"] = matrix_to_json(b.R_z);
  j["blocks"]["R_pi"] = matrix_to_json(b.R_pi);
  j["blocks"]["R_Ia"] = matrix_to_json(b.R_Ia);
  j["blocks"]["R_gamma_a"] = matrix_to_json(b.R_gamma_a);
  j["blocks"]["R_gamma_z"] = matrix_to_json(b.R_gamma_z);
  j["R_total"] = matrix_to_json(b.R_total);
  SymEig e = jacobi_eigh(b.R_total);
  std::vector<double> ev(e.values.data(), e.values.data() + e.values.size());
  j["eigvals"] = ev;
  return j;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace hyporate

#endif  // HYPORATE_IO_HPP_
