#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sketchbreak/chi2.hpp"
#include "sketchbreak/distributions.hpp"
#include "sketchbreak/experiment.hpp"
#include "sketchbreak/stats.hpp"

namespace sketchbreak {

namespace {

std::string describe(std::initializer_list<std::pair<const char*, double>> kv) {
  std::ostringstream os;
  os.precision(6);
  bool first = true;
  for (const auto& [k, v] : kv) {
    os << (first ? "" : ", ") << k << "=" << v;
    first = false;
  }
  return os.str();
}

LemmaCheck make_check(std::string name, double margin, std::string detail) {
  return LemmaCheck{std::move(name), margin > 0, margin, std::move(detail)};
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), std::numeric_limits<double>::min());
}

}  // namespace

std::vector<LemmaCheck> chi2_suite_checks(const LemmaValidationOptions& opt) {
  double worst_norm = 0.0, worst_mean = 0.0;
  for (int d : {5, 10, 20, 50, 100, 300}) {
    for (double k : {0.5, 1.0, 4.0}) {
      ChiSquareParams p{d, k * d, 8.0};
      auto dens = [&](double s) { return opt.density_scale * nu_density(s, p); };
      auto first = [&](double s) { return s * dens(s); };
      const double top = s_truncation(p.tau, p);
      const double cut[] = {0.0, p.tau / 2, p.tau, 2 * p.tau, top};
      double mass = 0.0, mean = 0.0;
      for (int i = 0; i + 1 < 5; ++i) {
        mass += integrate(dens, cut[i], cut[i + 1]).value;
        mean += integrate(first, cut[i], cut[i + 1]).value;
      }
      worst_norm = std::max(worst_norm, std::abs(mass - 1.0));
      worst_mean = std::max(worst_mean, rel_err(mean, p.tau));
    }
  }
  double worst_closed = 0.0;
  for (int d : {10, 20, 50, 100}) {
    for (double B : {5.0, 8.0, 16.0}) {
      for (double s : {d / 2.0, 1.0 * d, 2.0 * d, B * d / 2}) {
        ChiSquareParams p{d, 1.0, B};
        auto c = weighted_interval_integrals(s, d, B * d, p);
        auto q = weighted_interval_quadrature(s, d, B * d, p);
        worst_closed = std::max({worst_closed, rel_err(c.I_s, q.I_s), rel_err(c.I_tau, q.I_tau)});
      }
    }
  }
  return {
      make_check("nu-normalization", 1e-6 - worst_norm, describe({{"max |mass - 1|", worst_norm}})),
      make_check("nu-mean", 1e-6 - worst_mean, describe({{"max rel error of mean", worst_mean}})),
      make_check("taunu-closed-forms", 1e-6 - worst_closed,
                 describe({{"max rel error vs quadrature", worst_closed}})),
  };
}

std::vector<LemmaCheck> negative_lemma_checks(const LemmaValidationOptions& opt) {
  ChiSquareParams p{opt.d_negative, 1.0, opt.B_negative};
  const double d = p.d;
  const double top = p.B * d / 2;
  double max_delta = -std::numeric_limits<double>::infinity();
  double slope_margin = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= opt.grid_points; ++i) {
    const double s = top * i / opt.grid_points;
    const double v = delta_advantage(s, p);
    max_delta = std::max(max_delta, v);
    if (s >= d && s <= 2 * d) slope_margin = std::min(slope_margin, -s / (3 * d) - v);
  }
  const auto total = delta_total_integral(p);
  return {
      make_check("negative-sign", -max_delta, describe({{"max Delta on grid", max_delta}, {"s_max", top}})),
      make_check("negative-slope", slope_margin, describe({{"min of -s/3d - Delta on [d, 2d]", slope_margin}})),
      make_check("delta-zero-integral", 1e-5 - std::abs(total.value),
                 describe({{"integral", total.value}, {"error", total.error}})),
  };
}

std::vector<LemmaCheck> stau_checks(const LemmaValidationOptions& opt) {
  ChiSquareParams p{opt.d_stau, 1.0, opt.B_stau};
  const double d = p.d;
  const double s_max = 4 * p.B * d;
  std::vector<LemmaCheck> out;
  const std::pair<const char*, double> steps[] = {{"stau-indicator-Bd/2", p.B * d / 2}, {"stau-step-2d", 2 * d}};
  for (const auto& [name, at] : steps) {
    auto h = StepFunction::indicator_above(at, s_max, QuadratureSpec{}.grid_cells);
    auto rep = check_h_soundness_inequality(h, p);
    double margin = rep.value - rep.error - d / 4;
    std::string detail = describe({{"integral", rep.value}, {"error", rep.error}, {"d/4", d / 4}});
    if (!rep.conforming()) {
      margin = std::min(margin, -1.0);
      detail += "; " + rep.violations();
    }
    out.push_back(make_check(name, margin, detail));
  }
  return out;
}

LemmaCheck suffstat_check(const LemmaValidationOptions& opt) {
  const int d = 16, extra = 4, n = 24;
  Rng rng = Rng(opt.seed).split(11);
  Mat raw(n, d + extra);
  rng.fill_normal(raw, 1.0);
  const Subspace a = Subspace::span(raw);
  const Subspace v = Subspace::from_orthonormal(a.basis().leftCols(extra));
  const Mat u = a.basis().rightCols(d);
  // shell on ||P_U g||^2 where both (tau/d) chi^2_16 laws have mass
  const double lo = 28.0, hi = 30.0;
  struct Draws {
    std::vector<double> direction, v_part;
  };
  auto conditioned = [&](double tau, Rng& g) {
    Draws out;
    long tries = 0;
    while (static_cast<int>(out.direction.size()) < opt.ks_samples) {
      if (++tries > 200L * opt.ks_samples) break;
      const Vec x = sample_subspace_gaussian(a, tau, v, g);
      const Vec cu = u.transpose() * x;
      const double s = cu.squaredNorm();
      if (s < lo || s > hi) continue;
      out.direction.push_back(cu(0) / std::sqrt(s));
      out.v_part.push_back((v.basis().transpose() * x).squaredNorm());
    }
    return out;
  };
  Rng g1 = rng.split(1), g2 = rng.split(2);
  const auto one = conditioned(1.0 * d, g1);
  const auto four = conditioned(4.0 * d, g2);
  if (static_cast<int>(one.direction.size()) < opt.ks_samples || static_cast<int>(four.direction.size()) < opt.ks_samples) {
    return make_check("suffstat-ks", -1.0, "rejection sampling fell short of the requested sample count");
  }
  const auto k1 = ks_two_sample(one.direction, four.direction);
  const auto k2 = ks_two_sample(one.v_part, four.v_part);
  const double p = std::min(k1.p_value, k2.p_value);
  return make_check("suffstat-ks", p - 1e-3,
                    describe({{"p direction", k1.p_value}, {"p V-component", k2.p_value}, {"samples", opt.ks_samples}}));
}

LemmaCheck tv_coupling_check(const LemmaValidationOptions& opt) {
  const int n = 64, k = 4;
  const double B = 8.0;
  Rng rng = Rng(opt.seed).split(12);
  Mat raw(n, k + 1);
  rng.fill_normal(raw, 1.0);
  const Subspace base = Subspace::span(raw);
  const Subspace v = Subspace::from_orthonormal(base.basis().leftCols(k));
  const Vec out_dir = base.basis().col(k);
  double margin = std::numeric_limits<double>::infinity();
  double worst_emp = 0.0, worst_bound = 0.0;
  for (double dist : {1e-4, 3e-4, 8e-4}) {
    Mat w = v.basis();
    const double th = std::asin(dist);
    w.col(0) = std::cos(th) * v.basis().col(0) + std::sin(th) * out_dir;
    const Subspace ws = Subspace::from_orthonormal(w);
    for (double s2 : {1.0, 4.0, 8.0}) {
      Rng g = rng.split(static_cast<std::uint64_t>(dist * 1e6) * 16 + static_cast<std::uint64_t>(s2));
      const auto est = coupled_disagreement(v, ws, s2, 0.25, opt.coupling_trials, g);
      const double bound = tv_bound_complements(v, ws, s2, B, n);
      if (bound - est.disagreement < margin) {
        margin = bound - est.disagreement;
        worst_emp = est.disagreement;
        worst_bound = bound;
      }
    }
  }
  return make_check("tv-coupling", margin,
                    describe({{"tightest empirical", worst_emp}, {"its bound", worst_bound}, {"couples", opt.coupling_trials}}));
}

LemmaCheck planted_spike_check(const LemmaValidationOptions& opt) {
  const int n = 32, m = 5000;
  const double gain = 0.5, gamma = 0.1;
  Rng rng = Rng(opt.seed).split(13);
  int hits = 0;
  double worst = 1.0;
  for (int t = 0; t < opt.spike_trials; ++t) {
    Rng g = rng.split(static_cast<std::uint64_t>(t));
    Vec p(n);
    g.fill_normal(p, 1.0);
    p.normalize();
    Mat rows(m, n);
    g.fill_normal(rows, 1.0);
    // stretch the component along p to variance 1 + gain
    const Vec proj = rows * p;
    const double scale = std::sqrt(1.0 + gain);
    rows += ((scale - 1.0) * proj) * p.transpose();
    const auto top = top_singular_vector(rows, 1e-12, 200000, g.bits());
    const double align = std::pow(top.u.dot(p), 2);
    worst = std::min(worst, align);
    hits += align >= 1.0 - gamma;
  }
  const double frac = static_cast<double>(hits) / opt.spike_trials;
  return make_check("planted-spike", frac - 0.95 + 1e-12,
                    describe({{"hits", hits}, {"trials", opt.spike_trials}, {"worst alignment", worst}}));
}

bool LemmaReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

json LemmaReport::to_json() const {
  json arr = json::array();
  for (const auto& c : checks) {
    arr.push_back({{"name", c.name}, {"pass", c.pass}, {"margin", c.margin}, {"detail", c.detail}});
  }
  return {{"all_pass", all_pass()}, {"checks", arr}};
}

LemmaReport validate_lemmas(const LemmaValidationOptions& opt) {
  LemmaReport rep;
  auto add = [&](std::vector<LemmaCheck> cs) {
    for (auto& c : cs) rep.checks.push_back(std::move(c));
  };
  add(chi2_suite_checks(opt));
  add(negative_lemma_checks(opt));
  add(stau_checks(opt));
  rep.checks.push_back(suffstat_check(opt));
  rep.checks.push_back(tv_coupling_check(opt));
  rep.checks.push_back(planted_spike_check(opt));
  return rep;
}

LemmaValidationOptions lemma_options_from(const json& p) {
  LemmaValidationOptions o;
  auto get_int = [&](const char* k, int& dst, int lo) {
    if (!p.contains(k)) return;
    if (!p.at(k).is_number_integer()) throw ConfigError(std::string("parameters.") + k + ": expected an integer");
    dst = p.at(k).get<int>();
    if (dst < lo) throw ConfigError(std::string("parameters.") + k + ": must be >= " + std::to_string(lo));
  };
  auto get_num = [&](const char* k, double& dst) {
    if (!p.contains(k)) return;
    if (!p.at(k).is_number()) throw ConfigError(std::string("parameters.") + k + ": expected a number");
    dst = p.at(k).get<double>();
  };
  get_int("d_negative", o.d_negative, 5);
  get_num("B_negative", o.B_negative);
  get_int("grid_points", o.grid_points, 1);
  get_int("d_stau", o.d_stau, 5);
  get_num("B_stau", o.B_stau);
  get_int("ks_samples", o.ks_samples, 10);
  get_int("coupling_trials", o.coupling_trials, 1);
  get_int("spike_trials", o.spike_trials, 1);
  get_num("density_scale", o.density_scale);
  if (!(o.B_negative > 1)) throw ConfigError("parameters.B_negative: must exceed 1");
  if (!(o.B_stau > 1)) throw ConfigError("parameters.B_stau: must exceed 1");
  if (!(o.density_scale > 0)) throw ConfigError("parameters.density_scale: must be positive");
  return o;
}

}  // namespace sketchbreak
