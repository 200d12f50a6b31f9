#include "sketchbreak/chi2.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sketchbreak {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_params(const ChiSquareParams& p) {
  if (p.d < 1) throw std::domain_error("chi2: d must be >= 1");
  if (!(p.tau > 0)) throw std::domain_error("chi2: tau must be > 0");
}

}  // namespace

double log_nu_density(double s, const ChiSquareParams& p) {
  check_params(p);
  if (s < 0) throw std::domain_error("nu_density: s must be >= 0");
  const double d = p.d;
  const double half = 0.5 * d;
  if (s == 0) {
    if (p.d == 2) return std::log(d / (p.tau * 2.0));
    return p.d > 2 ? -kInf : kInf;
  }
  const double x = s * d / p.tau;
  return std::log(d) + (half - 1.0) * std::log(x) - 0.5 * x - std::log(p.tau) -
         half * std::log(2.0) - std::lgamma(half);
}

double nu_density(double s, const ChiSquareParams& p) {
  return std::exp(log_nu_density(s, p));
}

double gamma_interval_mass(double d_param, double a, double b) {
  if (!(d_param > 0)) throw std::domain_error("gamma_interval_mass: d_param must be > 0");
  if (a < 0 || a > b) throw std::domain_error("gamma_interval_mass: need 0 <= a <= b");
  if (a == b) return 0.0;
  using boost::math::gamma_p;
  using boost::math::gamma_q;
  if (std::isinf(b)) return gamma_q(d_param, a);
  // difference of upper tails is the accurate one to the right of the mode
  if (a > d_param) return gamma_q(d_param, a) - gamma_q(d_param, b);
  return gamma_p(d_param, b) - gamma_p(d_param, a);
}

WeightedIntegrals weighted_interval_integrals(double s, double a, double b,
                                              const ChiSquareParams& p) {
  if (p.d < 5) throw std::domain_error("weighted_interval_integrals: need d >= 5");
  if (s < 0 || a < 0 || a > b) {
    throw std::domain_error("weighted_interval_integrals: need s >= 0, 0 <= a <= b");
  }
  if (s == 0 || a == b) return {};
  const double d = p.d;
  const double lo = s * d / (2.0 * b);
  const double hi = a == 0 ? kInf : s * d / (2.0 * a);
  WeightedIntegrals out;
  out.I_s = s / (1.0 - 2.0 / d) * gamma_interval_mass(d / 2.0 - 1.0, lo, hi);
  out.I_tau = s / (1.0 - 6.0 / d + 8.0 / (d * d)) * gamma_interval_mass(d / 2.0 - 2.0, lo, hi);
  return out;
}

Integral integrate(const std::function<double(double)>& f, double a, double b,
                   const QuadratureSpec& q) {
  if (a == b) return {};
  double err = 0.0;
  double l1 = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, a, b, static_cast<unsigned>(q.max_subdivisions), q.rel_tol, &err, &l1);
  return {v, err * std::max(1.0, l1)};
}

WeightedIntegrals weighted_interval_quadrature(double s, double a, double b,
                                               const ChiSquareParams& p,
                                               const QuadratureSpec& q) {
  if (s < 0 || a < 0 || a > b) throw std::domain_error("weighted_interval_quadrature: bad interval");
  if (s == 0 || a == b) return {};
  auto nu_tau = [&](double tau) {
    ChiSquareParams pt = p;
    pt.tau = tau;
    return nu_density(s, pt);
  };
  // the integrand in tau peaks near s, so split there
  std::vector<double> cuts{a};
  for (double c : {s / 2.0, s, 2.0 * s}) {
    if (c > a && c < b) cuts.push_back(c);
  }
  cuts.push_back(b);
  WeightedIntegrals out;
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    out.I_s += integrate([&](double t) { return s * nu_tau(t); }, cuts[i], cuts[i + 1], q).value;
    out.I_tau += integrate([&](double t) { return t * nu_tau(t); }, cuts[i], cuts[i + 1], q).value;
  }
  return out;
}

double delta_advantage(double s, const ChiSquareParams& p) {
  if (!(p.B > 1)) throw std::domain_error("delta_advantage: B must be > 1");
  if (s < 0) throw std::domain_error("delta_advantage: s must be >= 0");
  const double d = p.d;
  auto w = weighted_interval_integrals(s, d, p.B * d, p);
  return w.I_s - w.I_tau;
}

double s_truncation(double tau, const ChiSquareParams& p) {
  return tau * (1.0 + 20.0 / std::sqrt(static_cast<double>(p.d))) * p.B;
}

Integral nu_normalization(const ChiSquareParams& p, const QuadratureSpec& q) {
  const double top = s_truncation(p.tau, p);
  auto f = [&](double s) { return nu_density(s, p); };
  Integral out;
  const double cuts[] = {0.0, p.tau / 2.0, p.tau, 2.0 * p.tau, top};
  for (int i = 0; i < 4; ++i) {
    if (cuts[i + 1] <= cuts[i]) continue;
    auto part = integrate(f, cuts[i], cuts[i + 1], q);
    out.value += part.value;
    out.error += part.error;
  }
  out.error += boost::math::gamma_q(p.d / 2.0, top * p.d / (2.0 * p.tau));
  return out;
}

Integral nu_mean(const ChiSquareParams& p, const QuadratureSpec& q) {
  const double top = s_truncation(p.tau, p);
  auto f = [&](double s) { return s * nu_density(s, p); };
  Integral out;
  const double cuts[] = {0.0, p.tau / 2.0, p.tau, 2.0 * p.tau, top};
  for (int i = 0; i < 4; ++i) {
    if (cuts[i + 1] <= cuts[i]) continue;
    auto part = integrate(f, cuts[i], cuts[i + 1], q);
    out.value += part.value;
    out.error += part.error;
  }
  out.error += p.tau * boost::math::gamma_q(p.d / 2.0 + 1.0, top * p.d / (2.0 * p.tau));
  return out;
}

namespace {

std::vector<double> delta_breakpoints(const ChiSquareParams& p, double lo, double hi) {
  const double d = p.d;
  std::vector<double> cuts{lo};
  for (double c : {d / 2.0, d, 2.0 * d, p.B * d / 2.0, p.B * d, 2.0 * p.B * d}) {
    if (c > lo && c < hi) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(hi);
  return cuts;
}

Integral integrate_delta(const ChiSquareParams& p, double lo, double hi,
                         const QuadratureSpec& q) {
  Integral out;
  if (hi <= lo) return out;
  auto f = [&](double s) { return delta_advantage(s, p); };
  auto cuts = delta_breakpoints(p, lo, hi);
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    auto part = integrate(f, cuts[i], cuts[i + 1], q);
    out.value += part.value;
    out.error += part.error;
  }
  return out;
}

// Bound on int_{top}^inf |Delta(s)| ds.
double delta_tail_bound(const ChiSquareParams& p, double top) {
  const double d = p.d;
  const double x = top / (2.0 * p.B);
  using boost::math::gamma_q;
  return (p.B - 1.0) * d * p.B * d * (gamma_q(d / 2.0 + 1.0, x) + gamma_q(d / 2.0, x));
}

}  // namespace

Integral delta_total_integral(const ChiSquareParams& p, const QuadratureSpec& q) {
  const double top = s_truncation(p.d, p);
  auto out = integrate_delta(p, 0.0, top, q);
  out.error += delta_tail_bound(p, top);
  return out;
}

StepFunction::StepFunction(double s_max, std::vector<double> values, double tail_value)
    : s_max_(s_max), values_(std::move(values)), tail_(tail_value) {
  if (!(s_max_ > 0) || values_.empty()) throw std::invalid_argument("StepFunction: empty grid");
  for (double v : values_) {
    if (v < 0 || v > 1) throw std::invalid_argument("StepFunction: values must lie in [0,1]");
  }
  if (tail_ < 0 || tail_ > 1) throw std::invalid_argument("StepFunction: tail must lie in [0,1]");
}

StepFunction StepFunction::from(const std::function<double(double)>& f, double s_max,
                                int cells) {
  std::vector<double> v(cells);
  const double w = s_max / cells;
  for (int i = 0; i < cells; ++i) v[i] = f((i + 0.5) * w);
  return StepFunction(s_max, std::move(v), f(s_max));
}

StepFunction StepFunction::indicator_above(double threshold, double s_max, int cells) {
  // grid is snapped so that the threshold is a cell boundary when possible
  std::vector<double> v(cells);
  const double w = s_max / cells;
  for (int i = 0; i < cells; ++i) v[i] = (i * w >= threshold - 1e-12 * s_max) ? 1.0 : 0.0;
  return StepFunction(s_max, std::move(v), 1.0);
}

StepFunction StepFunction::zero(double s_max, int cells) {
  return StepFunction(s_max, std::vector<double>(cells, 0.0), 0.0);
}

double StepFunction::operator()(double s) const {
  if (s >= s_max_) return tail_;
  if (s < 0) return 0.0;
  const auto i = static_cast<size_t>(s / cell_width());
  return values_[std::min(i, values_.size() - 1)];
}

double StepFunction::integral(double a, double b, double c1, double c2) const {
  if (b <= a) return 0.0;
  const double w = cell_width();
  double total = 0.0;
  const double top = std::min(b, s_max_);
  if (a < top) {
    auto i0 = static_cast<size_t>(std::max(0.0, a) / w);
    for (size_t i = i0; i < values_.size(); ++i) {
      const double lo = std::max(a, i * w);
      const double hi = std::min(top, (i + 1) * w);
      if (hi <= lo) break;
      total += (hi - lo) * (c1 + c2 * values_[i]);
    }
  }
  if (b > s_max_) total += (b - std::max(a, s_max_)) * (c1 + c2 * tail_);
  return total;
}

std::string HSoundnessReport::violations() const {
  std::ostringstream os;
  if (!cond1_ok) os << "condition 1 violated: " << cond1 << " > " << cond1_limit << " (by " << cond1 - cond1_limit << ")";
  if (!cond2_ok) {
    if (!cond1_ok) os << "; ";
    os << "condition 2 violated: " << cond2 << " > " << cond2_limit << " (by " << cond2 - cond2_limit << ")";
  }
  return os.str();
}

HSoundnessReport check_h_soundness_inequality(const StepFunction& h,
                                              const ChiSquareParams& p,
                                              const QuadratureSpec& q) {
  const double d = p.d;
  const double B = p.B;
  HSoundnessReport rep;
  rep.cond1 = h.integral(B * d / 2.0, 2.0 * B * d, 1.0, -1.0);
  rep.cond1_limit = 1.0 / (B * d);
  rep.cond1_ok = rep.cond1 <= rep.cond1_limit;
  rep.cond2 = h.integral(0.0, 2.0 * d, 0.0, 1.0);
  rep.cond2_limit = 1.0 / d;
  rep.cond2_ok = rep.cond2 <= rep.cond2_limit;

  // integrate Delta over maximal runs where h is constant
  const auto& v = h.values();
  const double w = h.cell_width();
  size_t i = 0;
  while (i < v.size()) {
    size_t j = i;
    while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
    if (v[i] != 0.0) {
      auto part = integrate_delta(p, i * w, (j + 1) * w, q);
      rep.value += v[i] * part.value;
      rep.error += v[i] * part.error;
    }
    i = j + 1;
  }
  const double top = std::max(h.s_max(), s_truncation(p.d, p));
  if (h.tail_value() != 0.0) {
    auto part = integrate_delta(p, h.s_max(), top, q);
    rep.value += h.tail_value() * part.value;
    rep.error += h.tail_value() * part.error;
  }
  rep.error += delta_tail_bound(p, top);
  return rep;
}

}  // namespace sketchbreak
