#pragma once

#include <functional>
#include <string>
#include <vector>

namespace sketchbreak {

struct ChiSquareParams {
  int d = 20;
  double tau = 1.0;
  double B = 8.0;
};

struct QuadratureSpec {
  double abs_tol = 1e-13;
  double rel_tol = 1e-11;
  int max_subdivisions = 25;
  // cells of the uniform grid used for tabulated h
  int grid_cells = 4096;
};

struct Integral {
  double value = 0.0;
  double error = 0.0;  // quadrature estimate plus any analytic tail bound
};

double nu_density(double s, const ChiSquareParams& p);
double log_nu_density(double s, const ChiSquareParams& p);

// Regularized mass of Gamma(d_param) on [a, b]; b may be +inf.
double gamma_interval_mass(double d_param, double a, double b);

struct WeightedIntegrals {
  double I_s = 0.0;
  double I_tau = 0.0;
};

// Closed forms of int_a^b s nu_tau(s) dtau and int_a^b tau nu_tau(s) dtau.
WeightedIntegrals weighted_interval_integrals(double s, double a, double b,
                                              const ChiSquareParams& p);

// Direct adaptive quadrature in tau of the same two integrals.
WeightedIntegrals weighted_interval_quadrature(double s, double a, double b,
                                               const ChiSquareParams& p,
                                               const QuadratureSpec& q = {});

double delta_advantage(double s, const ChiSquareParams& p);

Integral integrate(const std::function<double(double)>& f, double a, double b,
                   const QuadratureSpec& q = {});

// Truncation point for integrals in s over [0, inf).
double s_truncation(double tau, const ChiSquareParams& p);

Integral nu_normalization(const ChiSquareParams& p, const QuadratureSpec& q = {});
Integral nu_mean(const ChiSquareParams& p, const QuadratureSpec& q = {});
Integral delta_total_integral(const ChiSquareParams& p, const QuadratureSpec& q = {});

// Piecewise constant on [0, s_max] over a uniform grid; value past s_max is
// `tail_value`.
class StepFunction {
 public:
  StepFunction(double s_max, std::vector<double> values, double tail_value);

  static StepFunction from(const std::function<double(double)>& f, double s_max,
                           int cells);
  static StepFunction indicator_above(double threshold, double s_max, int cells);
  static StepFunction zero(double s_max, int cells);

  double operator()(double s) const;
  double s_max() const { return s_max_; }
  double tail_value() const { return tail_; }
  double cell_width() const { return s_max_ / static_cast<double>(values_.size()); }
  const std::vector<double>& values() const { return values_; }

  // Exact integral of g(s) = c1 + c2*h(s) over [a, b].
  double integral(double a, double b, double c1, double c2) const;

 private:
  double s_max_;
  std::vector<double> values_;
  double tail_;
};

struct HSoundnessReport {
  double value = 0.0;  // int h(s) Delta(s) ds
  double error = 0.0;
  double cond1 = 0.0;  // int_{Bd/2}^{2Bd} (1 - h)
  double cond1_limit = 0.0;
  double cond2 = 0.0;  // int_0^{2d} h
  double cond2_limit = 0.0;
  bool cond1_ok = false;
  bool cond2_ok = false;
  bool conforming() const { return cond1_ok && cond2_ok; }
  std::string violations() const;
};

HSoundnessReport check_h_soundness_inequality(const StepFunction& h,
                                              const ChiSquareParams& p,
                                              const QuadratureSpec& q = {});

}  // namespace sketchbreak
