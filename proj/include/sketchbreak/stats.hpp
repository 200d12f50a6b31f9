#pragma once

#include <functional>
#include <vector>

namespace sketchbreak {

// Limiting Kolmogorov tail Pr[K > lambda].
double kolmogorov_q(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);
KsResult ks_one_sample(std::vector<double> a, const std::function<double(double)>& cdf);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Clopper-Pearson interval with two-sided coverage `level`.
Interval binomial_interval(long successes, long trials, double level = 0.99);

// Pr[Bin(q, p) > q/2]
double majority_probability(int q, double p);

double median(std::vector<double> v);

}  // namespace sketchbreak
