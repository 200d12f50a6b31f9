#pragma once

#include <vector>

#include "sketchbreak/linalg.hpp"
#include "sketchbreak/rng.hpp"

namespace sketchbreak {

struct ComplementGaussianSpec {
  Subspace v;  // the subspace to avoid
  double sigma_sq = 1.0;
  double noise_var = 0.25;

  int ambient_dim() const { return v.ambient_dim(); }
  void validate() const;
};

Vec sample_gaussian(int n, double var, Rng& rng);

// g = P_{V^perp} g1 + g2
Vec sample_complement(const ComplementGaussianSpec& spec, Rng& rng);
Vec sample_complement(const ComplementGaussianSpec& spec, Rng& g1_stream, Rng& g2_stream);
// m samples as rows.
Mat sample_complement_batch(const ComplementGaussianSpec& spec, int m, Rng& g1_stream,
                            Rng& g2_stream);

// Intersection of two subspaces through the principal angles.
Subspace intersection(const Subspace& a, const Subspace& b, double tol = 1e-8);

// Member g_tau of the family on U = A cap V^perp, d = dim A - dim V.
// Requires V inside A.
Vec sample_subspace_gaussian(const Subspace& a, double tau, const Subspace& v, Rng& rng);

enum class SubspaceGaussianBranch { kAuto, kComplement, kPlain };
Vec sample_subspace_gaussian(const Subspace& a, double tau, const Subspace& v, Rng& rng,
                             SubspaceGaussianBranch branch);

double tv_bound_shifted(double v_norm, double sigma);
double tv_bound_complements(const Subspace& v, const Subspace& w, double sigma_sq, double B,
                            int n);

// Exact TV between N(0, s^2) and N(delta, s^2) in any dimension.
double tv_shifted_exact(double delta, double sigma);

struct CouplingEstimate {
  double disagreement = 0.0;  // fraction of coupled pairs with x != y
  int trials = 0;
};

// Couples G(V^perp, sigma^2) and G(W^perp, sigma^2) by sharing g1 and maximally
// coupling g2, g2' given g1.
CouplingEstimate coupled_disagreement(const Subspace& v, const Subspace& w, double sigma_sq,
                                      double noise_var, int trials, Rng& rng);

// One-dimensional maximal coupling of N(mu1, s^2) and N(mu2, s^2).
std::pair<double, double> maximal_coupling_1d(double mu1, double mu2, double s, Rng& rng);

}  // namespace sketchbreak
