#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sketchbreak {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class DegenerateDirection : public std::runtime_error {
 public:
  explicit DegenerateDirection(double residual)
      : std::runtime_error("direction lies inside the subspace (residual " +
                           std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class NoConvergence : public std::runtime_error {
 public:
  NoConvergence(int iters, double residual)
      : std::runtime_error("power iteration did not converge after " + std::to_string(iters) +
                           " iterations (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// Orthonormal basis stored column-wise, n x t.
class Subspace {
 public:
  explicit Subspace(int ambient_dim = 0);

  static Subspace full(int n);
  // Trusts the caller only up to the orthonormality check (1e-10).
  static Subspace from_orthonormal(Mat basis);
  // Orthonormalizes the given columns; columns dependent within `tol` are dropped.
  static Subspace span(const Mat& columns, double tol = 1e-10);

  int ambient_dim() const { return n_; }
  int dim() const { return static_cast<int>(basis_.cols()); }
  const Mat& basis() const { return basis_; }
  Mat projector() const { return basis_ * basis_.transpose(); }
  double orthonormality_error() const;

 private:
  int n_;
  Mat basis_;
};

Vec project(const Vec& v, const Subspace& s);
// Projects every row of X onto s.
Mat project_rows(const Mat& X, const Subspace& s);
// Removes from every row of X its component in s.
void remove_component_rows(Mat& X, const Subspace& s);

Subspace orthogonal_complement(const Subspace& s);

constexpr double kDegeneracyThreshold = 1e-8;
Subspace extend_orthonormal(const Subspace& s, const Vec& v,
                            double threshold = kDegeneracyThreshold);

double subspace_distance(const Subspace& a, const Subspace& b);

struct TopSingular {
  Vec u;
  double objective = 0.0;
  int iterations = 0;
};

// Rows of g are the samples; maximizes (1/m') sum <v, g_i>^2 over unit v.
TopSingular top_singular_vector(const Mat& g, double tol = 1e-12, int max_iters = 200000,
                                std::uint64_t seed = 0x5eed);
// Same, on an already formed second-moment matrix.
TopSingular top_eigenvector(const Mat& second_moment, double tol = 1e-12,
                            int max_iters = 200000, std::uint64_t seed = 0x5eed);

// (1/m') sum <v, g_i>^2
double second_moment_along(const Mat& g, const Vec& v);

}  // namespace sketchbreak
