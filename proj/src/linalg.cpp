#include "sketchbreak/linalg.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace sketchbreak {

namespace {

void check_dim(int a, int b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

// Modified Gram-Schmidt, in place, two passes.
void mgs(Mat& q) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      for (Eigen::Index i = 0; i < j; ++i) q.col(j) -= q.col(i).dot(q.col(j)) * q.col(i);
      q.col(j).normalize();
    }
  }
}

}  // namespace

Subspace::Subspace(int ambient_dim) : n_(ambient_dim), basis_(ambient_dim, 0) {
  if (ambient_dim < 0) throw std::invalid_argument("Subspace: negative dimension");
}

Subspace Subspace::full(int n) {
  return from_orthonormal(Mat::Identity(n, n));
}

Subspace Subspace::from_orthonormal(Mat basis) {
  Subspace s(static_cast<int>(basis.rows()));
  if (basis.cols() > basis.rows()) throw std::invalid_argument("Subspace: more vectors than dimensions");
  s.basis_ = std::move(basis);
  if (s.orthonormality_error() > 1e-10) throw std::invalid_argument("Subspace: basis not orthonormal");
  return s;
}

Subspace Subspace::span(const Mat& columns, double tol) {
  Subspace s(static_cast<int>(columns.rows()));
  Mat q(columns.rows(), 0);
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    Vec v = columns.col(j);
    const double scale = v.norm();
    if (scale == 0) continue;
    for (int pass = 0; pass < 2; ++pass) v -= q * (q.transpose() * v);
    if (v.norm() <= tol * scale) continue;
    q.conservativeResize(Eigen::NoChange, q.cols() + 1);
    q.col(q.cols() - 1) = v.normalized();
  }
  s.basis_ = std::move(q);
  return s;
}

double Subspace::orthonormality_error() const {
  if (basis_.cols() == 0) return 0.0;
  Mat g = basis_.transpose() * basis_;
  g -= Mat::Identity(g.rows(), g.cols());
  return g.cwiseAbs().maxCoeff();
}

Vec project(const Vec& v, const Subspace& s) {
  check_dim(static_cast<int>(v.size()), s.ambient_dim(), "project");
  if (s.dim() == 0) return Vec::Zero(v.size());
  return s.basis() * (s.basis().transpose() * v);
}

Mat project_rows(const Mat& X, const Subspace& s) {
  check_dim(static_cast<int>(X.cols()), s.ambient_dim(), "project_rows");
  if (s.dim() == 0) return Mat::Zero(X.rows(), X.cols());
  return (X * s.basis()) * s.basis().transpose();
}

void remove_component_rows(Mat& X, const Subspace& s) {
  check_dim(static_cast<int>(X.cols()), s.ambient_dim(), "remove_component_rows");
  if (s.dim() == 0) return;
  X.noalias() -= (X * s.basis()) * s.basis().transpose();
}

Subspace orthogonal_complement(const Subspace& s) {
  const int n = s.ambient_dim();
  const int t = s.dim();
  if (t == 0) return Subspace::full(n);
  Eigen::HouseholderQR<Mat> qr(s.basis());
  Mat q = qr.householderQ() * Mat::Identity(n, n);
  Mat c = q.rightCols(n - t);
  mgs(c);
  return Subspace::from_orthonormal(std::move(c));
}

Subspace extend_orthonormal(const Subspace& s, const Vec& v, double threshold) {
  check_dim(static_cast<int>(v.size()), s.ambient_dim(), "extend_orthonormal");
  Vec res = v;
  for (int pass = 0; pass < 2; ++pass) res -= project(res, s);
  const double r = res.norm();
  if (!(r > threshold)) throw DegenerateDirection(r);
  Mat b(s.ambient_dim(), s.dim() + 1);
  b.leftCols(s.dim()) = s.basis();
  b.col(s.dim()) = res / r;
  Mat g = b.transpose() * b - Mat::Identity(b.cols(), b.cols());
  if (g.cwiseAbs().maxCoeff() > 1e-9) mgs(b);
  return Subspace::from_orthonormal(std::move(b));
}

double subspace_distance(const Subspace& a, const Subspace& b) {
  check_dim(a.ambient_dim(), b.ambient_dim(), "subspace_distance");
  Mat diff = a.projector() - b.projector();
  if (diff.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(diff, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double second_moment_along(const Mat& g, const Vec& v) {
  if (g.rows() == 0) return 0.0;
  return (g * v).squaredNorm() / static_cast<double>(g.rows());
}

TopSingular top_eigenvector(const Mat& m, double tol, int max_iters, std::uint64_t seed) {
  const auto n = m.rows();
  if (n == 0) throw std::invalid_argument("top_eigenvector: empty matrix");
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> nd;
  Vec v(n);
  for (auto& x : v) x = nd(eng);
  v.normalize();

  TopSingular out;
  Vec w = m * v;
  double lambda = v.dot(w);
  for (int it = 1; it <= max_iters; ++it) {
    const double norm = w.norm();
    if (norm == 0) {
      // v is in the kernel; the top eigenvalue is 0 and any unit vector attains it
      out.u = v;
      out.objective = 0.0;
      out.iterations = it;
      return out;
    }
    v = w / norm;
    w.noalias() = m * v;
    const double next = v.dot(w);
    const bool stalled = std::abs(next - lambda) <= tol * std::abs(next);
    lambda = next;
    if (stalled) {
      out.u = v;
      out.objective = lambda;
      out.iterations = it;
      return out;
    }
  }
  throw NoConvergence(max_iters, (m * v - lambda * v).norm());
}

TopSingular top_singular_vector(const Mat& g, double tol, int max_iters, std::uint64_t seed) {
  if (g.rows() == 0) throw std::invalid_argument("top_singular_vector: no samples");
  Mat m = g.transpose() * g / static_cast<double>(g.rows());
  auto out = top_eigenvector(m, tol, max_iters, seed);
  out.objective = second_moment_along(g, out.u);
  return out;
}

}  // namespace sketchbreak
