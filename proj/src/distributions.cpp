#include "sketchbreak/distributions.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <stdexcept>

namespace sketchbreak {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void Rng::fill_normal(Mat& m, double sd) {
  double* p = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) p[i] = sd * normal_(eng_);
}

void Rng::fill_normal(Vec& v, double sd) {
  for (auto& x : v) x = sd * normal_(eng_);
}

void ComplementGaussianSpec::validate() const {
  if (!(sigma_sq >= 0)) throw std::domain_error("ComplementGaussianSpec: sigma_sq must be >= 0");
  if (!(noise_var > 0)) throw std::domain_error("ComplementGaussianSpec: noise_var must be > 0");
}

Vec sample_gaussian(int n, double var, Rng& rng) {
  if (var < 0) throw std::domain_error("sample_gaussian: negative variance");
  Vec v(n);
  if (var == 0) return Vec::Zero(n);
  rng.fill_normal(v, std::sqrt(var));
  return v;
}

Vec sample_complement(const ComplementGaussianSpec& spec, Rng& g1_stream, Rng& g2_stream) {
  spec.validate();
  const int n = spec.ambient_dim();
  Vec g = Vec::Zero(n);
  if (spec.sigma_sq > 0) {
    g = sample_gaussian(n, spec.sigma_sq, g1_stream);
    g -= project(g, spec.v);
  }
  return g + sample_gaussian(n, spec.noise_var, g2_stream);
}

Vec sample_complement(const ComplementGaussianSpec& spec, Rng& rng) {
  return sample_complement(spec, rng, rng);
}

Mat sample_complement_batch(const ComplementGaussianSpec& spec, int m, Rng& g1_stream,
                            Rng& g2_stream) {
  spec.validate();
  const int n = spec.ambient_dim();
  Mat g(m, n);
  if (spec.sigma_sq > 0) {
    g1_stream.fill_normal(g, std::sqrt(spec.sigma_sq));
    remove_component_rows(g, spec.v);
  } else {
    g.setZero();
  }
  Mat noise(m, n);
  g2_stream.fill_normal(noise, std::sqrt(spec.noise_var));
  g += noise;
  return g;
}

Subspace intersection(const Subspace& a, const Subspace& b, double tol) {
  if (a.ambient_dim() != b.ambient_dim()) throw std::invalid_argument("intersection: dimension mismatch");
  if (a.dim() == 0 || b.dim() == 0) return Subspace(a.ambient_dim());
  Eigen::JacobiSVD<Mat> svd(a.basis().transpose() * b.basis(), Eigen::ComputeThinU);
  Mat cols(a.ambient_dim(), 0);
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()(i) < 1.0 - tol) break;
    cols.conservativeResize(Eigen::NoChange, cols.cols() + 1);
    cols.col(cols.cols() - 1) = a.basis() * svd.matrixU().col(i);
  }
  return Subspace::span(cols);
}

Vec sample_subspace_gaussian(const Subspace& a, double tau, const Subspace& v, Rng& rng,
                             SubspaceGaussianBranch branch) {
  if (!(tau > 0)) throw std::domain_error("sample_subspace_gaussian: tau must be > 0");
  if (a.ambient_dim() != v.ambient_dim()) throw std::invalid_argument("sample_subspace_gaussian: dimension mismatch");
  const int d = a.dim() - v.dim();
  if (d <= 0) throw std::invalid_argument("sample_subspace_gaussian: V must be a proper subspace of A");
  if (v.dim() > 0 && (project_rows(v.basis().transpose(), a) - v.basis().transpose()).norm() > 1e-8) {
    throw std::invalid_argument("sample_subspace_gaussian: V must lie inside A");
  }
  const double ratio = tau / d;
  bool complement = ratio > 0.25;
  if (branch == SubspaceGaussianBranch::kComplement) complement = true;
  if (branch == SubspaceGaussianBranch::kPlain) complement = false;
  Vec g;
  if (complement) {
    if (ratio < 0.25) throw std::domain_error("sample_subspace_gaussian: complement branch needs tau/d >= 1/4");
    g = sample_complement({v, ratio - 0.25, 0.25}, rng);
  } else {
    g = sample_gaussian(a.ambient_dim(), ratio, rng);
  }
  return project(g, a);
}

Vec sample_subspace_gaussian(const Subspace& a, double tau, const Subspace& v, Rng& rng) {
  return sample_subspace_gaussian(a, tau, v, rng, SubspaceGaussianBranch::kAuto);
}

double tv_bound_shifted(double v_norm, double sigma) {
  if (!(sigma > 0)) throw std::domain_error("tv_bound_shifted: sigma must be > 0");
  return std::min(1.0, v_norm / sigma);
}

double tv_bound_complements(const Subspace& v, const Subspace& w, double sigma_sq, double B,
                            int n) {
  if (!(sigma_sq > 0) || sigma_sq > B) throw std::domain_error("tv_bound_complements: sigma_sq outside (0, B]");
  const double bn = B * n;
  return 20.0 * std::sqrt(bn * std::log(bn)) * subspace_distance(v, w) + std::pow(bn, -5.0);
}

double tv_shifted_exact(double delta, double sigma) {
  // 2 Phi(delta / 2 sigma) - 1
  return std::erf(delta / (2.0 * sigma * std::sqrt(2.0)));
}

std::pair<double, double> maximal_coupling_1d(double mu1, double mu2, double s, Rng& rng) {
  auto logpdf = [s](double x, double mu) { return -0.5 * (x - mu) * (x - mu) / (s * s); };
  const double x = mu1 + s * rng.normal();
  if (std::log(rng.uniform()) + logpdf(x, mu1) <= logpdf(x, mu2)) return {x, x};
  for (;;) {
    const double y = mu2 + s * rng.normal();
    if (std::log(rng.uniform()) + logpdf(y, mu2) > logpdf(y, mu1)) return {x, y};
  }
}

CouplingEstimate coupled_disagreement(const Subspace& v, const Subspace& w, double sigma_sq,
                                      double noise_var, int trials, Rng& rng) {
  const int n = v.ambient_dim();
  const Mat diff = w.projector() - v.projector();  // P_{V^perp} - P_{W^perp}
  const double s = std::sqrt(noise_var);
  long bad = 0;
  for (int t = 0; t < trials; ++t) {
    Vec g1 = sample_gaussian(n, sigma_sq, rng);
    const Vec delta = diff * g1;
    const double norm = delta.norm();
    if (norm == 0) continue;
    // only the coordinate along delta can differ; the rest of g2 is shared
    auto [a, b] = maximal_coupling_1d(norm, 0.0, s, rng);
    if (a != b) ++bad;
  }
  return {trials > 0 ? static_cast<double>(bad) / trials : 0.0, trials};
}

}  // namespace sketchbreak
