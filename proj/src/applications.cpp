#include "sketchbreak/applications.hpp"

#include <cmath>
#include <numeric>

namespace sketchbreak {

const char* to_string(LpSide s) {
  return s == LpSide::kUnderEstimate ? "under-estimate" : "over-estimate";
}

bool lp_violation_holds(const LpViolation& v) {
  const double norm = lp_norm(v.x, v.p);
  if (v.side == LpSide::kUnderEstimate) return v.z_value < norm;
  return v.z_value > v.C * norm;
}

ThresholdedEstimator::ThresholdedEstimator(NormEstimatorPtr estimator, double threshold)
    : BinaryOracle(estimator->ambient_dim()), est_(std::move(estimator)), threshold_(threshold) {}

bool ThresholdedEstimator::answer(const Vec& x) { return est_->query(x) >= threshold_; }

double lp_threshold(int n, double p, double C, double B, double noise_var) {
  auto typical = [&](double sigma_sq) {
    const double sd = std::sqrt(sigma_sq + noise_var);
    if (std::isinf(p)) return sd * std::sqrt(2.0 * std::log(static_cast<double>(n)));
    const double abs_moment = std::pow(2.0, p / 2) * std::tgamma((p + 1) / 2) / std::sqrt(M_PI);
    return sd * std::pow(abs_moment, 1.0 / p) * std::pow(static_cast<double>(n), 1.0 / p);
  };
  return std::sqrt(C * typical(2.0) * typical(B / 2));
}

LpAttackResult attack_lp(NormEstimatorPtr oracle, double C, double p, long budget,
                         std::uint64_t seed, const LpAttackOptions& opt,
                         const AlignmentProbe& probe) {
  if (!(C > 1)) throw std::invalid_argument("attack_lp: C must exceed 1");
  if (budget <= opt.extract_samples) throw std::invalid_argument("attack_lp: budget below the extraction reserve");
  const int n = oracle->ambient_dim();
  const long start = oracle->queries_used();
  AttackConfig cfg = opt.attack;
  cfg.n = n;
  cfg.B = opt.B_factor * C * C;
  cfg.seed = seed;
  cfg.blocks = 1;
  cfg.max_queries = budget - opt.extract_samples;

  ThresholdedEstimator f(oracle, lp_threshold(n, p, C, cfg.B, cfg.noise_var));
  LpAttackResult out;
  out.attack = run_attack(f, cfg, probe);
  if (!out.attack.certificate) {
    out.outcome = "exhausted";
    out.queries = oracle->queries_used() - start;
    return out;
  }
  const auto& cert = *out.attack.certificate;
  Rng g = stream(seed, Stream::kExtract);
  ComplementGaussianSpec spec{cert.subspace_v, cert.sigma_sq, cert.noise_var};
  out.outcome = "certificate-without-violation";
  for (int i = 0; i < opt.extract_samples; ++i) {
    if (oracle->queries_used() - start >= budget) break;
    Vec x = sample_complement(spec, g);
    const double z = oracle->query(x);
    const double norm = lp_norm(x, p);
    std::optional<LpSide> side;
    if (z < norm) side = LpSide::kUnderEstimate;
    if (z > C * norm) side = LpSide::kOverEstimate;
    if (!side) continue;
    LpViolation v{std::move(x), z, p, C, *side};
    if (!lp_violation_holds(v)) continue;
    out.violation = std::move(v);
    out.outcome = "violation";
    break;
  }
  out.queries = oracle->queries_used() - start;
  return out;
}

bool recovery_violation_holds(const RecoveryViolation& v) {
  const double lhs = (v.x_prime - v.x).norm();
  const double rhs = v.C * tail_norm(v.x, v.k);
  return lhs > rhs;
}

std::vector<int> diagonal_set(const Subspace& v, double threshold) {
  const int n = v.ambient_dim();
  std::vector<int> s;
  const Vec inside = v.dim() > 0 ? Vec(v.basis().rowwise().squaredNorm()) : Vec(Vec::Zero(n));
  for (int i = 0; i < n; ++i) {
    if (1.0 - inside(i) >= threshold) s.push_back(i);
  }
  return s;
}

RecoveryGapNorm::RecoveryGapNorm(RecoveryOraclePtr recovery, double C, double B,
                                 const RecoveryGapNormOptions& opt)
    : BinaryOracle(recovery->ambient_dim() - (recovery->k() - 1)),
      recovery_(std::move(recovery)),
      C_(C),
      B_(B),
      opt_(opt),
      pad_(recovery_->k() - 1),
      v_(recovery_->ambient_dim() - (recovery_->k() - 1)),
      rng_(opt.seed) {
  if (!(opt_.kappa > 0 && opt_.kappa < C_)) throw std::invalid_argument("build_recovery_gapnorm: kappa must lie in (0, C)");
  const double n = ambient_dim();
  pad_value_ = opt_.pad_value > 0 ? opt_.pad_value : 1e6 * C_ * std::sqrt(n);
  adapt(v_);
}

void RecoveryGapNorm::adapt(const Subspace& v) {
  if (v.ambient_dim() != ambient_dim()) throw std::invalid_argument("RecoveryGapNorm: subspace dimension mismatch");
  const double threshold = std::sqrt(1.0 - opt_.kappa * opt_.kappa / (C_ * C_));
  auto s = diagonal_set(v, threshold);
  if (3 * static_cast<long>(s.size()) < ambient_dim()) {
    throw ReductionPreconditionError("|S| = " + std::to_string(s.size()) + " < n/3 with dim V = " +
                                     std::to_string(v.dim()) + "; r is too large for this C and kappa");
  }
  std::lock_guard lock(mu_);
  v_ = v;
  s_ = std::move(s);
}

long RecoveryGapNorm::max_cost_per_query() const {
  const long s = static_cast<long>(s_.size());
  return opt_.probes > 0 ? std::min<long>(opt_.probes, s) : s;
}

double RecoveryGapNorm::probe_scale() const { return 4.0 * C_ * std::sqrt(static_cast<double>(ambient_dim())); }

Vec RecoveryGapNorm::pad(const Vec& x) const {
  if (pad_ == 0) return x;
  Vec out(x.size() + pad_);
  out.head(x.size()) = x;
  out.tail(pad_).setConstant(pad_value_);
  return out;
}

Vec RecoveryGapNorm::probe_vector(const Vec& x, int i) const {
  Vec e = Vec::Zero(ambient_dim());
  e(i) = 1.0;
  e -= project(e, v_);
  return pad(x + probe_scale() * e);
}

std::optional<Subspace> RecoveryGapNorm::reveal_rowspace() const {
  auto a = recovery_->reveal_rowspace();
  if (!a || pad_ == 0) return a;
  return Subspace::span(a->basis().topRows(ambient_dim()));
}

bool RecoveryGapNorm::answer(const Vec& x) {
  std::vector<int> idx;
  {
    std::lock_guard lock(mu_);
    idx = s_;
    const auto want = static_cast<size_t>(opt_.probes);
    if (want > 0 && want < idx.size()) {
      for (size_t j = 0; j < want; ++j) std::swap(idx[j], idx[j + rng_.below(idx.size() - j)]);
      idx.resize(want);
    }
  }
  const double floor = C_ * std::sqrt(static_cast<double>(ambient_dim()));
  for (int i : idx) {
    const Vec z = recovery_->query(probe_vector(x, i));
    if (std::abs(z(i)) < floor) return true;
  }
  return false;
}

std::shared_ptr<RecoveryGapNorm> build_recovery_gapnorm(RecoveryOraclePtr recovery, double C,
                                                        double kappa, double B,
                                                        const RecoveryGapNormOptions& opt) {
  auto o = opt;
  o.kappa = kappa;
  return std::make_shared<RecoveryGapNorm>(std::move(recovery), C, B, o);
}

SparseAttackResult attack_sparse_recovery(RecoveryOraclePtr recovery, std::uint64_t seed,
                                          const SparseAttackOptions& opt,
                                          const AlignmentProbe& probe) {
  const double C = recovery->C();
  const int k = recovery->k();
  const int n = recovery->ambient_dim() - (k - 1);
  const long start = recovery->queries_used();
  const long reserve = static_cast<long>(opt.extract_samples) * (opt.probes + 1);
  if (opt.budget <= reserve) throw std::invalid_argument("attack_sparse_recovery: budget below the extraction reserve");

  RecoveryGapNormOptions fo;
  fo.kappa = opt.kappa;
  fo.probes = opt.probes;
  fo.seed = stream(seed, Stream::kOracle).bits();
  const double B = opt.gamma * opt.gamma * n;
  auto f = build_recovery_gapnorm(recovery, C, opt.kappa, B, fo);

  AttackConfig cfg = opt.attack;
  cfg.n = n;
  cfg.B = B;
  cfg.seed = seed;
  cfg.blocks = 1;
  cfg.max_queries = opt.budget - reserve;

  SparseAttackResult out;
  try {
    out.attack = run_attack(*f, cfg, probe);
  } catch (const ReductionPreconditionError& e) {
    out.outcome = std::string("precondition: ") + e.what();
    out.recovery_queries = recovery->queries_used() - start;
    return out;
  }
  if (!out.attack.certificate) {
    out.outcome = "exhausted";
    out.recovery_queries = recovery->queries_used() - start;
    return out;
  }
  const auto& cert = *out.attack.certificate;
  f->adapt(cert.subspace_v);
  out.outcome = "certificate-without-violation";
  Rng g = stream(seed, Stream::kExtract);
  ComplementGaussianSpec spec{cert.subspace_v, cert.sigma_sq, cert.noise_var};
  auto s = f->s_set();
  auto try_candidate = [&](const Vec& y) {
    const Vec z = recovery->query(y);
    RecoveryViolation v{y, z, k, C, (z - y).norm(), C * tail_norm(y, k)};
    if (v.lhs > v.rhs && recovery_violation_holds(v)) out.violation = std::move(v);
    return out.violation.has_value();
  };
  for (int t = 0; t < opt.extract_samples && !out.violation; ++t) {
    if (recovery->queries_used() - start >= opt.budget) break;
    const Vec x = sample_complement(spec, g);
    if (try_candidate(f->pad(x))) break;
    const size_t want = opt.probes > 0 ? std::min<size_t>(opt.probes, s.size()) : s.size();
    for (size_t j = 0; j < want; ++j) std::swap(s[j], s[j + g.below(s.size() - j)]);
    for (size_t j = 0; j < want; ++j) {
      if (try_candidate(f->probe_vector(x, s[j]))) break;
    }
  }
  if (out.violation) out.outcome = "violation";
  out.recovery_queries = recovery->queries_used() - start;
  return out;
}

}  // namespace sketchbreak
