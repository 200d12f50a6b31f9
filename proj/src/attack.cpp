#include "sketchbreak/attack.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sketchbreak/stats.hpp"

namespace sketchbreak {

const char* to_string(Branch b) {
  return b == Branch::kHighNormRejected ? "high-norm-rejected" : "low-norm-accepted";
}

double AttackConfig::delta() const {
  if (delta_gain > 0) return delta_gain;
  return delta_multiplier / (7.0 * B * r_bound);
}

std::vector<double> AttackConfig::grid() const {
  std::vector<double> s(grid_points);
  const double lo = 0.75;
  for (int i = 0; i < grid_points; ++i) s[i] = lo + (B - lo) * i / (grid_points - 1);
  return s;
}

void AttackConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("attack config: " + field + " " + why);
  };
  if (!(B >= 8)) fail("B", "must be >= 8");
  if (n < 1) fail("n", "must be positive");
  if (r_bound < 1) fail("r_bound", "must be positive");
  if (m < 100) fail("m", "must be >= 100");
  if (!(epsilon > 0 && epsilon < 1)) fail("epsilon", "must lie in (0, 1)");
  if (grid_points < 2 || grid_points > 4096) fail("grid_points", "must lie in [2, 4096]");
  if (!(delta() > 0)) fail("delta_gain", "must be > 0");
  if (!(min_positive_fraction >= 0 && min_positive_fraction < 1)) fail("min_positive_fraction", "must lie in [0, 1)");
  if (max_rounds < 0) fail("max_rounds", "must be >= 0");
  if (!(noise_var > 0)) fail("noise_var", "must be > 0");
  if (verify_samples < 100) fail("verify_samples", "must be >= 100");
  if (!(verify_level > 0 && verify_level < 1)) fail("verify_level", "must lie in (0, 1)");
  if (blocks < 1 || blocks % 2 == 0) fail("blocks", "must be odd and >= 1");
  if (max_queries < 0) fail("max_queries", "must be >= 0");
}

LabelRate estimate_label_rate(BinaryOracle& oracle, const ComplementGaussianSpec& spec, int m,
                              Rng& g1_stream, Rng& g2_stream) {
  if (m < 1) throw std::invalid_argument("estimate_label_rate: m must be >= 1");
  if (spec.ambient_dim() != oracle.ambient_dim()) throw std::invalid_argument("estimate_label_rate: dimension mismatch");
  Mat x = sample_complement_batch(spec, m, g1_stream, g2_stream);
  auto ans = oracle.query_batch(x);
  long ones = 0;
  for (auto a : ans) ones += a;
  LabelRate out;
  out.rate = static_cast<double>(ones) / m;
  out.positives.resize(ones, x.cols());
  long k = 0;
  for (int i = 0; i < m; ++i) {
    if (ans[i]) out.positives.row(k++) = x.row(i);
  }
  return out;
}

LabelRate estimate_label_rate(BinaryOracle& oracle, const ComplementGaussianSpec& spec, int m,
                              Rng& rng) {
  return estimate_label_rate(oracle, spec, m, rng, rng);
}

std::optional<Branch> check_certificate_condition(double rate, double sigma_sq, double B,
                                                  double epsilon) {
  if (rate < 0 || rate > 1) throw std::invalid_argument("check_certificate_condition: rate outside [0,1]");
  if (sigma_sq >= B / 2 && rate <= 1 - epsilon) return Branch::kHighNormRejected;
  if (sigma_sq <= 2 && rate >= epsilon) return Branch::kLowNormAccepted;
  return std::nullopt;
}

namespace {

// Rayleigh-quotient stagnation for the boosting eigenvectors
constexpr double kBoostTol = 1e-9;

BoostResult boost_impl(const Mat& positives, double sigma_sq, double delta_gain,
                       const BoostOptions& opt, int group) {
  if (positives.rows() == 0) throw std::invalid_argument("boost_direction: no positives");
  BoostResult out;
  const double base = sigma_sq + opt.noise_var;
  const auto all = top_singular_vector(positives, kBoostTol);
  out.objective = all.objective;
  if (opt.rule == AcceptanceRule::kObjective) {
    out.threshold = base + delta_gain;
    if (out.objective >= out.threshold) out.direction = all.u;
    return out;
  }
  // rows of one query stay on the same side of the split
  const Eigen::Index groups = positives.rows() / group;
  const Eigen::Index fit = (groups / 2) * group;
  const Eigen::Index test = positives.rows() - fit;
  if (fit < 2 || test < 2) return out;
  const auto half = top_singular_vector(positives.topRows(fit), kBoostTol);
  const Vec y = (positives.bottomRows(test) * half.u).array().square();
  out.test_mean = y.mean();
  const double var = (y.array() - out.test_mean).square().sum() / static_cast<double>(test - 1);
  out.test_se = std::sqrt(var / static_cast<double>(test));
  out.threshold = base + delta_gain + opt.z * out.test_se;
  if (out.test_mean >= out.threshold) out.direction = all.u;
  return out;
}

Mat pool_blocks(const Mat& rows, int q) {
  if (q == 1) return rows;
  const auto n = rows.cols() / q;
  Mat out(rows.rows() * q, n);
  for (Eigen::Index j = 0; j < rows.rows(); ++j) {
    for (int i = 0; i < q; ++i) out.row(j * q + i) = rows.block(j, i * n, 1, n);
  }
  return out;
}

}  // namespace

BoostResult boost_direction(const Mat& positives, double sigma_sq, double delta_gain,
                            const BoostOptions& opt) {
  return boost_impl(positives, sigma_sq, delta_gain, opt, 1);
}

std::optional<Vec> boost_direction(const Mat& positives, double sigma_sq, double delta_gain) {
  return boost_direction(positives, sigma_sq, delta_gain, BoostOptions{}).direction;
}

AlignmentProbe alignment_probe(const Subspace& rowspace) {
  return [rowspace](const Vec& v) { return project(v, rowspace).squaredNorm() / v.squaredNorm(); };
}

Subspace block_diagonal(const Subspace& v, int q) {
  if (q == 1) return v;
  const int n = v.ambient_dim();
  const int t = v.dim();
  Mat b = Mat::Zero(n * q, t * q);
  for (int i = 0; i < q; ++i) b.block(i * n, i * t, n, t) = v.basis();
  return Subspace::from_orthonormal(std::move(b));
}

VerifyResult verify_certificate(const FailureCertificate& cert, BinaryOracle& oracle, int samples,
                                Rng& rng, double level) {
  if (samples < 100) throw std::invalid_argument("verify_certificate: samples must be >= 100");
  ComplementGaussianSpec spec{cert.subspace_v, cert.sigma_sq, cert.noise_var};
  oracle.adapt(cert.subspace_v);
  Mat x = sample_complement_batch(spec, samples, rng, rng);
  auto ans = oracle.query_batch(x);
  long ones = 0;
  for (auto a : ans) ones += a;
  VerifyResult out;
  out.empirical_rate = static_cast<double>(ones) / samples;
  auto ci = binomial_interval(ones, samples, level);
  out.lo = ci.lo;
  out.hi = ci.hi;
  if (cert.branch == Branch::kHighNormRejected) {
    out.violated = ci.hi < 1.0 - cert.tolerance;
  } else {
    out.violated = ci.lo > cert.tolerance;
  }
  return out;
}

AttackResult run_attack(BinaryOracle& oracle, const AttackConfig& cfg, const AlignmentProbe& probe) {
  cfg.validate();
  const int q = cfg.blocks;
  const int n = cfg.n;
  if (oracle.ambient_dim() != n * q) {
    throw std::invalid_argument("run_attack: oracle dimension " + std::to_string(oracle.ambient_dim()) +
                                " does not match n * blocks = " + std::to_string(n * q));
  }
  Rng g1 = stream(cfg.seed, Stream::kQueryG1);
  Rng g2 = stream(cfg.seed, Stream::kQueryG2);
  Rng verify = stream(cfg.seed, Stream::kVerify);
  const auto grid = cfg.grid();
  const double delta = cfg.delta();
  const long min_positives = std::max<long>(2, static_cast<long>(std::ceil(cfg.min_positive_fraction * cfg.m)));
  const bool strong = cfg.epsilon >= 1.0 / 3.0 - 1e-12;

  AttackResult res;
  Subspace v(n);
  const long cost_start = oracle.cost();
  for (int t = 1; t <= cfg.rounds(); ++t) {
    res.rounds = t;
    const Subspace w = block_diagonal(v, q);
    oracle.adapt(w);
    std::optional<Vec> first;
    Mat pooled_moment = Mat::Zero(n, n);
    long pooled_rows = 0;
    RoundRecord round;
    round.t = t;
    for (size_t c = 0; c < grid.size(); ++c) {
      const double s2 = grid[c];
      const long spent = oracle.cost() - cost_start;
      if (cfg.max_queries > 0 && spent + cfg.m * oracle.max_cost_per_query() > cfg.max_queries) {
        res.round_log.push_back(round);
        res.exhausted = true;
        res.final_v = v;
        return res;
      }
      CellRecord cell;
      cell.t = t;
      cell.sigma_sq = s2;
      ComplementGaussianSpec spec{w, s2, cfg.noise_var};
      auto lr = estimate_label_rate(oracle, spec, cfg.m, g1, g2);
      res.queries += cfg.m;
      cell.rate = lr.rate;
      cell.m_prime = lr.positives.rows();

      if (auto branch = check_certificate_condition(lr.rate, s2, cfg.B, cfg.epsilon)) {
        FailureCertificate cert;
        cert.subspace_v = w;
        cert.sigma_sq = s2;
        cert.branch = *branch;
        cert.strong = strong;
        cert.tolerance = cfg.epsilon;
        cert.noise_var = cfg.noise_var;
        cert.B = cfg.B;
        auto vr = verify_certificate(cert, oracle, cfg.verify_samples, verify, cfg.verify_level);
        res.queries += cfg.verify_samples;
        cell.certificate = branch;
        cell.verified_rate = vr.empirical_rate;
        if (vr.violated) {
          cert.empirical_rate = vr.empirical_rate;
          cert.verify_samples = cfg.verify_samples;
          res.trace.push_back(cell);
          res.round_log.push_back(round);
          res.certificate = std::move(cert);
          res.final_v = v;
          return res;
        }
      }

      if (cell.m_prime >= min_positives) {
        const Mat pooled = pool_blocks(lr.positives, q);
        BoostOptions opt{cfg.rule, cfg.z, cfg.noise_var};
        auto br = boost_impl(pooled, s2, delta, opt, q);
        cell.objective = br.objective;
        if (br.direction) {
          const double resid = (*br.direction - project(*br.direction, v)).norm();
          if (resid > kDegeneracyThreshold) {
            cell.accepted = true;
            ++round.accepting_cells;
            if (!first) first = *br.direction;
            if (cfg.pool_accepting_cells) {
              pooled_moment.noalias() += pooled.transpose() * pooled / (s2 + cfg.noise_var);
              pooled_rows += pooled.rows();
            }
          }
          if (probe) cell.proj_onto_a = probe(*br.direction);
        }
      }
      res.trace.push_back(cell);
    }

    if (first) {
      Vec vstar = *first;
      if (cfg.pool_accepting_cells && pooled_rows > 0) {
        vstar = top_eigenvector(pooled_moment / static_cast<double>(pooled_rows), kBoostTol).u;
      }
      try {
        v = extend_orthonormal(v, vstar);
        round.grew = true;
        if (probe) {
          round.alignment = probe(v.basis().col(v.dim() - 1));
          res.accepted_alignment.push_back(*round.alignment);
        }
      } catch (const DegenerateDirection&) {
      }
    }
    res.round_log.push_back(round);
  }
  res.exhausted = true;
  res.final_v = v;
  return res;
}

FailureCertificate extract_strong_certificate(const FailureCertificate& product_cert, int q,
                                              Rng& rng) {
  if (q < 1) throw std::invalid_argument("extract_strong_certificate: q must be >= 1");
  const int qn = product_cert.subspace_v.ambient_dim();
  if (qn % q != 0) throw BlockDecompositionError("ambient dimension not divisible by q");
  const int n = qn / q;
  const Mat p = product_cert.subspace_v.projector();
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      if (i == j) continue;
      const double off = p.block(i * n, j * n, n, n).norm();
      if (off > 1e-8) {
        std::ostringstream os;
        os << "W does not split along the blocks: ||P_W[" << i << "," << j << "]|| = " << off;
        throw BlockDecompositionError(os.str());
      }
    }
  }
  const int i = q == 1 ? 0 : static_cast<int>(rng.below(q));
  // W^perp cap U_i is the complement of V_i inside block i
  Eigen::SelfAdjointEigenSolver<Mat> es(p.block(i * n, i * n, n, n));
  Mat cols(n, 0);
  for (int k = 0; k < n; ++k) {
    if (es.eigenvalues()(k) > 0.5) {
      cols.conservativeResize(Eigen::NoChange, cols.cols() + 1);
      cols.col(cols.cols() - 1) = es.eigenvectors().col(k);
    }
  }
  FailureCertificate out = product_cert;
  out.subspace_v = Subspace::span(cols);
  out.strong = true;
  out.tolerance = 1.0 / 3.0;
  out.empirical_rate = 0.0;
  out.verify_samples = 0;
  return out;
}

}  // namespace sketchbreak
