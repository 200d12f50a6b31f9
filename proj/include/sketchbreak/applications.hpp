#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sketchbreak/attack.hpp"
#include "sketchbreak/oracles.hpp"

namespace sketchbreak {

enum class LpSide { kUnderEstimate, kOverEstimate };
const char* to_string(LpSide s);

struct LpViolation {
  Vec x;
  double z_value = 0.0;
  double p = 2.0;
  double C = 4.0;
  LpSide side = LpSide::kUnderEstimate;
};

// Recomputes ||x||_p and checks the claimed side of the bracket.
bool lp_violation_holds(const LpViolation& v);

// f(x) = [Z(x) >= threshold], the binary problem handed to the attack.
class ThresholdedEstimator : public BinaryOracle {
 public:
  ThresholdedEstimator(NormEstimatorPtr estimator, double threshold);
  double threshold() const { return threshold_; }
  std::optional<Subspace> reveal_rowspace() const override { return est_->reveal_rowspace(); }

 protected:
  bool answer(const Vec& x) override;

 private:
  NormEstimatorPtr est_;
  double threshold_;
};

// Threshold between C * ||x||_p at sigma^2 = 2 and ||x||_p at sigma^2 = B/2
// for typical inputs of G(V^perp, sigma^2).
double lp_threshold(int n, double p, double C, double B, double noise_var = 0.25);

struct LpAttackOptions {
  AttackConfig attack;  // n, seed and budget are filled in by attack_lp
  double B_factor = 8.0;  // B = B_factor * C^2
  int extract_samples = 2000;
};

struct LpAttackResult {
  std::optional<LpViolation> violation;
  AttackResult attack;
  long queries = 0;
  std::string outcome;
};

LpAttackResult attack_lp(NormEstimatorPtr oracle, double C, double p, long budget,
                         std::uint64_t seed, const LpAttackOptions& opt = {},
                         const AlignmentProbe& probe = nullptr);

struct RecoveryViolation {
  Vec x;
  Vec x_prime;
  int k = 1;
  double C = 4.0;
  double lhs = 0.0;
  double rhs = 0.0;
};

bool recovery_violation_holds(const RecoveryViolation& v);

class ReductionPreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RecoveryGapNormOptions {
  double kappa = 0.1;
  int probes = 32;  // indices of S probed per evaluation; 0 probes all of S
  std::uint64_t seed = 0;
  // k - 1 coordinates appended with this value; 0 picks 1e6 * C * sqrt(n)
  double pad_value = 0.0;
};

// The GapNorm decider built from a sparse-recovery sketch. The first n
// coordinates carry the attack; any k - 1 trailing ones are fixed padding.
class RecoveryGapNorm : public BinaryOracle {
 public:
  RecoveryGapNorm(RecoveryOraclePtr recovery, double C, double B,
                  const RecoveryGapNormOptions& opt);

  void adapt(const Subspace& v) override;
  const std::vector<int>& s_set() const { return s_; }
  double C() const { return C_; }
  double B() const { return B_; }
  double probe_scale() const;
  const RecoveryOraclePtr& recovery() const { return recovery_; }
  std::optional<Subspace> reveal_rowspace() const override;

  // Probe vector y^i = x + 4 C sqrt(n) P_{V^perp} e_i, padded to the oracle's dimension.
  Vec probe_vector(const Vec& x, int i) const;
  Vec pad(const Vec& x) const;
  int padding() const { return pad_; }
  long cost() const override { return recovery_->queries_used(); }
  long max_cost_per_query() const override;

 protected:
  bool answer(const Vec& x) override;

 private:
  RecoveryOraclePtr recovery_;
  double C_;
  double B_;
  RecoveryGapNormOptions opt_;
  int pad_;
  double pad_value_;
  Subspace v_;
  std::vector<int> s_;
  std::mutex mu_;
  Rng rng_;
};

std::shared_ptr<RecoveryGapNorm> build_recovery_gapnorm(RecoveryOraclePtr recovery, double C,
                                                        double kappa, double B,
                                                        const RecoveryGapNormOptions& opt = {});

// Indices i with (P_{V^perp})_ii >= threshold.
std::vector<int> diagonal_set(const Subspace& v, double threshold);

struct SparseAttackOptions {
  AttackConfig attack;  // n, B, seed, budget are filled in
  double kappa = 0.1;
  double gamma = 2.0;  // B = gamma^2 n
  int probes = 32;
  long budget = 1000000;  // recovery-oracle queries
  int extract_samples = 200;
};

struct SparseAttackResult {
  std::optional<RecoveryViolation> violation;
  AttackResult attack;
  long recovery_queries = 0;
  std::string outcome;
};

SparseAttackResult attack_sparse_recovery(RecoveryOraclePtr recovery, std::uint64_t seed,
                                          const SparseAttackOptions& opt = {},
                                          const AlignmentProbe& probe = nullptr);

}  // namespace sketchbreak
