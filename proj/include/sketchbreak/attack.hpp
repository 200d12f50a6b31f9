#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sketchbreak/distributions.hpp"
#include "sketchbreak/linalg.hpp"
#include "sketchbreak/oracles.hpp"
#include "sketchbreak/rng.hpp"

namespace sketchbreak {

enum class Branch { kHighNormRejected, kLowNormAccepted };
const char* to_string(Branch b);

enum class AcceptanceRule {
  kObjective,  // objective >= sigma^2 + noise + delta on the fitting sample
  kHeldOut,    // fit on half the positives, test the gain on the other half
};

struct AttackConfig {
  double B = 8.0;
  int n = 64;
  int r_bound = 16;
  int m = 4000;
  // certificate tolerance; 1/3 asks for constant error (strong certificates)
  double epsilon = 1.0 / 3.0;
  int grid_points = 32;
  // 0 means 1/(7 B r_bound), scaled by delta_multiplier
  double delta_gain = 0.0;
  double delta_multiplier = 1.0;
  double min_positive_fraction = 0.02;
  int max_rounds = 0;  // 0 means r_bound + 1
  std::uint64_t seed = 1;
  double noise_var = 0.25;
  AcceptanceRule rule = AcceptanceRule::kHeldOut;
  double z = 3.0;
  // refine the round's direction on the whitened positives of all accepting cells
  bool pool_accepting_cells = true;
  int verify_samples = 4000;
  double verify_level = 0.99;
  // the oracle reads q blocks of length n; V is grown once and used in every block
  int blocks = 1;
  // stop with Exhausted before a cell could push oracle.cost() past this; 0 means no limit
  long max_queries = 0;

  double delta() const;
  int rounds() const { return max_rounds > 0 ? max_rounds : r_bound + 1; }
  std::vector<double> grid() const;
  void validate() const;
};

struct FailureCertificate {
  Subspace subspace_v;
  double sigma_sq = 0.0;
  Branch branch = Branch::kHighNormRejected;
  bool strong = false;
  double tolerance = 1.0 / 3.0;  // rate thresholds are 1 - tolerance / tolerance
  double noise_var = 0.25;
  double empirical_rate = 0.0;
  int verify_samples = 0;
  double B = 8.0;
};

struct LabelRate {
  double rate = 0.0;
  Mat positives;  // rows
};

LabelRate estimate_label_rate(BinaryOracle& oracle, const ComplementGaussianSpec& spec, int m,
                              Rng& rng);
LabelRate estimate_label_rate(BinaryOracle& oracle, const ComplementGaussianSpec& spec, int m,
                              Rng& g1_stream, Rng& g2_stream);

std::optional<Branch> check_certificate_condition(double rate, double sigma_sq, double B,
                                                  double epsilon);

struct BoostOptions {
  AcceptanceRule rule = AcceptanceRule::kHeldOut;
  double z = 3.0;
  double noise_var = 0.25;
};

struct BoostResult {
  std::optional<Vec> direction;
  double objective = 0.0;   // z(v_sigma) on all positives
  double test_mean = 0.0;   // mean of <v, g>^2 on the held-out half (held-out rule)
  double test_se = 0.0;
  double threshold = 0.0;   // sigma^2 + noise + delta (+ z * se)
};

BoostResult boost_direction(const Mat& positives, double sigma_sq, double delta_gain,
                            const BoostOptions& opt);
std::optional<Vec> boost_direction(const Mat& positives, double sigma_sq, double delta_gain);

struct CellRecord {
  int t = 0;
  double sigma_sq = 0.0;
  double rate = 0.0;
  long m_prime = 0;
  std::optional<double> objective;
  bool accepted = false;
  std::optional<double> proj_onto_a;
  std::optional<Branch> certificate;
  std::optional<double> verified_rate;
};

struct RoundRecord {
  int t = 0;
  int accepting_cells = 0;
  bool grew = false;
  std::optional<double> alignment;  // ||P_A v_t||^2, diagnostics only
};

struct AttackResult {
  std::optional<FailureCertificate> certificate;
  bool exhausted = false;
  int rounds = 0;
  long queries = 0;
  Subspace final_v;
  std::vector<CellRecord> trace;
  std::vector<RoundRecord> round_log;
  std::vector<double> accepted_alignment;
};

// Ground-truth probe ||P_A v||^2 of a block-level direction; diagnostics only.
using AlignmentProbe = std::function<double(const Vec&)>;
AlignmentProbe alignment_probe(const Subspace& rowspace);

AttackResult run_attack(BinaryOracle& oracle, const AttackConfig& cfg,
                        const AlignmentProbe& probe = nullptr);

struct VerifyResult {
  double empirical_rate = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  bool violated = false;
};

VerifyResult verify_certificate(const FailureCertificate& cert, BinaryOracle& oracle, int samples,
                                Rng& rng, double level = 0.99);

class BlockDecompositionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The q-block subspace (+)V as one subspace of R^{qn}.
Subspace block_diagonal(const Subspace& v, int q);

FailureCertificate extract_strong_certificate(const FailureCertificate& product_cert, int q,
                                              Rng& rng);

}  // namespace sketchbreak
