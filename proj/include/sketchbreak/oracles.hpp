#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sketchbreak/linalg.hpp"
#include "sketchbreak/rng.hpp"

namespace sketchbreak {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SketchOracle {
 public:
  explicit SketchOracle(int ambient_dim) : n_(ambient_dim) {}
  virtual ~SketchOracle() = default;
  SketchOracle(const SketchOracle&) = delete;
  SketchOracle& operator=(const SketchOracle&) = delete;

  int ambient_dim() const { return n_; }
  long queries_used() const { return queries_.load(); }

  // Ground truth for diagnostics. Never handed to the attack.
  virtual std::optional<Subspace> reveal_rowspace() const { return std::nullopt; }

 protected:
  void count(long k = 1) { queries_ += k; }
  void check_query(const Vec& x) const;

 private:
  int n_;
  std::atomic<long> queries_{0};
};

class BinaryOracle : public SketchOracle {
 public:
  using SketchOracle::SketchOracle;

  bool query(const Vec& x);
  // One answer per row.
  std::vector<std::uint8_t> query_batch(const Mat& rows);

  // Budget units spent so far and the most one query can spend; an oracle
  // built on another sketch counts that sketch's queries.
  virtual long cost() const { return queries_used(); }
  virtual long max_cost_per_query() const { return 1; }

  // Told the current V at the start of every round; f may depend on it.
  virtual void adapt(const Subspace&) {}

 protected:
  virtual bool answer(const Vec& x) = 0;
  virtual void answer_batch(const Mat& rows, std::vector<std::uint8_t>& out);
};

using BinaryOraclePtr = std::shared_ptr<BinaryOracle>;

struct GapNormCalibration {
  double low_error = 0.0;   // Pr[1] on N(0,1)^n
  double high_error = 0.0;  // Pr[0] on N(0,B)^n
  int probes = 0;
};

// Answers 1 iff (n/r) ||A x||^2 >= threshold.
class GapNormOracle : public BinaryOracle {
 public:
  GapNormOracle(Mat rows, double threshold, double B);

  const Mat& sketch_rows() const { return a_; }
  double threshold() const { return threshold_; }
  double B() const { return B_; }
  double estimate(const Vec& x) const;
  std::optional<Subspace> reveal_rowspace() const override;

  GapNormCalibration calibrate(int probes, Rng& rng) const;

 protected:
  bool answer(const Vec& x) override;
  void answer_batch(const Mat& rows, std::vector<std::uint8_t>& out) override;

 private:
  Mat a_;
  double threshold_;
  double B_;
  double scale_;
};

struct GapNormOptions {
  int calibration_probes = 10000;
  // construction fails when either calibrated error exceeds this
  double max_error = 1e-2;
};

std::shared_ptr<GapNormOracle> make_gapnorm_oracle(int n, int r, double B, Rng& rng,
                                                   const GapNormOptions& opt = {});
// r = n: the sketch sees the whole vector.
std::shared_ptr<GapNormOracle> make_fullspace_oracle(int n, double B);

class ConstantOracle : public BinaryOracle {
 public:
  ConstantOracle(int n, bool value) : BinaryOracle(n), value_(value) {}
  std::optional<Subspace> reveal_rowspace() const override { return Subspace(ambient_dim()); }

 protected:
  bool answer(const Vec&) override { return value_; }

 private:
  bool value_;
};

// Flips each answer with probability `noise` using oracle-owned randomness.
class RandomizedOracle : public BinaryOracle {
 public:
  RandomizedOracle(BinaryOraclePtr inner, double noise, Rng rng);
  std::optional<Subspace> reveal_rowspace() const override { return inner_->reveal_rowspace(); }
  const BinaryOraclePtr& inner() const { return inner_; }

 protected:
  bool answer(const Vec& x) override;
  void answer_batch(const Mat& rows, std::vector<std::uint8_t>& out) override;

 private:
  BinaryOraclePtr inner_;
  double noise_;
  std::mutex mu_;
  Rng rng_;
};

BinaryOraclePtr wrap_randomized(BinaryOraclePtr oracle, double answer_noise, Rng rng);

// Majority of the inner oracle over q consecutive blocks of length n.
class MajorityOracle : public BinaryOracle {
 public:
  MajorityOracle(BinaryOraclePtr inner, int q);
  int q() const { return q_; }
  int block_dim() const { return inner_->ambient_dim(); }
  const BinaryOraclePtr& inner() const { return inner_; }
  std::optional<Subspace> reveal_rowspace() const override;

 protected:
  bool answer(const Vec& x) override;
  void answer_batch(const Mat& rows, std::vector<std::uint8_t>& out) override;

 private:
  BinaryOraclePtr inner_;
  int q_;
};

std::shared_ptr<MajorityOracle> amplify_majority(BinaryOraclePtr oracle, int q);

// Real-valued estimate Z(x) of ||x||_p read off A x.
class NormEstimator : public SketchOracle {
 public:
  using SketchOracle::SketchOracle;
  double query(const Vec& x);
  std::vector<double> query_batch(const Mat& rows);

 protected:
  virtual double estimate(const Vec& x) const = 0;
};

using NormEstimatorPtr = std::shared_ptr<NormEstimator>;

double lp_norm(const Vec& x, double p);

class LpOracle : public NormEstimator {
 public:
  LpOracle(Mat rows, double p, double C, double scale);
  double p() const { return p_; }
  double C() const { return C_; }
  double scale() const { return scale_; }
  std::optional<Subspace> reveal_rowspace() const override;
  // fraction of fresh N(0,1)^n inputs inside the bracket
  double calibrated_coverage(int probes, Rng& rng) const;

 protected:
  double estimate(const Vec& x) const override;

 private:
  Mat a_;
  double p_;
  double C_;
  double scale_;
  double dim_factor_;
};

struct LpOptions {
  int calibration_probes = 10000;
  double min_coverage = 0.99;
};

std::shared_ptr<LpOracle> make_lp_oracle(int n, int r, double p, double C, Rng& rng,
                                         const LpOptions& opt = {});

class RecoveryOracle : public SketchOracle {
 public:
  using SketchOracle::SketchOracle;
  Vec query(const Vec& x);
  virtual int k() const = 0;
  virtual double C() const = 0;

 protected:
  virtual Vec recover(const Vec& x) = 0;
};

using RecoveryOraclePtr = std::shared_ptr<RecoveryOracle>;

// Count-sketch: `depth` rows of `width` signed buckets; the recovery keeps the
// k largest median estimates.
class CountSketchRecovery : public RecoveryOracle {
 public:
  CountSketchRecovery(int n, int depth, int width, int k, double C, Rng& rng);

  int k() const override { return k_; }
  double C() const override { return C_; }
  int depth() const { return depth_; }
  int width() const { return width_; }
  const Mat& sketch_rows() const { return a_; }
  std::optional<Subspace> reveal_rowspace() const override;

  Vec sketch(const Vec& x) const;
  Vec recover_from_sketch(const Vec& y) const;

 protected:
  Vec recover(const Vec& x) override { return recover_from_sketch(sketch(x)); }

 private:
  int depth_;
  int width_;
  int k_;
  double C_;
  std::vector<int> bucket_;  // depth x n
  std::vector<int> sign_;
  Mat a_;
};

struct RecoveryOptions {
  int depth = 3;
  int calibration_trials = 1000;
  double min_success = 0.99;
};

double tail_norm(const Vec& x, int k);

std::shared_ptr<CountSketchRecovery> make_countsketch_recovery_oracle(
    int n, int r, int k, double C, Rng& rng, const RecoveryOptions& opt = {});

// Fraction of fresh N(0,1)^n + spike * e_idx inputs meeting the l2/l2 guarantee.
double recovery_success_rate(RecoveryOracle& oracle, double spike, int idx, int trials, Rng& rng);

// Newline-delimited JSON over a child process's stdin/stdout.
class ProcessChannel {
 public:
  explicit ProcessChannel(const std::vector<std::string>& argv);
  ~ProcessChannel();
  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;

  std::string roundtrip(const std::string& line);

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::mutex mu_;
};

class ProcessOracle : public BinaryOracle {
 public:
  ProcessOracle(int n, const std::vector<std::string>& argv);

 protected:
  bool answer(const Vec& x) override;

 private:
  ProcessChannel channel_;
};

class ProcessRecoveryOracle : public RecoveryOracle {
 public:
  ProcessRecoveryOracle(int n, int k, double C, const std::vector<std::string>& argv);
  int k() const override { return k_; }
  double C() const override { return C_; }

 protected:
  Vec recover(const Vec& x) override;

 private:
  int k_;
  double C_;
  ProcessChannel channel_;
};

std::vector<std::string> split_command(const std::string& cmd);

}  // namespace sketchbreak
