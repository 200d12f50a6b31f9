#include "sketchbreak/oracles.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace sketchbreak {

void SketchOracle::check_query(const Vec& x) const {
  if (x.size() != n_) {
    throw std::invalid_argument("oracle: query of dimension " + std::to_string(x.size()) +
                                ", expected " + std::to_string(n_));
  }
}

bool BinaryOracle::query(const Vec& x) {
  check_query(x);
  count();
  return answer(x);
}

std::vector<std::uint8_t> BinaryOracle::query_batch(const Mat& rows) {
  if (rows.cols() != ambient_dim()) throw std::invalid_argument("oracle: batch dimension mismatch");
  count(rows.rows());
  std::vector<std::uint8_t> out(rows.rows());
  answer_batch(rows, out);
  return out;
}

void BinaryOracle::answer_batch(const Mat& rows, std::vector<std::uint8_t>& out) {
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out[i] = answer(rows.row(i).transpose());
}

namespace {

Mat random_orthonormal_rows(int n, int r, Rng& rng) {
  Mat g(n, r);
  rng.fill_normal(g, 1.0 / std::sqrt(static_cast<double>(n)));
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(n, r);
  return q.transpose();
}

}  // namespace

GapNormOracle::GapNormOracle(Mat rows, double threshold, double B)
    : BinaryOracle(static_cast<int>(rows.cols())),
      a_(std::move(rows)),
      threshold_(threshold),
      B_(B),
      scale_(static_cast<double>(a_.cols()) / static_cast<double>(a_.rows())) {}

double GapNormOracle::estimate(const Vec& x) const { return scale_ * (a_ * x).squaredNorm(); }

bool GapNormOracle::answer(const Vec& x) { return estimate(x) >= threshold_; }

void GapNormOracle::answer_batch(const Mat& rows, std::vector<std::uint8_t>& out) {
  const Vec est = scale_ * (rows * a_.transpose()).rowwise().squaredNorm();
  for (Eigen::Index i = 0; i < est.size(); ++i) out[i] = est(i) >= threshold_;
}

std::optional<Subspace> GapNormOracle::reveal_rowspace() const {
  return Subspace::span(a_.transpose());
}

GapNormCalibration GapNormOracle::calibrate(int probes, Rng& rng) const {
  const int n = ambient_dim();
  Mat x(probes, n);
  GapNormCalibration c;
  c.probes = probes;
  rng.fill_normal(x, 1.0);
  Vec est = scale_ * (x * a_.transpose()).rowwise().squaredNorm();
  c.low_error = static_cast<double>((est.array() >= threshold_).count()) / probes;
  rng.fill_normal(x, std::sqrt(B_));
  est = scale_ * (x * a_.transpose()).rowwise().squaredNorm();
  c.high_error = static_cast<double>((est.array() < threshold_).count()) / probes;
  return c;
}

std::shared_ptr<GapNormOracle> make_gapnorm_oracle(int n, int r, double B, Rng& rng,
                                                   const GapNormOptions& opt) {
  if (n <= 0 || r <= 0 || r >= n) throw std::invalid_argument("make_gapnorm_oracle: need 0 < r < n");
  if (B < 8) throw std::invalid_argument("make_gapnorm_oracle: need B >= 8");
  auto rows = random_orthonormal_rows(n, r, rng);
  auto oracle = std::make_shared<GapNormOracle>(std::move(rows), std::sqrt(B) * n, B);
  if (opt.calibration_probes > 0) {
    Rng cal = rng.split(static_cast<std::uint64_t>(Stream::kCalibration));
    auto c = oracle->calibrate(opt.calibration_probes, cal);
    if (c.low_error > opt.max_error || c.high_error > opt.max_error) {
      std::ostringstream os;
      os << "GapNorm calibration missed target " << opt.max_error << ": low error " << c.low_error
         << ", high error " << c.high_error;
      throw CalibrationError(os.str());
    }
  }
  return oracle;
}

std::shared_ptr<GapNormOracle> make_fullspace_oracle(int n, double B) {
  return std::make_shared<GapNormOracle>(Mat::Identity(n, n), std::sqrt(B) * n, B);
}

RandomizedOracle::RandomizedOracle(BinaryOraclePtr inner, double noise, Rng rng)
    : BinaryOracle(inner->ambient_dim()), inner_(std::move(inner)), noise_(noise), rng_(rng) {
  if (!(noise_ >= 0 && noise_ < 0.5)) throw std::invalid_argument("wrap_randomized: noise must lie in [0, 1/2)");
}

bool RandomizedOracle::answer(const Vec& x) {
  bool a = inner_->query(x);
  if (noise_ == 0) return a;
  std::lock_guard lock(mu_);
  return rng_.bernoulli(noise_) ? !a : a;
}

void RandomizedOracle::answer_batch(const Mat& rows, std::vector<std::uint8_t>& out) {
  out = inner_->query_batch(rows);
  if (noise_ == 0) return;
  std::lock_guard lock(mu_);
  for (auto& a : out) {
    if (rng_.bernoulli(noise_)) a = !a;
  }
}

BinaryOraclePtr wrap_randomized(BinaryOraclePtr oracle, double answer_noise, Rng rng) {
  return std::make_shared<RandomizedOracle>(std::move(oracle), answer_noise, rng);
}

MajorityOracle::MajorityOracle(BinaryOraclePtr inner, int q)
    : BinaryOracle(inner->ambient_dim() * q), inner_(std::move(inner)), q_(q) {
  if (q < 1 || q % 2 == 0) throw std::invalid_argument("amplify_majority: q must be odd and >= 1");
}

bool MajorityOracle::answer(const Vec& x) {
  const int n = block_dim();
  int ones = 0;
  for (int i = 0; i < q_; ++i) ones += inner_->query(x.segment(i * n, n));
  return 2 * ones > q_;
}

void MajorityOracle::answer_batch(const Mat& rows, std::vector<std::uint8_t>& out) {
  const int n = block_dim();
  const auto m = rows.rows();
  // stack the blocks so the inner oracle sees one batch
  Mat blocks(m * q_, n);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (int i = 0; i < q_; ++i) blocks.row(j * q_ + i) = rows.block(j, i * n, 1, n);
  }
  auto inner = inner_->query_batch(blocks);
  for (Eigen::Index j = 0; j < m; ++j) {
    int ones = 0;
    for (int i = 0; i < q_; ++i) ones += inner[j * q_ + i];
    out[j] = 2 * ones > q_;
  }
}

std::optional<Subspace> MajorityOracle::reveal_rowspace() const {
  auto a = inner_->reveal_rowspace();
  if (!a) return std::nullopt;
  const int n = block_dim();
  Mat b = Mat::Zero(n * q_, a->dim() * q_);
  for (int i = 0; i < q_; ++i) b.block(i * n, i * a->dim(), n, a->dim()) = a->basis();
  return Subspace::from_orthonormal(std::move(b));
}

std::shared_ptr<MajorityOracle> amplify_majority(BinaryOraclePtr oracle, int q) {
  return std::make_shared<MajorityOracle>(std::move(oracle), q);
}

double NormEstimator::query(const Vec& x) {
  check_query(x);
  count();
  return estimate(x);
}

std::vector<double> NormEstimator::query_batch(const Mat& rows) {
  std::vector<double> out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out[i] = query(rows.row(i).transpose());
  return out;
}

double lp_norm(const Vec& x, double p) {
  if (std::isinf(p)) return x.cwiseAbs().maxCoeff();
  if (p == 2) return x.norm();
  return std::pow(x.cwiseAbs().array().pow(p).sum(), 1.0 / p);
}

LpOracle::LpOracle(Mat rows, double p, double C, double scale)
    : NormEstimator(static_cast<int>(rows.cols())), a_(std::move(rows)), p_(p), C_(C), scale_(scale) {
  const double n = static_cast<double>(a_.cols());
  dim_factor_ = std::sqrt(n / static_cast<double>(a_.rows()));
  // Gaussian inputs: ||x||_p scales like n^{1/p}, ||x||_2 like n^{1/2}
  if (std::isinf(p_)) {
    dim_factor_ *= std::sqrt(2.0 * std::log(n) / n);
  } else {
    dim_factor_ *= std::pow(n, 1.0 / p_ - 0.5);
  }
}

double LpOracle::estimate(const Vec& x) const { return scale_ * dim_factor_ * (a_ * x).norm(); }

std::optional<Subspace> LpOracle::reveal_rowspace() const { return Subspace::span(a_.transpose()); }

double LpOracle::calibrated_coverage(int probes, Rng& rng) const {
  const int n = ambient_dim();
  int inside = 0;
  Vec x(n);
  for (int i = 0; i < probes; ++i) {
    rng.fill_normal(x, 1.0);
    const double z = estimate(x);
    const double norm = lp_norm(x, p_);
    inside += z >= norm && z <= C_ * norm;
  }
  return static_cast<double>(inside) / probes;
}

std::shared_ptr<LpOracle> make_lp_oracle(int n, int r, double p, double C, Rng& rng,
                                         const LpOptions& opt) {
  if (!(p >= 1)) throw std::invalid_argument("make_lp_oracle: p must lie in [1, inf]");
  if (r <= 0 || r > n) throw std::invalid_argument("make_lp_oracle: need 0 < r <= n");
  if (!(C > 1)) throw std::invalid_argument("make_lp_oracle: C must exceed 1");
  Mat rows = r == n ? Mat::Identity(n, n) : random_orthonormal_rows(n, r, rng);
  auto raw = std::make_shared<LpOracle>(rows, p, C, 1.0);
  if (opt.calibration_probes <= 0) return std::make_shared<LpOracle>(rows, p, C, std::sqrt(C));
  // center the log ratio at the geometric middle of [1, C]
  Rng cal = rng.split(static_cast<std::uint64_t>(Stream::kCalibration));
  double mean_log = 0.0;
  Vec x(n);
  for (int i = 0; i < opt.calibration_probes; ++i) {
    cal.fill_normal(x, 1.0);
    mean_log += std::log(raw->query(x) / lp_norm(x, p));
  }
  mean_log /= opt.calibration_probes;
  auto oracle = std::make_shared<LpOracle>(rows, p, C, std::exp(0.5 * std::log(C) - mean_log));
  const double coverage = oracle->calibrated_coverage(opt.calibration_probes, cal);
  if (coverage < opt.min_coverage) {
    throw CalibrationError("lp calibration coverage " + std::to_string(coverage) + " below " +
                           std::to_string(opt.min_coverage));
  }
  return oracle;
}

Vec RecoveryOracle::query(const Vec& x) {
  check_query(x);
  count();
  return recover(x);
}

CountSketchRecovery::CountSketchRecovery(int n, int depth, int width, int k, double C, Rng& rng)
    : RecoveryOracle(n), depth_(depth), width_(width), k_(k), C_(C) {
  if (depth < 1 || width < 1) throw std::invalid_argument("CountSketchRecovery: empty table");
  if (k < 1 || k > n) throw std::invalid_argument("CountSketchRecovery: bad k");
  bucket_.resize(static_cast<size_t>(depth) * n);
  sign_.resize(bucket_.size());
  // columns equal up to sign cannot be told apart from the sketch; redraw them
  std::set<std::vector<int>> seen;
  const double classes = std::pow(static_cast<double>(width), depth) * std::pow(2.0, depth - 1);
  const bool distinct = classes >= 2.0 * n;
  std::vector<int> key(depth);
  for (int i = 0; i < n; ++i) {
    for (;;) {
      for (int j = 0; j < depth; ++j) {
        bucket_[j * n + i] = static_cast<int>(rng.below(width));
        sign_[j * n + i] = rng.bits() & 1 ? 1 : -1;
      }
      const int s0 = sign_[i];
      for (int j = 0; j < depth; ++j) key[j] = (bucket_[j * n + i] * 2) + (sign_[j * n + i] * s0 > 0);
      if (!distinct || seen.insert(key).second) break;
    }
  }
  a_ = Mat::Zero(depth * width, n);
  for (int j = 0; j < depth; ++j) {
    for (int i = 0; i < n; ++i) a_(j * width + bucket_[j * n + i], i) = sign_[j * n + i];
  }
}

std::optional<Subspace> CountSketchRecovery::reveal_rowspace() const {
  return Subspace::span(a_.transpose());
}

Vec CountSketchRecovery::sketch(const Vec& x) const {
  const int n = ambient_dim();
  Vec y = Vec::Zero(depth_ * width_);
  for (int j = 0; j < depth_; ++j) {
    for (int i = 0; i < n; ++i) y(j * width_ + bucket_[j * n + i]) += sign_[j * n + i] * x(i);
  }
  return y;
}

// Greedy decoding: each step takes the median estimate of every unused
// coordinate on the residual sketch and keeps the one that explains the most
// residual energy.
Vec CountSketchRecovery::recover_from_sketch(const Vec& y) const {
  const int n = ambient_dim();
  Vec res = y;
  Vec out = Vec::Zero(n);
  std::vector<char> used(n, 0);
  std::vector<double> row(depth_);
  for (int t = 0; t < k_; ++t) {
    int best = -1;
    double best_gain = -std::numeric_limits<double>::infinity();
    double best_val = 0.0;
    for (int i = 0; i < n; ++i) {
      if (used[i]) continue;
      for (int j = 0; j < depth_; ++j) row[j] = sign_[j * n + i] * res(j * width_ + bucket_[j * n + i]);
      double v;
      if (depth_ == 3) {
        v = std::max(std::min(row[0], row[1]), std::min(std::max(row[0], row[1]), row[2]));
      } else {
        std::sort(row.begin(), row.end());
        v = depth_ % 2 ? row[depth_ / 2] : 0.5 * (row[depth_ / 2 - 1] + row[depth_ / 2]);
      }
      double gain = 0.0;
      for (int j = 0; j < depth_; ++j) {
        const double b = res(j * width_ + bucket_[j * n + i]);
        const double after = b - sign_[j * n + i] * v;
        gain += b * b - after * after;
      }
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
        best_val = v;
      }
    }
    used[best] = 1;
    out(best) = best_val;
    for (int j = 0; j < depth_; ++j) res(j * width_ + bucket_[j * n + best]) -= sign_[j * n + best] * best_val;
  }
  return out;
}

double tail_norm(const Vec& x, int k) {
  const auto n = x.size();
  if (k < 0 || k > n) throw std::out_of_range("tail_norm: k out of range");
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](auto a, auto b) { return std::abs(x(a)) > std::abs(x(b)); });
  double sum = 0.0;
  for (auto t = k; t < n; ++t) sum += x(idx[t]) * x(idx[t]);
  return std::sqrt(sum);
}

double recovery_success_rate(RecoveryOracle& oracle, double spike, int idx, int trials, Rng& rng) {
  const int n = oracle.ambient_dim();
  int ok = 0;
  Vec x(n);
  for (int t = 0; t < trials; ++t) {
    rng.fill_normal(x, 1.0);
    x(idx) += spike;
    const Vec xp = oracle.query(x);
    ok += (xp - x).norm() <= oracle.C() * tail_norm(x, oracle.k());
  }
  return static_cast<double>(ok) / trials;
}

std::shared_ptr<CountSketchRecovery> make_countsketch_recovery_oracle(int n, int r, int k, double C,
                                                                      Rng& rng,
                                                                      const RecoveryOptions& opt) {
  if (r <= 0 || r >= n) throw std::invalid_argument("make_countsketch_recovery_oracle: need 0 < r < n");
  if (r % opt.depth != 0) throw std::invalid_argument("make_countsketch_recovery_oracle: r must be a multiple of depth");
  if (r < 2.0 * k * std::log(static_cast<double>(n) / k)) {
    throw CalibrationError("make_countsketch_recovery_oracle: r too small for k log(n/k)");
  }
  auto oracle = std::make_shared<CountSketchRecovery>(n, opt.depth, r / opt.depth, k, C, rng);
  if (opt.calibration_trials > 0) {
    Rng cal = rng.split(static_cast<std::uint64_t>(Stream::kCalibration));
    // calibration probes bypass the query counter
    const double spike = 10.0 * std::sqrt(n);
    int ok = 0;
    Vec x(n);
    for (int t = 0; t < opt.calibration_trials; ++t) {
      cal.fill_normal(x, 1.0);
      x(t % n) += spike;
      const Vec xp = oracle->recover_from_sketch(oracle->sketch(x));
      ok += (xp - x).norm() <= C * tail_norm(x, k);
    }
    const double rate = static_cast<double>(ok) / opt.calibration_trials;
    if (rate < opt.min_success) {
      throw CalibrationError("count-sketch calibration success " + std::to_string(rate));
    }
  }
  return oracle;
}

std::vector<std::string> split_command(const std::string& cmd) {
  std::vector<std::string> out;
  std::string cur;
  char quote = 0;
  bool have = false;
  for (char c : cmd) {
    if (quote) {
      if (c == quote) {
        quote = 0;
      } else {
        cur += c;
      }
    } else if (c == '\'' || c == '"') {
      quote = c;
      have = true;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      if (have || !cur.empty()) out.push_back(cur);
      cur.clear();
      have = false;
    } else {
      cur += c;
    }
  }
  if (have || !cur.empty()) out.push_back(cur);
  return out;
}

ProcessChannel::ProcessChannel(const std::vector<std::string>& argv) {
  if (argv.empty()) throw std::invalid_argument("oracle command is empty");
  int in[2];
  int out[2];
  if (pipe(in) != 0 || pipe(out) != 0) throw std::runtime_error("pipe: " + std::string(std::strerror(errno)));
  pid_ = fork();
  if (pid_ < 0) throw std::runtime_error("fork: " + std::string(std::strerror(errno)));
  if (pid_ == 0) {
    dup2(in[0], STDIN_FILENO);
    dup2(out[1], STDOUT_FILENO);
    close(in[0]);
    close(in[1]);
    close(out[0]);
    close(out[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(in[0]);
  close(out[1]);
  to_child_ = in[1];
  from_child_ = out[0];
  signal(SIGPIPE, SIG_IGN);
}

ProcessChannel::~ProcessChannel() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

std::string ProcessChannel::roundtrip(const std::string& line) {
  std::lock_guard lock(mu_);
  std::string msg = line + "\n";
  const char* p = msg.data();
  size_t left = msg.size();
  while (left > 0) {
    const ssize_t w = write(to_child_, p, left);
    if (w <= 0) throw std::runtime_error("oracle process: write failed");
    p += w;
    left -= static_cast<size_t>(w);
  }
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return reply;
    }
    char chunk[4096];
    const ssize_t r = read(from_child_, chunk, sizeof chunk);
    if (r <= 0) throw std::runtime_error("oracle process: closed its output");
    buffer_.append(chunk, static_cast<size_t>(r));
  }
}

namespace {

std::string query_line(const Vec& x) {
  nlohmann::json j;
  j["query"] = std::vector<double>(x.data(), x.data() + x.size());
  return j.dump();
}

}  // namespace

ProcessOracle::ProcessOracle(int n, const std::vector<std::string>& argv)
    : BinaryOracle(n), channel_(argv) {}

bool ProcessOracle::answer(const Vec& x) {
  auto reply = nlohmann::json::parse(channel_.roundtrip(query_line(x)));
  if (!reply.contains("answer")) throw std::runtime_error("oracle process: reply without \"answer\"");
  const int a = reply["answer"].get<int>();
  if (a != 0 && a != 1) throw std::runtime_error("oracle process: answer must be 0 or 1");
  return a == 1;
}

ProcessRecoveryOracle::ProcessRecoveryOracle(int n, int k, double C,
                                             const std::vector<std::string>& argv)
    : RecoveryOracle(n), k_(k), C_(C), channel_(argv) {}

Vec ProcessRecoveryOracle::recover(const Vec& x) {
  auto reply = nlohmann::json::parse(channel_.roundtrip(query_line(x)));
  if (!reply.contains("recovered")) throw std::runtime_error("oracle process: reply without \"recovered\"");
  auto v = reply["recovered"].get<std::vector<double>>();
  if (static_cast<int>(v.size()) != ambient_dim()) throw std::runtime_error("oracle process: recovered vector has wrong length");
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace sketchbreak
