#include <catch_amalgamated.hpp>

#include <cmath>

#include "sketchbreak/oracles.hpp"
#include "sketchbreak/stats.hpp"

using namespace sketchbreak;
using Catch::Approx;

namespace {

Vec kernel_vector(const Subspace& rowspace, Rng& rng) {
  Vec x(rowspace.ambient_dim());
  rng.fill_normal(x, 1.0);
  return x - project(x, rowspace);
}

double rate_of_ones(BinaryOracle& o, const Mat& rows) {
  auto a = o.query_batch(rows);
  double s = 0;
  for (auto v : a) s += v;
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("GapNorm oracle basic answers") {
  Rng rng(1);
  auto o = make_gapnorm_oracle(64, 16, 8.0, rng);
  CHECK_FALSE(o->query(Vec::Zero(64)));
  auto a = *o->reveal_rowspace();
  CHECK(a.dim() == 16);
  Vec k = kernel_vector(a, rng);
  k *= std::sqrt(8.0 * 64) / k.norm();
  CHECK_FALSE(o->query(k));
  CHECK(o->queries_used() == 2);
  CHECK_THROWS_AS(o->query(Vec::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(make_gapnorm_oracle(64, 64, 8.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_gapnorm_oracle(64, 16, 4.0, rng), std::invalid_argument);
}

TEST_CASE("GapNorm answers depend only on the projection onto the row space") {
  Rng rng(2);
  auto o = make_gapnorm_oracle(64, 16, 8.0, rng);
  auto a = *o->reveal_rowspace();
  for (int i = 0; i < 2000; ++i) {
    Vec x(64);
    rng.fill_normal(x, 2.0);
    Vec z = kernel_vector(a, rng) * 3.0;
    CHECK(o->query(x) == o->query(project(x, a) + z));
  }
}

TEST_CASE("GapNorm calibration at the default tolerance") {
  Rng rng(3);
  auto o = make_gapnorm_oracle(64, 16, 8.0, rng);
  Rng probe(4);
  auto c = o->calibrate(10000, probe);
  CHECK(c.low_error <= 1e-2);
  CHECK(c.high_error <= 1e-2);
}

// The stricter 1e-3 target is out of reach at r = 16: the high side misses
// with probability Pr[chi2_16 < 16 / sqrt(8)], about 0.009.
TEST_CASE("GapNorm high-side answers reach frequency 0.999", "[!mayfail]") {
  Rng rng(5);
  auto o = make_gapnorm_oracle(64, 16, 8.0, rng);
  Mat x(10000, 64);
  rng.fill_normal(x, std::sqrt(8.0));
  CHECK(rate_of_ones(*o, x) >= 0.999);
}

TEST_CASE("GapNorm rejects a 1e-3 calibration target") {
  Rng rng(5);
  GapNormOptions opt;
  opt.max_error = 1e-3;
  CHECK_THROWS_AS(make_gapnorm_oracle(64, 16, 8.0, rng, opt), CalibrationError);
}

TEST_CASE("full-space oracle sees everything") {
  auto o = make_fullspace_oracle(16, 8.0);
  Vec x = Vec::Constant(16, 3.0);
  CHECK(o->query(x));
  CHECK_FALSE(o->query(x / 3.0));
  CHECK(o->reveal_rowspace()->dim() == 16);
}

TEST_CASE("wrap_randomized") {
  auto zero = std::make_shared<ConstantOracle>(8, false);
  auto same = wrap_randomized(zero, 0.0, Rng(1));
  Rng rng(6);
  Mat x(1000, 8);
  rng.fill_normal(x, 1.0);
  for (auto a : same->query_batch(x)) CHECK(a == 0);

  auto noisy = wrap_randomized(zero, 0.05, Rng(2));
  Mat y(10000, 8);
  rng.fill_normal(y, 1.0);
  CHECK(rate_of_ones(*noisy, y) == Approx(0.05).margin(0.01));
  CHECK_THROWS_AS(wrap_randomized(zero, 0.5, Rng(3)), std::invalid_argument);
}

TEST_CASE("randomized answers to x and its row-space projection have one law") {
  Rng rng(7);
  auto honest = make_gapnorm_oracle(64, 16, 8.0, rng);
  auto a = *honest->reveal_rowspace();
  auto noisy = wrap_randomized(honest, 0.2, Rng(8));
  Mat x(10000, 64);
  rng.fill_normal(x, 2.0);
  Mat px = project_rows(x, a);
  std::vector<double> u, v;
  for (auto b : noisy->query_batch(x)) u.push_back(b);
  for (auto b : noisy->query_batch(px)) v.push_back(b);
  CHECK(ks_two_sample(u, v).p_value > 0.01);
}

TEST_CASE("amplify_majority") {
  Rng rng(9);
  auto honest = make_gapnorm_oracle(16, 4, 8.0, rng, {0, 1e-2});
  auto one = amplify_majority(honest, 1);
  Mat x(500, 16);
  rng.fill_normal(x, 2.5);
  CHECK(one->query_batch(x) == honest->query_batch(x));

  auto three = amplify_majority(honest, 3);
  CHECK(three->ambient_dim() == 48);
  for (int i = 0; i < 200; ++i) {
    Vec b = x.row(i).transpose();
    Vec stacked(48);
    stacked << b, b, b;
    CHECK(three->query(stacked) == honest->query(b));
  }
  auto rs = *three->reveal_rowspace();
  CHECK(rs.dim() == 12);
  CHECK_THROWS_AS(amplify_majority(honest, 2), std::invalid_argument);
}

TEST_CASE("majority of five over noise 0.3") {
  Rng rng(10);
  auto honest = make_gapnorm_oracle(64, 16, 8.0, rng);
  auto five = amplify_majority(wrap_randomized(honest, 0.3, Rng(11)), 5);
  Mat x(20000, 5 * 64);
  rng.fill_normal(x, 1.0);  // low-norm blocks: the right answer is 0
  const double err = rate_of_ones(*five, x);
  CHECK(err < 0.17);
  CHECK(err == Approx(majority_probability(5, 0.3)).margin(0.01));
}

TEST_CASE("lp oracle") {
  Rng rng(12);
  auto o = make_lp_oracle(64, 32, 2.0, 4.0, rng);
  CHECK(o->query(Vec::Zero(64)) == 0.0);
  Rng probe(13);
  CHECK(o->calibrated_coverage(10000, probe) >= 0.99);
  Vec k = kernel_vector(*o->reveal_rowspace(), rng);
  CHECK(o->query(k) == Approx(0.0).margin(1e-9));
  CHECK(o->query(k) < lp_norm(k, 2.0));
  CHECK_THROWS_AS(make_lp_oracle(64, 32, 0.5, 4.0, rng), std::invalid_argument);
}

TEST_CASE("lp_norm") {
  Vec x(3);
  x << 3, -4, 0;
  CHECK(lp_norm(x, 2) == Approx(5));
  CHECK(lp_norm(x, 1) == Approx(7));
  CHECK(lp_norm(x, INFINITY) == Approx(4));
  CHECK(lp_norm(x, 3) == Approx(std::cbrt(91.0)));
}

TEST_CASE("tail_norm") {
  Vec x(3);
  x << 3, 1, 2;
  CHECK(tail_norm(x, 1) == Approx(std::sqrt(5.0)));
  CHECK(tail_norm(x, 0) == Approx(x.norm()));
  CHECK(tail_norm(x, 3) == 0.0);
  Vec tie(3);
  tie << 1, -1, 1;
  CHECK(tail_norm(tie, 1) == Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(tail_norm(x, 4), std::out_of_range);
  Rng rng(14);
  Vec y(20);
  rng.fill_normal(y, 1.0);
  for (int k = 0; k < 20; ++k) {
    CHECK(tail_norm(y, k + 1) <= tail_norm(y, k));
    CHECK(tail_norm(y, k) <= y.norm() + 1e-12);
  }
}

TEST_CASE("count-sketch recovery") {
  Rng rng(15);
  auto o = make_countsketch_recovery_oracle(256, 24, 1, 4.0, rng);
  Vec x = Vec::Zero(256);
  x(7) = 5.0;
  Vec xp = o->query(x);
  CHECK(std::abs(xp(7) - 5.0) < 1e-6);
  CHECK((xp - x).norm() < 1e-9);
  CHECK(o->query(Vec::Zero(256)).norm() == 0.0);
  Rng probe(16);
  CHECK(recovery_success_rate(*o, 10.0 * std::sqrt(256.0), 3, 1000, probe) >= 0.99);
  // the answer is a function of the sketch
  CHECK((o->recover_from_sketch(o->sketch(x)) - xp).norm() == 0.0);
  CHECK(o->reveal_rowspace()->dim() <= 24);
  CHECK_THROWS_AS(make_countsketch_recovery_oracle(256, 25, 1, 4.0, rng), std::invalid_argument);
}

TEST_CASE("count-sketch recovers every spike position") {
  Rng rng(17);
  auto o = make_countsketch_recovery_oracle(256, 24, 1, 4.0, rng);
  for (int i = 0; i < 256; ++i) {
    Vec x = Vec::Zero(256);
    x(i) = -3.0;
    CHECK((o->query(x) - x).norm() < 1e-9);
  }
}

TEST_CASE("process oracles over NDJSON") {
  ProcessOracle one(5, {"python3", ORACLE_SCRIPT, "const", "1"});
  ProcessOracle zero(5, {"python3", ORACLE_SCRIPT, "const", "0"});
  Vec x = Vec::LinSpaced(5, -1, 1);
  CHECK(one.query(x));
  CHECK_FALSE(zero.query(x));
  CHECK(one.query_batch(Mat::Ones(3, 5)) == std::vector<std::uint8_t>{1, 1, 1});
  CHECK(one.queries_used() == 4);

  ProcessRecoveryOracle ident(4, 1, 4.0, {"python3", ORACLE_SCRIPT, "identity"});
  Vec y(4);
  y << 0.5, -2, 3.25, 0;
  CHECK(ident.query(y) == y);

  ProcessOracle broken(5, {"python3", ORACLE_SCRIPT, "nonsense"});
  CHECK_THROWS(broken.query(x));
}

TEST_CASE("split_command") {
  CHECK(split_command("python3 a.py  --x 1") == std::vector<std::string>{"python3", "a.py", "--x", "1"});
  CHECK(split_command("run 'two words' \"and more\"") ==
        std::vector<std::string>{"run", "two words", "and more"});
  CHECK(split_command("").empty());
}
