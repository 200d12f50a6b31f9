#include <catch_amalgamated.hpp>

#include <cmath>

#include "sketchbreak/attack.hpp"

using namespace sketchbreak;
using Catch::Approx;

namespace {

AttackConfig small_config(int n, int r) {
  AttackConfig cfg;
  cfg.n = n;
  cfg.r_bound = r;
  cfg.m = 1000;
  cfg.verify_samples = 1000;
  return cfg;
}

}  // namespace

TEST_CASE("estimate_label_rate on constant oracles") {
  Rng rng(1);
  ComplementGaussianSpec spec{Subspace(8), 2.0, 0.25};
  ConstantOracle zero(8, false), one(8, true);
  auto a = estimate_label_rate(zero, spec, 500, rng);
  CHECK(a.rate == 0.0);
  CHECK(a.positives.rows() == 0);
  auto b = estimate_label_rate(one, spec, 500, rng);
  CHECK(b.rate == 1.0);
  CHECK(b.positives.rows() == 500);
  CHECK(one.queries_used() == 500);
  CHECK_THROWS_AS(estimate_label_rate(one, spec, 0, rng), std::invalid_argument);
}

TEST_CASE("estimate_label_rate on an honest GapNorm oracle") {
  Rng rng(2);
  auto o = make_gapnorm_oracle(64, 16, 8.0, rng);
  ComplementGaussianSpec spec{Subspace(64), 8.0, 0.25};
  auto lr = estimate_label_rate(*o, spec, 2000, rng);
  CHECK(lr.rate >= 0.99);
  CHECK(lr.positives.rows() == static_cast<long>(std::lround(lr.rate * 2000)));
}

TEST_CASE("check_certificate_condition examples") {
  CHECK_FALSE(check_certificate_condition(1.0, 8.0, 8.0, 0.01));
  CHECK(check_certificate_condition(0.5, 8.0, 8.0, 0.01) == Branch::kHighNormRejected);
  CHECK(check_certificate_condition(0.02, 1.0, 8.0, 0.01) == Branch::kLowNormAccepted);
  CHECK_FALSE(check_certificate_condition(0.005, 1.0, 8.0, 0.01));
  CHECK_FALSE(check_certificate_condition(0.5, 3.0, 8.0, 0.01));
  CHECK_THROWS(check_certificate_condition(1.5, 1.0, 8.0, 0.01));
}

TEST_CASE("boost_direction null test at the default gain") {
  const int n = 64;
  const double delta = AttackConfig{}.delta();
  int accepted = 0;
  for (int t = 0; t < 100; ++t) {
    Rng g1(100 + t), g2(1000 + t);
    ComplementGaussianSpec spec{Subspace(n), 2.0, 0.25};
    Mat g = sample_complement_batch(spec, 2000, g1, g2);
    accepted += boost_direction(g, 2.0, delta).has_value();
  }
  CHECK(accepted <= 5);
}

TEST_CASE("plain objective rule accepts unbiased samples") {
  // the top eigenvalue of a sample second moment sits above the population
  // value, so thresholding it at a small gain fires on pure noise
  const int n = 64;
  const double delta = AttackConfig{}.delta();
  int accepted = 0;
  BoostOptions opt;
  opt.rule = AcceptanceRule::kObjective;
  for (int t = 0; t < 20; ++t) {
    Rng g1(200 + t), g2(2000 + t);
    Mat g = sample_complement_batch({Subspace(n), 2.0, 0.25}, 2000, g1, g2);
    accepted += boost_direction(g, 2.0, delta, opt).direction.has_value();
  }
  CHECK(accepted == 20);
}

TEST_CASE("boost_direction recovers a planted direction") {
  const int n = 16;
  const double sigma_sq = 1.0;
  const double gain = 0.05;
  Rng rng(3);
  Vec p(n);
  rng.fill_normal(p, 1.0);
  p.normalize();
  Mat g = sample_complement_batch({Subspace(n), sigma_sq, 0.25}, 20000, rng, rng);
  // stretch the p component so its second moment is base + 4 gain
  const double base = sigma_sq + 0.25;
  const double stretch = std::sqrt((base + 4 * gain) / base);
  for (Eigen::Index i = 0; i < g.rows(); ++i) g.row(i) += (stretch - 1.0) * g.row(i).dot(p) * p.transpose();
  auto v = boost_direction(g, sigma_sq, gain);
  REQUIRE(v);
  CHECK(std::pow(v->dot(p), 2) >= 0.9);
}

TEST_CASE("boost_direction on a single row") {
  const double sigma_sq = 2.0;
  const double delta = 0.01;
  Mat g = Mat::Zero(1, 5);
  g(0, 0) = std::sqrt(2.0 * (sigma_sq + 0.25 + delta));
  BoostOptions plain;
  plain.rule = AcceptanceRule::kObjective;
  auto r = boost_direction(g, sigma_sq, delta, plain);
  REQUIRE(r.direction);
  CHECK(std::abs((*r.direction)(0)) == Approx(1.0).margin(1e-9));
  CHECK(r.objective == Approx(g(0, 0) * g(0, 0)));
  // the held-out rule cannot split one row
  CHECK_FALSE(boost_direction(g, sigma_sq, delta));
  CHECK_THROWS_AS(boost_direction(Mat(0, 5), 1.0, 0.1), std::invalid_argument);
}

TEST_CASE("run_attack against constant oracles") {
  auto cfg = small_config(8, 4);
  ConstantOracle zero(8, false);
  auto a = run_attack(zero, cfg);
  REQUIRE(a.certificate);
  CHECK(a.certificate->branch == Branch::kHighNormRejected);
  CHECK(a.rounds == 1);
  CHECK(a.certificate->sigma_sq >= cfg.B / 2);
  CHECK(a.certificate->empirical_rate == 0.0);

  ConstantOracle one(8, true);
  auto b = run_attack(one, cfg);
  REQUIRE(b.certificate);
  CHECK(b.certificate->branch == Branch::kLowNormAccepted);
  CHECK(b.rounds == 1);
  CHECK(b.certificate->sigma_sq <= 2.0);
  CHECK(b.trace.size() == 1);
}

TEST_CASE("run_attack trace structure and budget") {
  Rng rng(4);
  auto o = make_gapnorm_oracle(16, 2, 8.0, rng, {0, 1.0});
  auto cfg = small_config(16, 2);
  cfg.max_rounds = 2;
  auto res = run_attack(*o, cfg, alignment_probe(*o->reveal_rowspace()));
  CHECK(res.rounds <= 2);
  long queries = 0;
  for (const auto& c : res.trace) {
    CHECK(c.t >= 1);
    CHECK(c.t <= 2);
    queries += cfg.m + (c.certificate ? cfg.verify_samples : 0);
    if (c.certificate) CHECK(c.verified_rate);
  }
  CHECK(queries == res.queries);
  CHECK(res.queries == o->queries_used());
  CHECK(res.final_v.orthonormality_error() < 1e-10);

  auto capped = small_config(16, 2);
  capped.max_queries = 3 * capped.m + 10;
  auto fresh = make_gapnorm_oracle(16, 2, 8.0, rng, {0, 1.0});
  auto ex = run_attack(*fresh, capped);
  CHECK(ex.exhausted);
  CHECK(ex.trace.size() == 3);
  CHECK(fresh->queries_used() <= capped.max_queries);
}

TEST_CASE("run_attack is deterministic in its seed") {
  Rng r1(5), r2(5);
  auto o1 = make_gapnorm_oracle(16, 2, 8.0, r1, {0, 1.0});
  auto o2 = make_gapnorm_oracle(16, 2, 8.0, r2, {0, 1.0});
  auto cfg = small_config(16, 2);
  cfg.max_rounds = 2;
  auto a = run_attack(*o1, cfg);
  auto b = run_attack(*o2, cfg);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].rate == b.trace[i].rate);
    CHECK(a.trace[i].objective == b.trace[i].objective);
  }
}

TEST_CASE("attack config validation") {
  AttackConfig cfg;
  cfg.B = 4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.blocks = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  CHECK(cfg.delta() == Approx(1.0 / (7 * 8 * 16)));
  CHECK(cfg.rounds() == 17);
  auto g = cfg.grid();
  CHECK(g.front() == 0.75);
  CHECK(g.back() == 8.0);
}

TEST_CASE("verify_certificate examples") {
  Rng rng(6);
  FailureCertificate high;
  high.subspace_v = Subspace(64);
  high.sigma_sq = 8.0;
  high.branch = Branch::kHighNormRejected;
  ConstantOracle zero(64, false);
  auto a = verify_certificate(high, zero, 1000, rng);
  CHECK(a.empirical_rate == 0.0);
  CHECK(a.violated);

  auto honest = make_gapnorm_oracle(64, 16, 8.0, rng);
  auto b = verify_certificate(high, *honest, 2000, rng);
  CHECK(b.empirical_rate > 0.98);
  CHECK_FALSE(b.violated);

  FailureCertificate low = high;
  low.sigma_sq = 1.0;
  low.branch = Branch::kLowNormAccepted;
  ConstantOracle one(64, true);
  auto c = verify_certificate(low, one, 1000, rng);
  CHECK(c.empirical_rate == 1.0);
  CHECK(c.violated);
  CHECK_FALSE(verify_certificate(low, *honest, 2000, rng).violated);
  CHECK_THROWS_AS(verify_certificate(low, one, 50, rng), std::invalid_argument);
}

TEST_CASE("extract_strong_certificate") {
  Rng rng(7);
  FailureCertificate c;
  c.subspace_v = Subspace(12);
  c.sigma_sq = 8.0;
  auto one = extract_strong_certificate(c, 1, rng);
  CHECK(one.subspace_v.dim() == 0);
  CHECK(one.sigma_sq == 8.0);

  auto zero = extract_strong_certificate(c, 3, rng);
  CHECK(zero.subspace_v.ambient_dim() == 4);
  CHECK(zero.subspace_v.dim() == 0);
  CHECK(zero.strong);

  Mat b = Mat::Zero(4, 1);
  b(1, 0) = 1.0;
  auto prod = c;
  prod.subspace_v = block_diagonal(Subspace::from_orthonormal(b), 3);
  CHECK(prod.subspace_v.dim() == 3);
  auto blk = extract_strong_certificate(prod, 3, rng);
  CHECK(subspace_distance(blk.subspace_v, Subspace::from_orthonormal(b)) < 1e-10);

  Mat mixed = Mat::Zero(12, 1);
  mixed(0, 0) = mixed(4, 0) = 1.0 / std::sqrt(2.0);
  prod.subspace_v = Subspace::from_orthonormal(mixed);
  CHECK_THROWS_AS(extract_strong_certificate(prod, 3, rng), BlockDecompositionError);
}
