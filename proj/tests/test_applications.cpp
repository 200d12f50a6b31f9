#include <catch_amalgamated.hpp>

#include <cmath>

#include "sketchbreak/applications.hpp"

using namespace sketchbreak;
using Catch::Approx;

namespace {

Subspace random_subspace(int n, int t, Rng& rng) {
  Mat g(n, t);
  rng.fill_normal(g, 1.0);
  return Subspace::span(g);
}

std::shared_ptr<CountSketchRecovery> sketch256(std::uint64_t seed, int r = 24) {
  Rng rng(seed);
  return make_countsketch_recovery_oracle(256, r, 1, 4.0, rng);
}

}  // namespace

TEST_CASE("lp_violation_holds recomputes the norm") {
  Vec x(2);
  x << 3, 4;
  CHECK(lp_violation_holds({x, 4.9, 2.0, 4.0, LpSide::kUnderEstimate}));
  CHECK_FALSE(lp_violation_holds({x, 5.1, 2.0, 4.0, LpSide::kUnderEstimate}));
  CHECK(lp_violation_holds({x, 20.5, 2.0, 4.0, LpSide::kOverEstimate}));
  CHECK_FALSE(lp_violation_holds({x, 19.5, 2.0, 4.0, LpSide::kOverEstimate}));
  CHECK(lp_violation_holds({x, 3.9, INFINITY, 4.0, LpSide::kUnderEstimate}));
}

TEST_CASE("a kernel vector of the lp sketch is a violation") {
  Rng rng(1);
  auto o = make_lp_oracle(64, 16, 2.0, 4.0, rng);
  Vec x(64);
  rng.fill_normal(x, 1.0);
  x -= project(x, *o->reveal_rowspace());
  const double z = o->query(x);
  CHECK(lp_violation_holds({x, z, 2.0, 4.0, LpSide::kUnderEstimate}));
}

TEST_CASE("thresholded estimator and threshold placement") {
  Rng rng(2);
  auto o = make_lp_oracle(64, 16, 2.0, 4.0, rng);
  const double B = 8.0 * 16;
  const double th = lp_threshold(64, 2.0, 4.0, B);
  // sqrt(C * typical(2) * typical(B/2)) with typical(s) = sqrt((s + 1/4) n) for p = 2
  CHECK(th == Approx(std::sqrt(4.0 * std::sqrt(2.25 * 64) * std::sqrt((B / 2 + 0.25) * 64))).epsilon(1e-12));
  ThresholdedEstimator f(o, th);
  CHECK_FALSE(f.query(Vec::Zero(64)));
  CHECK(f.query(Vec::Constant(64, 100.0)));
  CHECK(o->queries_used() == 2);
}

TEST_CASE("attack_lp against a full-view estimator finds nothing") {
  Rng rng(3);
  auto o = make_lp_oracle(64, 64, 2.0, 4.0, rng);
  auto res = attack_lp(o, 4.0, 2.0, 200000, 11);
  CHECK_FALSE(res.violation);
  CHECK(res.queries <= 200000);
  CHECK_THROWS_AS(attack_lp(o, 4.0, 2.0, 100, 11), std::invalid_argument);
}

TEST_CASE("attack_lp against a 16-row sketch", "[campaign]") {
  int found = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    Rng rng(500 + t);
    auto o = make_lp_oracle(64, 16, 2.0, 4.0, rng);
    auto res = attack_lp(o, 4.0, 2.0, 10000000, 700 + t);
    CHECK(res.queries <= 10000000);
    if (res.violation) {
      CHECK(lp_violation_holds(*res.violation));
      ++found;
    }
  }
  CHECK(3 * found >= 2 * trials);
}

TEST_CASE("recovery_violation_holds recomputes both sides") {
  Vec x = Vec::Zero(4);
  x(0) = 5;
  x(1) = 1;
  Vec xp = x;
  xp(2) = 10;
  CHECK(recovery_violation_holds({x, xp, 1, 4.0, 0, 0}));
  xp(2) = 3.9;
  CHECK_FALSE(recovery_violation_holds({x, xp, 1, 4.0, 99, 0}));
}

TEST_CASE("diagonal_set and the full set at V = 0") {
  CHECK(diagonal_set(Subspace(256), 0.999).size() == 256);
  auto f = build_recovery_gapnorm(sketch256(4), 4.0, 0.1, 1024.0);
  CHECK(f->s_set().size() == 256);
  CHECK(f->ambient_dim() == 256);
  CHECK(f->max_cost_per_query() == 32);

  Rng rng(5);
  auto v = random_subspace(40, 3, rng);
  Mat p = Mat::Identity(40, 40) - v.basis() * v.basis().transpose();
  auto s = diagonal_set(v, 0.95);
  int want = 0;
  for (int i = 0; i < 40; ++i) want += p(i, i) >= 0.95;
  CHECK(static_cast<int>(s.size()) == want);
}

TEST_CASE("projector diagonal count against the Markov bound") {
  const int n = 256;
  const double C = 4;
  const int r = 8;
  Rng rng(6);
  for (double kappa : {0.1, 2.0}) {
    const double alpha = kappa * kappa;
    auto v = random_subspace(n, r, rng);
    Mat p = Mat::Identity(n, n) - v.basis() * v.basis().transpose();
    int count = 0;
    for (int i = 0; i < n; ++i) count += p(i, i) > 1 - alpha / (C * C);
    CHECK(count > n - C * C * r / alpha);
  }
}

TEST_CASE("f(0) = 0 against the honest count-sketch") {
  auto cs = sketch256(7);
  auto f = build_recovery_gapnorm(cs, 4.0, 0.1, 1024.0);
  CHECK_FALSE(f->query(Vec::Zero(256)));
  RecoveryGapNormOptions all;
  all.probes = 0;
  auto g = build_recovery_gapnorm(cs, 4.0, 0.1, 1024.0, all);
  const long before = cs->queries_used();
  CHECK_FALSE(g->query(Vec::Zero(256)));
  CHECK(cs->queries_used() - before == 256);
}

TEST_CASE("Case 1: small inputs map to 0") {
  auto cs = sketch256(8);
  auto f = build_recovery_gapnorm(cs, 4.0, 0.1, 1024.0);
  Rng rng(9);
  ComplementGaussianSpec spec{Subspace(256), 1.0, 0.25};
  int zeros = 0, kept = 0;
  while (kept < 1000) {
    Vec x = sample_complement(spec, rng);
    if (x.squaredNorm() >= 4 * 256) continue;
    ++kept;
    zeros += !f->query(x);
  }
  CHECK(zeros >= 990);
}

TEST_CASE("Case 2: large inputs rarely map to 0") {
  const double B = 2.0 * 2.0 * 256;  // gamma = 2
  auto cs = sketch256(10);
  auto f = build_recovery_gapnorm(cs, 4.0, 0.1, B);
  Rng rng(11);
  ComplementGaussianSpec spec{Subspace(256), B, 0.25};
  int zeros = 0, kept = 0;
  while (kept < 1000) {
    Vec x = sample_complement(spec, rng);
    const double s = x.squaredNorm();
    if (s < B * 256 / 4 || s > 100 * B * 256) continue;
    ++kept;
    zeros += !f->query(x);
  }
  CHECK(zeros < 200);
}

TEST_CASE("a dense direction in V empties S at kappa 0.1") {
  auto f = build_recovery_gapnorm(sketch256(12), 4.0, 0.1, 1024.0);
  Rng rng(13);
  CHECK_THROWS_AS(f->adapt(random_subspace(256, 1, rng)), ReductionPreconditionError);
}

TEST_CASE("padding for k > 1") {
  Rng rng(14);
  auto cs = make_countsketch_recovery_oracle(257, 24, 2, 4.0, rng, {3, 0, 0.99});
  RecoveryGapNormOptions opt;
  opt.pad_value = 1e4;
  auto f = build_recovery_gapnorm(cs, 4.0, 0.1, 1024.0, opt);
  CHECK(f->ambient_dim() == 256);
  CHECK(f->padding() == 1);
  Vec y = f->probe_vector(Vec::Zero(256), 5);
  REQUIRE(y.size() == 257);
  CHECK(y(256) == 1e4);
  CHECK(y(5) == Approx(f->probe_scale()));
  CHECK(f->probe_scale() == Approx(4.0 * 4.0 * 16.0));
}

TEST_CASE("attack_sparse_recovery plumbing") {
  auto cs = sketch256(15);
  SparseAttackOptions opt;
  opt.budget = 100;
  CHECK_THROWS_AS(attack_sparse_recovery(cs, 1, opt), std::invalid_argument);

  opt = {};
  opt.attack.max_rounds = 1;
  opt.attack.m = 200;
  opt.budget = 300000;
  auto res = attack_sparse_recovery(cs, 2, opt);
  CHECK(res.recovery_queries <= opt.budget);
  CHECK(res.recovery_queries == cs->queries_used());
  if (res.violation) CHECK(recovery_violation_holds(*res.violation));
  CHECK_FALSE(res.outcome.empty());
}
