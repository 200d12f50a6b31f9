#pragma once

#include <cstdint>
#include <random>

#include "sketchbreak/linalg.hpp"

namespace sketchbreak {

std::uint64_t splitmix64(std::uint64_t x);

// Single-owner generator. Parallel work gets its own stream via split().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), eng_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }
  Rng split(std::uint64_t tag) const { return Rng(splitmix64(seed_ ^ splitmix64(tag + 0x9e37))); }

  double normal() { return normal_(eng_); }
  double uniform() { return uniform_(eng_); }
  std::uint64_t bits() { return eng_(); }
  std::uint64_t below(std::uint64_t bound) {
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(eng_);
  }
  bool bernoulli(double p) { return uniform() < p; }

  void fill_normal(Mat& m, double sd);
  void fill_normal(Vec& v, double sd);

  std::mt19937_64& engine() { return eng_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

// Stream tags for the logical roles sharing one trial seed.
enum class Stream : std::uint64_t {
  kSketch = 1,
  kQueryG1 = 2,
  kQueryG2 = 3,
  kOracle = 4,
  kVerify = 5,
  kBoost = 6,
  kExtract = 7,
  kCalibration = 8,
};

inline Rng stream(std::uint64_t seed, Stream s) { return Rng(seed).split(static_cast<std::uint64_t>(s)); }

}  // namespace sketchbreak
