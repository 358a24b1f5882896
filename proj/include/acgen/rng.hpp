#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace acgen {

// Sub-stream tags. Each generation stage draws from its own stream so that
// toggling one stage (e.g. selection) leaves every other draw untouched.
enum class Stream : std::uint32_t {
  kDag = 1,
  kConfounders = 2,
  kTriples = 3,
  kSelection = 4,
  kMechanisms = 5,
  kData = 6,
  kSolver = 7,
  kScenario = 8,
  kConfounderGain = 9,
};

// Portable random source. The engine is std::mt19937_64; distributions are
// written out here because the std:: ones are implementation-defined and the
// generator promises bit-identical output across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for (seed, tag, index), derived with std::seed_seq.
  static Rng stream(std::uint64_t seed, Stream tag, std::uint64_t index = 0);

  // Mixes several words into one 64-bit seed (also via std::seed_seq).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0, std::uint64_t c = 0);

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // +-U[lo, hi] with a fair sign.
  double signed_uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  // Uniform integer in [0, n); n must be > 0.
  std::size_t index(std::size_t n);
  bool coin() { return (engine_() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace acgen
