#include "acgen/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace acgen {
namespace {

std::uint32_t lo32(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
std::uint32_t hi32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

std::uint64_t from_seq(std::seed_seq& seq) {
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

}  // namespace

Rng Rng::stream(std::uint64_t seed, Stream tag, std::uint64_t index) {
  std::seed_seq seq{lo32(seed), hi32(seed), static_cast<std::uint32_t>(tag),
                    lo32(index), hi32(index)};
  return Rng(from_seq(seq));
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  std::seed_seq seq{lo32(seed), hi32(seed), lo32(a), hi32(a),
                    lo32(b),    hi32(b),    lo32(c), hi32(c)};
  return from_seq(seq);
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::signed_uniform(double lo, double hi) {
  const double magnitude = uniform(lo, hi);
  return coin() ? -magnitude : magnitude;
}

double Rng::normal(double mean, double stddev) {
  // Box-Muller; u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double z =
      std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean + stddev * z;
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  const auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return i < n ? i : n - 1;
}

}  // namespace acgen
