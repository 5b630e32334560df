#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace progrow {

// Serializable position of an Rng stream.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;
  friend bool operator==(const RngState&, const RngState&) = default;
};

// Counter-based SplitMix64 (Steele, Lea & Flood 2014). Output i of a stream
// with key `seed` is mix64(seed + i * 0x9e3779b97f4a7c15), so the whole state
// is (seed, counter) and results are identical on every platform.
//
// fork(label) derives an independent stream keyed by
// mix64(seed ^ fnv1a64(label)); it depends only on the parent's seed, never on
// how far the parent has advanced. Labels used by the library: "init",
// "corpus", "heldout", "transitions", "order", "mask", "dropout", "probe",
// "eval", "noise".
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}
  static Rng from_state(RngState state);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller (one output per two uniforms).
  double normal();
  // Normal(0, stddev) resampled until |z| <= 2 stddev.
  double truncated_normal(double stddev);

  Rng fork(std::string_view label) const;

  RngState state() const { return {seed_, counter_}; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace progrow
