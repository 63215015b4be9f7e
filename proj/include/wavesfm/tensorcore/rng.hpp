#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace wavesfm::tc {

// SplitMix64 finalizer; the mixing function behind RngState.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Counter-based generator. Output i of a stream is
//   mix64(key + (i + 1) * golden),  key = mix64(seed ^ mix64(stream * golden + 1))
// so every draw depends only on (seed, stream, counter) and streams can be
// split off for samples or workers without touching the parent.
class RngState {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit RngState(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), key_(mix64(seed ^ mix64(stream * kGolden + 1))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

  // Independent child stream; does not advance this generator.
  RngState split(std::uint64_t id) const { return RngState(seed_, mix64(stream_ ^ mix64(id + kGolden))); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  // Box-Muller, no cached second value.
  double normal(double mean = 0.0, double stddev = 1.0);
  // Normal resampled until inside [-2 stddev, 2 stddev].
  double truncated_normal(double stddev);

  // Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace wavesfm::tc
