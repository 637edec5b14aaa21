#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mrcgat {

// Counter-based generator: draw i of stream (seed, stream_id) is
// mix64(key + (i + 1) * 0x9E3779B97F4A7C15) where key is derived from the
// pair by the same finalizer. mix64 is the SplitMix64 output function, so
// every draw is a pure function of (seed, stream_id, i) and identical on all
// platforms. Floating-point draws use only the top 53 bits.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  // Uniform in (0, 1).
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; consumes two draws per call.
  double normal();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

// Per-purpose stream namespaces.
enum class StreamPurpose : std::uint64_t {
  kEpisode = 1,
  kInit = 2,
  kDropout = 3,
  kFolds = 4,
  kInference = 5,
  kSynth = 6,
  kExplain = 7,
};

// Stable stream id for (purpose, a, b).
std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace mrcgat
