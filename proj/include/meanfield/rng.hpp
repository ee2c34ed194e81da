#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace meanfield {

// SplitMix64. Streams are keyed by (seed, tag, index, step).
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t state = 0x853c49e6748fea9bULL) : state_(state) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

enum class StreamTag : std::uint64_t {
  kInitialPositions = 1,
  kParticleNoise = 2,
  kFieldSampling = 3,
  kLimitEnsemble = 4,
  kReplication = 5,
  kEstimator = 6,
  kMonteCarlo = 7,
};

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
  z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
  return z ^ (z >> 33);
}

inline std::uint64_t hash_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = mix64(h ^ (p + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
  return h;
}

inline Rng substream(std::uint64_t seed, StreamTag tag, std::uint64_t index, std::uint64_t step = 0) {
  return Rng(hash_key({seed, static_cast<std::uint64_t>(tag), index, step}));
}

// Derives a child seed, e.g. one per replication.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  return hash_key({seed, static_cast<std::uint64_t>(StreamTag::kReplication), salt});
}

}  // namespace meanfield
