#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace mcc::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Order-sensitive 64-bit mix, used to derive independent sub-streams from
// (seed, tag, index) so parallel work is schedule-independent.
inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a;
  std::uint64_t h = splitmix64(s);
  s = h ^ (b * 0xd1b54a32d192ed03ull + 0x2545f4914f6cdd1dull);
  return splitmix64(s);
}

// xoshiro256** with splitmix-expanded seeding. Self-contained so that streams
// are cheap to construct per sample / per trial and identical across platforms
// (the standard library distributions are implementation-defined).
class Stream {
 public:
  explicit Stream(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
    spare_valid_ = false;
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform on the open interval (0,1); never returns an endpoint, so logs
  // of draws are always finite.
  double uniform01() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (spare_valid_) {
      spare_valid_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    spare_valid_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n). Bias from the modulo is immaterial here and
  // the draw stays platform-independent.
  std::uint64_t below(std::uint64_t n) { return next() % n; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool spare_valid_ = false;
};

// Stream tags keep the independent uses of one experiment seed from colliding.
enum StreamTag : std::uint64_t {
  kMixtureMeans = 1,
  kMixtureFactors = 2,
  kTrainSamples = 3,
  kTestSamples = 4,
  kSoftmaxTrain = 5,
  kOvaTrain = 6,
  kNodeTrain = 7,
  kLeveragedTrain = 8,
  kTrial = 9,
  kGeneric = 10,
};

inline Stream stream_for(std::uint64_t seed, StreamTag tag, std::uint64_t index) {
  return Stream(mix(mix(seed, static_cast<std::uint64_t>(tag)), index));
}

// Fisher-Yates; deterministic given the stream position.
template <typename T>
void shuffle(std::span<T> values, Stream& stream) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(stream.below(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace mcc::rng
