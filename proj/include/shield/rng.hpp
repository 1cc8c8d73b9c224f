#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace shield {

// 64-bit FNV-1a. Used for stable hashing of names, configs and phrases; the
// value must never change between releases because seeds derive from it.
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

// A named, independently seeded random stream. Each consumer of randomness
// (data, training, sampling, attribution, penalty, init) owns one, so adding
// draws in one stage never shifts another.
class RngStream {
 public:
  RngStream() : RngStream(0, "default") {}
  RngStream(std::uint64_t master_seed, std::string_view name)
      : seed_(mix_seed(master_seed, fnv1a(name))), engine_(seed_) {}
  explicit RngStream(std::uint64_t raw_seed) : seed_(raw_seed), engine_(raw_seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t next_u64() { return engine_(); }

  // Derived stream keyed by an integer tuple, e.g. (sample id, t).
  RngStream child(std::uint64_t a, std::uint64_t b = 0) const {
    return RngStream(mix_seed(mix_seed(seed_, a), b));
  }

  std::mt19937_64& engine() { return engine_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Stream names used across the pipeline.
namespace streams {
inline constexpr std::string_view kData = "data";
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kTraining = "training";
inline constexpr std::string_view kSampling = "sampling";
inline constexpr std::string_view kAttribution = "attribution";
inline constexpr std::string_view kPenalty = "penalty";
inline constexpr std::string_view kProbe = "probe";
inline constexpr std::string_view kHeldout = "heldout";
inline constexpr std::string_view kProjection = "projection";
}  // namespace streams

}  // namespace shield
