#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace nldf {

// All randomness in a run flows from one master seed through named sub-streams
// (scene, signal, init, batch, pool, ...), so any one component can be held
// fixed across experiments. Distributions are hand-rolled on top of
// mt19937_64 so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) { return engine_() % n; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

namespace detail {
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Seed for the named sub-stream of a master seed.
inline std::uint64_t substream(std::uint64_t master, std::string_view name) {
  return detail::splitmix64(master ^ detail::fnv1a64(name));
}

/// Per-item seed within a sub-stream (e.g. per-pixel stratified sampling).
inline std::uint64_t substream(std::uint64_t master, std::string_view name, std::uint64_t index) {
  return detail::splitmix64(substream(master, name) ^ detail::splitmix64(index));
}

}  // namespace nldf
