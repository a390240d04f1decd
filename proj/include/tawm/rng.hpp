#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace tawm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named stream derivation: every random consumer gets its own seed computed from
// the root seed, a stream name and up to three integer coordinates. Streams do
// not depend on the order in which they are created.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : stream) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = splitmix64(root ^ splitmix64(h));
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ (b * 0x9e3779b97f4a7c15ULL));
  return splitmix64(s ^ (c * 0xd1b54a32d192ed03ULL));
}

// Counter-based engine; cheap to construct, used for per-sample streams.
struct SplitMix64 {
  using result_type = std::uint64_t;
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed = 0) : state(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type(0); }
  result_type operator()() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

// Seeded generator. Distributions are computed from raw bits so that draws are
// identical across standard library implementations.
template <class Engine>
class BasicRng {
 public:
  explicit BasicRng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one normal per two uniforms, no cached state.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return n == 0 ? 0 : static_cast<std::uint64_t>(uniform() * n) % n; }

 private:
  Engine engine_;
};

using Rng = BasicRng<std::mt19937_64>;
using StreamRng = BasicRng<SplitMix64>;

}  // namespace tawm
