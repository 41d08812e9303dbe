#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace fedcac {

// splitmix64 finalizer; used to fold seed components together.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Purpose tags for the seed-splitting scheme. Every random stream in a run
// is keyed as derive_seed(root_or_client_seed, purpose[, a[, b]]), so one
// 64-bit root seed determines all stochastic behavior.
enum class SeedPurpose : std::uint64_t {
  Data = 1,       // synthetic dataset generation
  Partition = 2,  // client shard assignment
  Client = 3,     // per-client base seed (folds in client_id)
  ModelInit = 4,  // weight initialization
  Shuffle = 5,    // per-round mini-batch shuffling (folds in round)
  SelectorDraw = 6,  // random critical-parameter selector (folds in round)
};

inline std::uint64_t derive_seed(std::uint64_t base, SeedPurpose purpose,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = mix64(base);
  s = mix64(s ^ static_cast<std::uint64_t>(purpose));
  s = mix64(s ^ a);
  s = mix64(s ^ b);
  return s;
}

// mt19937_64 with hand-written draw functions. The engine is fully specified
// by the standard; std:: distributions are not, so uniform/normal/gamma are
// implemented here to keep runs bit-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n); rejection sampling avoids modulo bias
  std::uint64_t below(std::uint64_t n) {
    assert(n > 0);
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // standard normal via Box-Muller; second value cached
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // gamma(shape, 1) via Marsaglia-Tsang, boosted for shape < 1
  double gamma(double shape) {
    assert(shape > 0.0);
    if (shape < 1.0) {
      const double u = 1.0 - uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = 1.0 - uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // log of a gamma(shape, 1) draw; stays finite for shapes far below 1,
  // where the draw itself underflows to zero
  double log_gamma_draw(double shape) {
    assert(shape > 0.0);
    if (shape >= 1.0) return std::log(gamma(shape));
    const double u = 1.0 - uniform();
    return std::log(gamma(shape + 1.0)) + std::log(u) / shape;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fedcac
