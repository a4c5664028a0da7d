#ifndef CURRICUBENCH_RNG_HPP_
#define CURRICUBENCH_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <string_view>

namespace curricubench {

// splitmix64 generator with named-stream forking. All randomness in the
// project flows through this class so that runs are bit-reproducible across
// platforms (the standard <random> distributions are not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ kInit)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0,n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection-free multiply-shift; the modulo bias at 64 bits is
    // far below anything observable at desk scale.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller, one spare cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Avoid log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.28318530717958647692 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Derives an independent stream named by `name`. Forking never advances
  // this generator, so adding a consumer of one stream cannot perturb
  // siblings ("module.operation.step" stream naming).
  Rng fork(std::string_view name) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    for (const char c : name) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      h *= 0x100000001b3ULL;
    }
    Rng child(0);
    child.state_ = mix(state_ ^ mix(h));
    child.has_spare_ = false;
    return child;
  }

  Rng fork(std::string_view name, std::uint64_t index) const {
    Rng child = fork(name);
    child.state_ = mix(child.state_ + 0x9e3779b97f4a7c15ULL * (index + 1));
    return child;
  }

  // Fisher-Yates over [first,last).
  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = uniform_int(i);
      std::swap(first[i - 1], first[j]);
    }
  }

 private:
  static constexpr std::uint64_t kInit = 0x8c5fdb3a6e9f314bULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace curricubench

#endif  // CURRICUBENCH_RNG_HPP_
