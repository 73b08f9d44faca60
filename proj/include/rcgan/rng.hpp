#pragma once
// Deterministic random number generation. All stochastic code in the project
// draws through this wrapper so that a run is reproducible from a single seed
// and independent substreams can be split off for parallel concerns
// (data generation, label corruption, training, evaluation).

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace rcgan {

// splitmix64 finalizer; used to decorrelate seeds derived from small salts.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Independent stream for a sub-task; same (seed, salt) always yields the
  // same stream regardless of how much the parent has been consumed.
  Rng derive(std::uint64_t salt) const {
    return Rng(mix_seed(seed_ ^ mix_seed(salt)));
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the spare deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * kPi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return static_cast<int>(v % span);
  }

  // Draw an index with the given (not necessarily normalized) weights.
  int categorical(const std::vector<double>& weights) {
    if (weights.empty())
      throw std::invalid_argument("categorical: empty weight vector");
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0)
        throw std::invalid_argument("categorical: negative weight");
      total += w;
    }
    if (total <= 0.0)
      throw std::invalid_argument("categorical: weights sum to zero");
    double target = uniform() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      target -= weights[i];
      if (target < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size() - 1);
  }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(static_cast<int>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static constexpr double kPi = 3.141592653589793238462643383279502884;

  std::mt19937_64 engine_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rcgan
