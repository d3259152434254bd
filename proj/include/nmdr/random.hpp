#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace nmdr {

/// Seedable random source. All variates are built from the raw 64-bit engine
/// output so that the engine state alone determines every future draw; this
/// keeps checkpoints exact (no cached normals hidden in distribution objects).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  /// Derives an independent stream from a base seed and a list of stream ids
  /// (chain index, mask index, ...).
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
    std::vector<std::uint32_t> words;
    auto push = [&](std::uint64_t x) {
      words.push_back(static_cast<std::uint32_t>(x));
      words.push_back(static_cast<std::uint32_t>(x >> 32));
    };
    push(seed);
    for (auto id : ids) push(id);
    std::seed_seq seq(words.begin(), words.end());
    Rng r;
    r.engine_.seed(seq);
    return r;
  }

  void reseed(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one draw per call, nothing cached).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Gamma(shape, rate), Marsaglia-Tsang.
  double gamma(double shape, double rate) {
    if (shape < 1.0) {
      double u = uniform();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a, 1.0);
    double y = gamma(b, 1.0);
    return x / (x + y);
  }

  std::vector<double> dirichlet(const std::vector<double>& alpha) {
    std::vector<double> out(alpha.size());
    double total = 0.0;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      out[k] = gamma(alpha[k], 1.0);
      total += out[k];
    }
    for (auto& x : out) x /= total;
    return out;
  }

  /// Draws an index with probability proportional to weights[k].
  template <typename Weights>
  std::size_t categorical(const Weights& weights, double total) {
    double u = uniform() * total;
    std::size_t last = 0;
    for (std::size_t k = 0; k < static_cast<std::size_t>(weights.size()); ++k) {
      if (weights[k] <= 0.0) continue;
      last = k;
      u -= weights[k];
      if (u < 0.0) return k;
    }
    return last;
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nmdr
