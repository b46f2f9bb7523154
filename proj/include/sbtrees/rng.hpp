#ifndef SBTREES_RNG_HPP
#define SBTREES_RNG_HPP

#include "sbtrees/core.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace sbtrees {

// Stream-splitting hash (splitmix64).  Chain k of a run with seed s is
// seeded with split_seed(s, k), so concurrent chains draw from disjoint
// streams by construction.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + stream * 0x9e3779b97f4a7c15ULL + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Random number source.  All distributions are generated from the raw 64-bit
// engine output with explicit algorithms, so a given seed reproduces the same
// draw sequence regardless of standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(split_seed(seed, stream)) {}

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on (0, 1]; safe to take the log of.
  double uniform_pos() { return 1.0 - uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw domain_error("uniform_int needs n >= 1");
    int k = static_cast<int>(uniform() * n);
    return k < n ? k : n - 1;
  }

  // Standard normal via the Marsaglia polar method (second value discarded to
  // keep the generator stateless between calls).
  double normal() {
    for (;;) {
      const double u = 2.0 * uniform() - 1.0;
      const double v = 2.0 * uniform() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Exponential parameterized by its mean.
  double exponential(double mean) {
    if (!(mean > 0.0)) throw domain_error("exponential mean must be > 0");
    return -mean * std::log(uniform_pos());
  }

  // Gamma(shape, scale) via Marsaglia-Tsang, with the standard boost
  // Gamma(a) = Gamma(a + 1) * U^(1/a) for shape < 1.
  double gamma(double shape, double scale = 1.0) {
    if (!(shape > 0.0) || !(scale > 0.0))
      throw domain_error("gamma shape and scale must be > 0");
    if (shape < 1.0)
      return gamma(shape + 1.0, scale) * std::pow(uniform_pos(), 1.0 / shape);
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
    }
  }

  // log of a Gamma(shape, 1) draw.  For shape < 1 the boost identity is
  // applied in log space, so tiny shapes cannot underflow to zero.
  double log_gamma(double shape) {
    if (!(shape > 0.0)) throw domain_error("gamma shape must be > 0");
    if (shape < 1.0)
      return std::log(gamma(shape + 1.0)) + std::log(uniform_pos()) / shape;
    return std::log(gamma(shape));
  }

  // log of a Dirichlet(conc) draw: log-gamma variates normalized by their
  // log-sum-exp.  Entries are always finite, even for concentrations small
  // enough that the probabilities themselves underflow.
  std::vector<double> dirichlet_log(const std::vector<double>& conc) {
    if (conc.empty()) throw domain_error("dirichlet needs at least one component");
    std::vector<double> lg(conc.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < conc.size(); ++i) {
      lg[i] = log_gamma(conc[i]);
      mx = std::max(mx, lg[i]);
    }
    double total = 0.0;
    for (double v : lg) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (double& v : lg) v -= lse;
    return lg;
  }

  // Dirichlet(conc) draw as probabilities, renormalized so the sum is exactly
  // machine-1.
  std::vector<double> dirichlet(const std::vector<double>& conc) {
    std::vector<double> s = dirichlet_log(conc);
    double total = 0.0;
    for (double& v : s) {
      v = std::exp(v);
      total += v;
    }
    for (double& v : s) v /= total;
    return s;
  }

  // Index draw from a normalized probability vector.
  int categorical(const std::vector<double>& probs) {
    if (probs.empty()) throw domain_error("categorical needs at least one class");
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
      acc += probs[j];
      if (u < acc) return static_cast<int>(j);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sbtrees

#endif
