#pragma once

// Deterministic, platform-independent random number generation.
//
// The standard library's engines are portable but its distributions are not
// (uniform_real_distribution etc. are implementation-defined), so every draw
// here is spelled out explicitly: xoshiro256++ as the generator, splitmix64
// for seeding and stream derivation, and fixed-order inverse-CDF sampling for
// discrete draws.  Two runs with the same seed produce bit-identical streams
// on any conforming platform.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "preflab/errors.hpp"

namespace preflab {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed, a purpose tag and an
// index, so that e.g. every experiment cell owns its own stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t index = 0) {
  std::uint64_t s = base;
  std::uint64_t a = splitmix64_next(s);
  s ^= 0x6a09e667f3bcc909ULL + tag;
  std::uint64_t b = splitmix64_next(s);
  s ^= 0xbb67ae8584caa73bULL + index;
  std::uint64_t c = splitmix64_next(s);
  return a ^ (b << 1 | b >> 63) ^ c;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64_next(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) by scaling; n is small throughout this project,
  // so the (sub-2^-53) modulo bias of scaling is irrelevant and determinism
  // is simpler than rejection.
  int uniform_int(int n) {
    if (n <= 0) throw InvalidInputError("uniform_int: n must be positive");
    int v = static_cast<int>(uniform() * static_cast<double>(n));
    return v < n ? v : n - 1;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (explicit, platform-stable up to libm).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Inverse-CDF draw from a probability vector, scanning in index order.
  int categorical(const Eigen::VectorXd& probs) {
    const double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return static_cast<int>(probs.size()) - 1;  // guard against rounding at the top end
  }

  // Uniform draw from the standard simplex in R^{dim} (flat Dirichlet) via
  // normalized exponential spacings.
  Eigen::VectorXd simplex_uniform(int dim) {
    Eigen::VectorXd e(dim);
    for (int i = 0; i < dim; ++i) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      e[i] = -std::log(u);
    }
    return e / e.sum();
  }

  // Deterministic Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
      std::swap(items[static_cast<std::size_t>(i)],
                items[static_cast<std::size_t>(uniform_int(i + 1))]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

}  // namespace preflab
