#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dro {

using Vec = Eigen::VectorXd;
// Row-major so per-sample feature rows are contiguous.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed config, invalid flag combination, missing file.
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed or inconsistent dataset contents.
struct DataError : Error {
    using Error::Error;
};

/// Raised when the exponent of the inner map exceeds the overflow guard,
/// i.e. the configured temperature floor is too small for the loss scale.
struct OverflowGuardError : Error {
    int sample;
    double exponent;
    OverflowGuardError(int sample_, double exponent_)
        : Error("overflow guard tripped at sample " + std::to_string(sample_) +
                ": exponent " + std::to_string(exponent_)),
          sample(sample_), exponent(exponent_) {}
};

/// Raised when a theory-mode stage schedule asks for more iterations than
/// the configured budget. Carries the offending stage length so the caller
/// can report the theoretical cost.
struct BudgetExceededError : Error {
    double required_iters;
    explicit BudgetExceededError(double required)
        : Error("stage schedule requires " + std::to_string(required) +
                " iterations, over budget"),
          required_iters(required) {}
};

/// Numeric failure in an iterative routine (e.g. bisection did not converge).
struct NumericError : Error {
    using Error::Error;
};

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/**
 * Seeded random stream. The engine is std::mt19937_64; the draw methods are
 * spelled out here (instead of std:: distributions) so that a given seed
 * produces identical streams on every platform and standard library.
 */
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t raw() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform index in [0, n); rejection sampling, no modulo bias.
    std::size_t index(std::size_t n) {
        if (n == 0) throw Error("Rng::index: empty range");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<std::size_t>(x % n);
    }

    /// Standard normal via Box-Muller (one variate per call, no cached spare).
    double normal() {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    Vec normal_vec(Eigen::Index n) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    /// Independent child stream derived from this stream's seed and a tag.
    Rng child(std::string_view tag) const {
        return Rng(fnv1a64(tag, seed_ ^ 0x9e3779b97f4a7c15ull));
    }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace dro
