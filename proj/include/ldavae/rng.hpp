#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace ldavae {

/// Deterministic random source. All variates are derived from mt19937_64
/// through explicit transforms (not std::*_distribution, whose output is
/// implementation-defined), so a seed pins the exact stream everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform01();  // (0, 1]
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang; boost trick for shape < 1.
    double gamma(double shape) {
        if (shape <= 0.0) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            double u = uniform01();
            while (u == 0.0) u = uniform01();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
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
            double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Dirichlet draw from a dense alpha vector.
    std::vector<double> dirichlet(const std::vector<double>& alpha) {
        std::vector<double> g(alpha.size());
        double total = 0.0;
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            g[i] = gamma(alpha[i]);
            total += g[i];
        }
        if (total <= 0.0) total = 1.0;
        for (double& v : g) v /= total;
        return g;
    }

    /// Categorical draw from an (unnormalized) weight vector.
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = uniform01() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.size() - 1;
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ldavae
