#ifndef DRIFTWATCH_RNG_HPP
#define DRIFTWATCH_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "driftwatch/common.hpp"

namespace dw {

// splitmix64 — used both to expand seeds and to derive independent substreams
// from (seed, tag...) tuples so that results do not depend on thread count.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b));
}

// Random engine with hand-rolled variate algorithms.  The std:: distribution
// objects are implementation-defined, which would break the byte-identical
// output contract, so every draw here is pinned to a fixed algorithm.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : eng_(splitmix64(seed ^ 0xda3e39cb94b95bdbULL)) {}

    // independent substream derived from this stream's seed and tags
    static Rng substream(std::uint64_t seed, std::uint64_t t1, std::uint64_t t2 = 0,
                         std::uint64_t t3 = 0) {
        return Rng(mix_seed(mix_seed(mix_seed(seed, t1), t2), t3));
    }

    std::uint64_t raw() { return eng_(); }

    double uniform() {
        // 53-bit mantissa uniform in (0, 1)
        return ((eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // uniform integer in [0, n)
    int uniform_int(int n) {
        return static_cast<int>(std::min<std::uint64_t>(
            n - 1, static_cast<std::uint64_t>(uniform() * n)));
    }

    double normal() {
        // Marsaglia polar method with cached spare
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double exponential(double rate = 1.0) { return -std::log(uniform()) / rate; }

    // Gamma(shape, rate) via Marsaglia–Tsang; shape < 1 handled by boosting
    double gamma(double shape, double rate = 1.0) {
        if (shape <= 0.0 || rate <= 0.0) throw error("gamma: parameters must be positive");
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

    double chisq(double dof) { return gamma(0.5 * dof, 0.5); }

    double beta(double a, double b) {
        double x = gamma(a), y = gamma(b);
        return x / (x + y);
    }

    // standard normal truncated to [lo, hi]; either bound may be infinite
    double trunc_normal(double lo, double hi) {
        if (!(lo < hi)) throw error("trunc_normal: empty interval");
        if (lo == -kInf && hi == kInf) return normal();
        if (lo == -kInf) return -trunc_lower(-hi);
        if (hi == kInf) return trunc_lower(lo);
        return trunc_two_sided(lo, hi);
    }

    double trunc_normal(double mean, double sd, double lo, double hi) {
        return mean + sd * trunc_normal((lo - mean) / sd, (hi - mean) / sd);
    }

private:
    // N(0,1) | X >= a
    double trunc_lower(double a) {
        if (a < 0.45) {  // plain rejection stays cheap
            for (;;) {
                double x = normal();
                if (x >= a) return x;
            }
        }
        // Robert (1995) translated-exponential rejection for the tail
        const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
        for (;;) {
            double x = a + exponential(alpha);
            double rho = std::exp(-0.5 * sq(x - alpha));
            if (uniform() <= rho) return x;
        }
    }

    double trunc_two_sided(double a, double b) {
        if (a <= 0.0 && b >= 0.0 && (b - a) > 1.0) {  // interval covers the mode
            for (;;) {
                double x = normal();
                if (x >= a && x <= b) return x;
            }
        }
        // uniform rejection against the restricted density envelope
        for (;;) {
            double x = uniform(a, b);
            double m = (a > 0.0) ? a : ((b < 0.0) ? b : 0.0);
            double rho = std::exp(0.5 * (m * m - x * x));
            if (uniform() <= rho) return x;
        }
    }

    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// standard normal CDF
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

inline double norm_logpdf(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * M_PI); }

}  // namespace dw

#endif
