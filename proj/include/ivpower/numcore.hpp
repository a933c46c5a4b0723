#pragma once

// Numerical primitives shared by every other module: univariate and bivariate
// standard normal CDFs, the Gaussian copula, the inverse normal CDF,
// Gauss-Hermite nodes and seeded random streams.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace ivpower {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// A probability. Construction rejects values outside [0,1]; use clamped() for
// results of floating point arithmetic that may stray by a rounding error.
class Prob {
public:
    constexpr Prob() = default;
    explicit Prob(double v) : v_(v) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::domain_error("probability outside [0,1]: " + std::to_string(v));
    }
    static Prob clamped(double v, double slack = 1e-9) {
        if (!(v >= -slack && v <= 1.0 + slack))
            throw std::domain_error("probability outside [0,1]: " + std::to_string(v));
        return Prob(std::clamp(v, 0.0, 1.0));
    }
    constexpr double value() const noexcept { return v_; }
    constexpr operator double() const noexcept { return v_; }

private:
    double v_ = 0.0;
};

// Dependence parameter of the error copula, strictly inside (-1,1).
class Corr {
public:
    explicit Corr(double v) : v_(v) {
        if (!(std::abs(v) < 1.0))
            throw std::domain_error("correlation must satisfy |rho| < 1, got " + std::to_string(v));
    }
    constexpr double value() const noexcept { return v_; }
    constexpr operator double() const noexcept { return v_; }

private:
    double v_;
};

inline double std_normal_pdf(double z) noexcept {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

// erfc keeps full relative precision in the tails.
inline double normal_cdf(double z) noexcept {
    if (z == kInf) return 1.0;
    if (z == -kInf) return 0.0;
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

inline Prob std_normal_cdf(double z) {
    if (std::isnan(z)) throw std::domain_error("std_normal_cdf: NaN argument");
    return Prob(normal_cdf(z));
}

namespace detail {

template <std::size_t N>
constexpr double horner(double x, const std::array<double, N>& c) noexcept {
    double r = 0.0;
    for (double ci : c) r = r * x + ci;
    return r;
}

// Acklam's rational approximation, relative error about 1e-9 before refinement.
inline double acklam(double p) noexcept {
    constexpr std::array<double, 6> a = {-3.969683028665376e+01, 2.209460984245205e+02,
                                         -2.759285104469687e+02, 1.383577518672690e+02,
                                         -3.066479806614716e+01, 2.506628277459239e+00};
    constexpr std::array<double, 6> b = {-5.447609879822406e+01, 1.615858368580409e+02,
                                         -1.556989798598866e+02, 6.680131188771972e+01,
                                         -1.328068155288572e+01, 1.0};
    constexpr std::array<double, 6> c = {-7.784894002430293e-03, -3.223964580411365e-01,
                                         -2.400758277161838e+00, -2.549732539343734e+00,
                                         4.374664141464968e+00,  2.938163982698783e+00};
    constexpr std::array<double, 5> d = {7.784695709041462e-03, 3.224671290700398e-01,
                                         2.445134137142996e+00, 3.754408661907416e+00, 1.0};
    constexpr double p_low = 0.02425;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return horner(q, c) / horner(q, d);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        return -horner(q, c) / horner(q, d);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return q * horner(r, a) / horner(r, b);
}

}  // namespace detail

// Inverse of the standard normal CDF. One Halley step on top of Acklam's
// approximation brings the error to the level of double rounding.
inline double inv_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("inv_normal_cdf requires 0 < p < 1, got " + std::to_string(p));
    double x = detail::acklam(p);
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

namespace detail {

// Upper orthant probability Pr[X > h, Y > k] for a standard bivariate normal
// with correlation r. Drezner-Wesolowsky reduction to a single integral with
// fixed 6/12/20-point Gauss-Legendre rules (Genz's BVNU).
inline double bvn_upper(double h, double k, double r) noexcept {
    static constexpr double w[3][10] = {
        {0.1713244923791705, 0.3607615730481384, 0.4679139345726904},
        {0.04717533638651177, 0.1069393259953183, 0.1600783285433464, 0.2031674267230659,
         0.2334925365383547, 0.2491470458134029},
        {0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
         0.1019301198172404, 0.1181945319615184, 0.1316886384491766, 0.1420961093183821,
         0.1491729864726037, 0.1527533871307259}};
    static constexpr double x[3][10] = {
        {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970},
        {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050, -0.5873179542866171,
         -0.3678314989981802, -0.1252334085114692},
        {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259, -0.8391169718222188,
         -0.7463319064601508, -0.6360536807265150, -0.5108670019508271, -0.3737060887154196,
         -0.2277858511416451, -0.07652652113349733}};
    constexpr double two_pi = 2.0 * std::numbers::pi;

    int ng = 2;
    int lg = 10;
    if (std::abs(r) < 0.3) {
        ng = 0;
        lg = 3;
    } else if (std::abs(r) < 0.75) {
        ng = 1;
        lg = 6;
    }

    double hk = h * k;
    double bvn = 0.0;
    if (std::abs(r) < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r);
        for (int i = 0; i < lg; ++i) {
            double sn = std::sin(asr * (x[ng][i] + 1.0) / 2.0);
            bvn += w[ng][i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            sn = std::sin(asr * (-x[ng][i] + 1.0) / 2.0);
            bvn += w[ng][i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
        return bvn * asr / (2.0 * two_pi) + normal_cdf(-h) * normal_cdf(-k);
    }

    if (r < 0.0) {
        k = -k;
        hk = -hk;
    }
    if (std::abs(r) < 1.0) {
        const double as = (1.0 - r) * (1.0 + r);
        double a = std::sqrt(as);
        const double bs = (h - k) * (h - k);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 16.0;
        bvn = a * std::exp(-(bs / as + hk) / 2.0) *
              (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
        if (hk > -160.0) {
            const double b = std::sqrt(bs);
            bvn -= std::exp(-hk / 2.0) * std::sqrt(two_pi) * normal_cdf(-b / a) * b *
                   (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a /= 2.0;
        for (int i = 0; i < lg; ++i) {
            for (double sgn : {-1.0, 1.0}) {
                const double xs = (a * (sgn * x[ng][i] + 1.0)) * (a * (sgn * x[ng][i] + 1.0));
                const double rs = std::sqrt(1.0 - xs);
                const double asr = -(bs / xs + hk) / 2.0;
                if (asr > -100.0) {
                    bvn += a * w[ng][i] * std::exp(asr) *
                           (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                            (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / two_pi;
    }
    if (r > 0.0) return bvn + normal_cdf(-std::max(h, k));
    bvn = -bvn;
    if (k > h) {
        if (h < 0.0)
            bvn += normal_cdf(k) - normal_cdf(h);
        else
            bvn += normal_cdf(-h) - normal_cdf(-k);
    }
    return bvn;
}

inline constexpr double kBvnTail = 1e-7;

// int_{-inf}^{a} phi(t) Phi((b - rho t)/sqrt(1-rho^2)) dt by adaptive
// Gauss-Kronrod, integrating over the coordinate with the smaller limit.
inline double bvn_conditional(double a, double b, double rho) {
    if (b < a) std::swap(a, b);
    const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
    auto f = [&](double t) {
        return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi) * normal_cdf((b - rho * t) / s);
    };
    const double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, -std::numeric_limits<double>::infinity(), a, 15, 1e-12);
    return std::clamp(v, 0.0, normal_cdf(a));
}

}  // namespace detail

inline constexpr double kCorrClamp = 1.0 - 1e-10;

// Pr[X <= a, Y <= b] for a standard bivariate normal with correlation rho.
// Infinite arguments reduce to the univariate margin. Beyond |rho| = 1 - 1e-10
// the comonotone / countermonotone limits are used. Raw doubles in, raw double
// out: this is the hot path of every likelihood and bound evaluation.
inline double bvn_cdf(double a, double b, double rho) {
    if (!(std::abs(rho) < 1.0))
        throw std::domain_error("bivariate_normal_cdf: |rho| must be < 1");
    if (std::isnan(a) || std::isnan(b)) throw std::domain_error("bivariate_normal_cdf: NaN");
    if (a == -kInf || b == -kInf) return 0.0;
    if (a == kInf) return normal_cdf(b);
    if (b == kInf) return normal_cdf(a);
    if (rho >= kCorrClamp) return normal_cdf(std::min(a, b));
    if (rho <= -kCorrClamp) return std::max(normal_cdf(a) + normal_cdf(b) - 1.0, 0.0);
    const double v = detail::bvn_upper(-a, -b, rho);
    // The reduction is accurate in absolute terms only; small probabilities
    // are recomputed from the conditional form, whose integrand is positive.
    if (v < detail::kBvnTail) return detail::bvn_conditional(a, b, rho);
    return std::clamp(v, 0.0, std::min(normal_cdf(a), normal_cdf(b)));
}

inline Prob bivariate_normal_cdf(double a, double b, Corr rho) {
    return Prob(bvn_cdf(a, b, rho.value()));
}

// Density of the standard bivariate normal.
inline double bvn_pdf(double a, double b, double rho) noexcept {
    const double om = 1.0 - rho * rho;
    return std::exp(-(a * a - 2.0 * rho * a * b + b * b) / (2.0 * om)) /
           (2.0 * std::numbers::pi * std::sqrt(om));
}

// Gaussian copula C(u1,u2;rho) = Phi2(Phi^-1(u1), Phi^-1(u2); rho).
inline Prob gaussian_copula(Prob u1, Prob u2, Corr rho) {
    if (u1.value() == 0.0 || u2.value() == 0.0) return Prob(0.0);
    if (u1.value() == 1.0) return u2;
    if (u2.value() == 1.0) return u1;
    const double v = bvn_cdf(inv_normal_cdf(u1), inv_normal_cdf(u2), rho.value());
    // Frechet-Hoeffding bounds absorb rounding in the quantile round trip.
    const double lo = std::max(u1.value() + u2.value() - 1.0, 0.0);
    const double hi = std::min(u1.value(), u2.value());
    return Prob(std::clamp(v, lo, hi));
}

// Nodes and weights for E[f(Z)], Z ~ N(0,1) (probabilists' Hermite). Newton
// iteration on the orthonormal recurrence.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline QuadratureRule gauss_hermite(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: n must be positive");
    QuadratureRule rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);
    const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
    const int m = (n + 1) / 2;
    double z = 0.0;
    // Physicists' roots first, then rescale by sqrt(2).
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * rule.nodes[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * rule.nodes[1];
        else
            z = 2.0 * z - rule.nodes[i - 2];
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4;
            double p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15) break;
        }
        rule.nodes[i] = z;
        rule.nodes[n - 1 - i] = -z;
        rule.weights[i] = 2.0 / (pp * pp);
        rule.weights[n - 1 - i] = rule.weights[i];
    }
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] *= std::numbers::sqrt2;
        rule.weights[i] /= std::sqrt(std::numbers::pi);
    }
    std::reverse(rule.nodes.begin(), rule.nodes.end());
    std::reverse(rule.weights.begin(), rule.weights.end());
    return rule;
}

// A seeded random stream. The same (seed, stream_id) always yields the same
// sequence; distinct stream ids seed the engine through different seed_seq
// words. Variates are built from raw engine output so sequences do not depend
// on the standard library's distribution implementations.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_(stream_id) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream_id),
                          static_cast<std::uint32_t>(stream_id >> 32), 0x9e3779b9u};
        engine_.seed(seq);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }

    // Uniform on the open interval (0,1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() { return inv_normal_cdf(uniform()); }

    bool bernoulli(double p) { return uniform() < p; }

    // Index in [0, n).
    std::size_t uniform_index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: empty range");
        return std::min(static_cast<std::size_t>(uniform() * static_cast<double>(n)), n - 1);
    }

    // Index drawn with the given probabilities (assumed to sum to one).
    std::size_t discrete(std::span<const double> probs) {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return probs.size() - 1;
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

inline RngStream rng_stream(std::uint64_t seed, std::uint64_t stream_id) {
    return RngStream(seed, stream_id);
}

}  // namespace ivpower
