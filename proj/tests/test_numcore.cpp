#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <ivpower/numcore.hpp>

#include "oracles.hpp"

using namespace ivpower;

// Values frozen from the oracles in oracles.hpp.
constexpr double kPhi_1_1 = 0.8643339390536173;
constexpr double kPhi_m0_6 = 0.2742531177500736;
constexpr double kBvn_05_m03_04 = 0.3171269282861651;
constexpr double kInv_0975 = 1.959963984540054;

TEST(StdNormalCdf, FrozenValues) {
    EXPECT_DOUBLE_EQ(double(std_normal_cdf(0.0)), 0.5);
    EXPECT_NEAR(double(std_normal_cdf(1.1)), kPhi_1_1, 1e-10);
    EXPECT_NEAR(double(std_normal_cdf(-0.6)), kPhi_m0_6, 1e-10);
}

TEST(StdNormalCdf, MatchesSeriesOracle) {
    for (double z = -8.0; z <= 8.0; z += 0.173)
        EXPECT_NEAR(double(std_normal_cdf(z)), oracle::Phi(z), 1e-10) << z;
    EXPECT_NEAR(oracle::Phi(1.1), kPhi_1_1, 1e-14);
}

TEST(StdNormalCdf, MonotoneAndSaturating) {
    double prev = 0.0;
    for (double z = -40.0; z <= 40.0; z += 0.01) {
        const double v = std_normal_cdf(z);
        ASSERT_GE(v, prev);
        prev = v;
    }
    EXPECT_EQ(double(std_normal_cdf(-60.0)), 0.0);
    EXPECT_EQ(double(std_normal_cdf(60.0)), 1.0);
}

TEST(BivariateNormal, ClosedFormAtOrigin) {
    for (int k = -9; k <= 9; ++k) {
        const double r = 0.1 * k;
        EXPECT_NEAR(double(bivariate_normal_cdf(0, 0, Corr(r))), 0.25 + std::asin(r) / (2 * std::numbers::pi), 1e-8);
    }
    EXPECT_NEAR(double(bivariate_normal_cdf(0, 0, Corr(0.5))), 1.0 / 3.0, 1e-12);
}

TEST(BivariateNormal, ReductionsAndSymmetry) {
    EXPECT_NEAR(double(bivariate_normal_cdf(0, 0, Corr(0))), 0.25, 1e-15);
    EXPECT_NEAR(double(bivariate_normal_cdf(kInf, -0.6, Corr(0.7))), kPhi_m0_6, 1e-12);
    EXPECT_EQ(double(bivariate_normal_cdf(-kInf, 0.3, Corr(0.2))), 0.0);
    RngStream rng(11, 0);
    for (int i = 0; i < 200; ++i) {
        const double a = 4 * rng.normal(), b = 4 * rng.normal(), r = 1.98 * rng.uniform() - 0.99;
        EXPECT_NEAR(bvn_cdf(a, b, r), bvn_cdf(b, a, r), 1e-14);
        EXPECT_NEAR(bvn_cdf(a, b, 0.0), normal_cdf(a) * normal_cdf(b), 1e-14);
    }
}

TEST(BivariateNormal, MatchesQuadratureOracle) {
    EXPECT_NEAR(double(bivariate_normal_cdf(0.5, -0.3, Corr(0.4))), kBvn_05_m03_04, 1e-8);
    EXPECT_NEAR(oracle::bvn(0.5, -0.3, 0.4), kBvn_05_m03_04, 1e-11);
    RngStream rng(5, 1);
    for (int i = 0; i < 60; ++i) {
        const double a = 3 * rng.normal(), b = 3 * rng.normal(), r = 1.9 * rng.uniform() - 0.95;
        EXPECT_NEAR(bvn_cdf(a, b, r), oracle::bvn(a, b, r), 1e-8) << a << ' ' << b << ' ' << r;
    }
}

TEST(BivariateNormal, RelativeAccuracyInTheTail) {
    // Frozen from the conditional-form oracle at 40 digits.
    EXPECT_NEAR(bvn_cdf(-0.465326, -3.63117, -0.917562) / 1.351348626155476e-26, 1.0, 1e-9);
    EXPECT_NEAR(bvn_cdf(0.6133, -3.74968, -0.917562) / 9.794080200042021e-18, 1.0, 1e-9);
    EXPECT_NEAR(bvn_cdf(-1.7756, -1.10331, -0.910309) / 1.226396738152631e-13, 1.0, 1e-9);
    RngStream rng(8, 8);
    for (int i = 0; i < 40; ++i) {
        const double a = -1 - 3 * rng.uniform(), b = -1 - 3 * rng.uniform(), r = -0.99 + 1.5 * rng.uniform();
        const double ref = oracle::bvn(a, b, r);
        EXPECT_NEAR(bvn_cdf(a, b, r) / ref, 1.0, 1e-7) << a << ' ' << b << ' ' << r;
    }
}

TEST(BivariateNormal, RejectsUnitCorrelation) {
    EXPECT_THROW(bvn_cdf(0, 0, 1.0), std::domain_error);
    EXPECT_THROW(Corr(-1.0), std::domain_error);
}

TEST(BivariateNormal, NearUnitCorrelationLimits) {
    EXPECT_NEAR(bvn_cdf(0.3, -0.2, 1.0 - 1e-12), normal_cdf(-0.2), 1e-9);
    EXPECT_NEAR(bvn_cdf(0.3, 0.2, -1.0 + 1e-12), std::max(normal_cdf(0.3) + normal_cdf(0.2) - 1.0, 0.0), 1e-9);
}

TEST(BivariateNormal, MonotoneAndRectanglePositive) {
    RngStream rng(42, 7);
    for (int i = 0; i < 10000; ++i) {
        double a1 = 3 * rng.normal(), a2 = 3 * rng.normal();
        double b1 = 3 * rng.normal(), b2 = 3 * rng.normal();
        if (a1 > a2) std::swap(a1, a2);
        if (b1 > b2) std::swap(b1, b2);
        const double r = 1.98 * rng.uniform() - 0.99;
        ASSERT_LE(bvn_cdf(a1, b1, r), bvn_cdf(a2, b1, r) + 1e-15);
        const double rect = bvn_cdf(a2, b2, r) - bvn_cdf(a1, b2, r) - bvn_cdf(a2, b1, r) + bvn_cdf(a1, b1, r);
        ASSERT_GE(rect, -1e-12);
    }
}

TEST(GaussianCopula, MarginsAndProduct) {
    EXPECT_NEAR(double(gaussian_copula(Prob(0.7), Prob(1.0), Corr(0.9))), 0.7, 1e-15);
    EXPECT_EQ(double(gaussian_copula(Prob(0.7), Prob(0.0), Corr(0.9))), 0.0);
    EXPECT_NEAR(double(gaussian_copula(Prob(0.6), Prob(0.5), Corr(0))), 0.30, 1e-14);
    const double viaBvn = oracle::bvn(oracle::Phi_inv(0.8413), oracle::Phi_inv(0.274), 0.5);
    EXPECT_NEAR(double(gaussian_copula(Prob(0.8413), Prob(0.274), Corr(0.5))), viaBvn, 1e-8);
}

TEST(GaussianCopula, FrechetBoundsOnRandomTriples) {
    RngStream rng(3, 3);
    for (int i = 0; i < 10000; ++i) {
        const double u1 = rng.uniform(), u2 = rng.uniform(), r = 1.98 * rng.uniform() - 0.99;
        const double c = gaussian_copula(Prob(u1), Prob(u2), Corr(r));
        ASSERT_GE(c, std::max(u1 + u2 - 1.0, 0.0) - 1e-12);
        ASSERT_LE(c, std::min(u1, u2) + 1e-12);
    }
}

TEST(GaussianCopula, ConcordanceOrdering) {
    for (double u1 = 0.05; u1 < 1.0; u1 += 0.15)
        for (double u2 = 0.05; u2 < 1.0; u2 += 0.15) {
            double prev = -1.0;
            for (double r = -0.95; r <= 0.95; r += 0.05) {
                const double c = gaussian_copula(Prob(u1), Prob(u2), Corr(r));
                ASSERT_GE(c, prev - 1e-12);
                prev = c;
            }
        }
}

TEST(InvNormalCdf, ValuesAndRoundTrip) {
    EXPECT_EQ(inv_normal_cdf(0.5), 0.0);
    EXPECT_NEAR(inv_normal_cdf(0.975), kInv_0975, 1e-9);
    EXPECT_NEAR(oracle::Phi_inv(0.975), kInv_0975, 1e-12);
    EXPECT_NEAR(inv_normal_cdf(kPhi_1_1), 1.1, 1e-9);
    for (double p = 1e-12; p < 1.0; p = p < 0.01 ? p * 10 : p + 0.01)
        EXPECT_NEAR(double(std_normal_cdf(inv_normal_cdf(p))), p, 1e-9 * std::max(1.0, p));
    EXPECT_THROW(inv_normal_cdf(0.0), std::domain_error);
    EXPECT_THROW(inv_normal_cdf(1.0), std::domain_error);
}

TEST(Prob, RejectsOutOfRange) {
    EXPECT_THROW(Prob(1.5), std::domain_error);
    EXPECT_THROW(Prob(-0.1), std::domain_error);
    EXPECT_EQ(double(Prob::clamped(1.0 + 1e-12)), 1.0);
}

TEST(GaussHermite, IntegratesMoments) {
    const auto rule = gauss_hermite(64);
    double s0 = 0, s2 = 0, s4 = 0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        s0 += rule.weights[i];
        s2 += rule.weights[i] * std::pow(rule.nodes[i], 2);
        s4 += rule.weights[i] * std::pow(rule.nodes[i], 4);
    }
    EXPECT_NEAR(s0, 1.0, 1e-12);
    EXPECT_NEAR(s2, 1.0, 1e-10);
    EXPECT_NEAR(s4, 3.0, 1e-9);
}

TEST(RngStream, Deterministic) {
    RngStream a(42, 0), b(42, 0), c(42, 1);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const double x = a.uniform();
        EXPECT_EQ(x, b.uniform());
        differs = differs || x != c.uniform();
    }
    EXPECT_TRUE(differs);
}

TEST(RngStream, UniformMeanWithinClt) {
    RngStream r(7, 3);
    double s = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) s += r.uniform();
    EXPECT_NEAR(s / n, 0.5, 0.005);
}

TEST(RngStream, NormalMoments) {
    RngStream r(9, 2);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.01);
}
