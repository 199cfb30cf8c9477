#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "jumpfbsde/condexp.hpp"
#include "jumpfbsde/forward.hpp"

using namespace jumpfbsde;

namespace {

std::vector<double> normal_sample(std::size_t n, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

ProblemSpec driftless() {
    ProblemSpec s;
    s.drift = [](double, double) { return 0.0; };
    s.diffusion = [](double, double) { return 1.0; };
    s.jump_size = [](double, double) { return 0.0; };
    s.terminal = [](double x) { return x; };
    s.generator = [](double, double, double, double, double) { return 0.0; };
    s.jump = JumpModel::constant(1.0);
    return s;
}

}  // namespace

TEST(Fit, ConstantTargetIsReproducedEverywhere) {
    const auto x = normal_sample(200, 1);
    const std::vector<double> y(200, 2.5);
    for (const auto& basis : {BasisSpec::polynomial(3), BasisSpec::local(4)}) {
        const auto f = fit(basis, x, y);
        EXPECT_TRUE(f.diagnostics().constant_target);
        for (double s : {-10.0, -0.3, 0.0, 1.7, 50.0}) EXPECT_EQ(evaluate(f, s), 2.5);
    }
}

TEST(Fit, IdentityTargetIsReproduced) {
    const auto x = normal_sample(1000, 2);
    const auto f = fit(BasisSpec::polynomial(1), x, x);
    EXPECT_NEAR(f(0.3), 0.3, 1e-12);
    for (std::size_t k = 0; k < x.size(); k += 37) EXPECT_NEAR(f(x[k]), x[k], 1e-12 * (1.0 + std::abs(x[k])));
}

TEST(Fit, QuadraticPlusNoiseRecoversCoefficients) {
    const std::size_t N = 100000;
    const auto x = normal_sample(N, 3);
    const auto eps = normal_sample(N, 4);
    std::vector<double> y(N);
    for (std::size_t k = 0; k < N; ++k) y[k] = x[k] * x[k] + eps[k];
    const auto f = fit(BasisSpec::polynomial(2, false), x, y);

    Eigen::Matrix3d gram = Eigen::Matrix3d::Zero();
    for (double s : x) {
        const Eigen::Vector3d phi(1.0, s, s * s);
        gram += phi * phi.transpose();
    }
    const Eigen::Matrix3d cov = gram.ldlt().solve(Eigen::Matrix3d::Identity());
    const double sigma2 = f.diagnostics().residual_rms * f.diagnostics().residual_rms * N / (N - 3.0);
    const Eigen::Vector3d truth(0.0, 0.0, 1.0);
    for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(f.coefficients()(k), truth(k), 3.0 * std::sqrt(sigma2 * cov(k, k))) << k;
    }
    EXPECT_NEAR(f(2.0), 4.0, 0.05);
}

TEST(Fit, ProjectionPropertyForTargetsInSpan) {
    const auto x = normal_sample(5000, 5, 2.0);
    std::vector<double> y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = 1.5 - 2.0 * x[k] + 0.25 * x[k] * x[k] * x[k];
    const auto f = fit(BasisSpec::polynomial(3), x, y, 3);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(f(x[k]), y[k], 1e-8 * std::max(1.0, std::abs(y[k])));
}

TEST(Fit, LocalBasisReproducesPiecewiseLinearTarget) {
    std::vector<double> x(400), y(400);
    for (std::size_t k = 0; k < x.size(); ++k) {
        x[k] = -2.0 + 4.0 * static_cast<double>(k) / 399.0;
        y[k] = std::abs(x[k]);
    }
    const auto f = fit(BasisSpec::local(4), x, y);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_NEAR(f(x[k]), y[k], 1e-10);
    EXPECT_NEAR(f(5.0), 2.0, 1e-10);
}

TEST(Fit, ResidualIsOrthogonalToBasis) {
    const auto x = normal_sample(3000, 6);
    const auto eps = normal_sample(3000, 7);
    std::vector<double> y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = std::sin(2.0 * x[k]) + 0.1 * eps[k];
    const auto f = fit(BasisSpec::polynomial(3), x, y);
    double phi[4];
    Eigen::Vector4d dot = Eigen::Vector4d::Zero(), scale = Eigen::Vector4d::Zero();
    for (std::size_t k = 0; k < x.size(); ++k) {
        f.features().eval(x[k], phi);
        const double r = y[k] - f(x[k]);
        for (int c = 0; c < 4; ++c) {
            dot(c) += phi[c] * r;
            scale(c) += std::abs(phi[c] * y[k]);
        }
    }
    for (int c = 0; c < 4; ++c) EXPECT_LT(std::abs(dot(c)), 1e-8 * scale(c)) << c;
}

TEST(Fit, RankDeficientDesignIsFlaggedWithMinimumNormSolution) {
    std::vector<double> x(100), y(100);
    for (std::size_t k = 0; k < x.size(); ++k) {
        x[k] = k % 2 ? 1.0 : -1.0;
        y[k] = k % 2 ? 3.0 : 1.0;
    }
    const auto f = fit(BasisSpec::polynomial(3), x, y);
    EXPECT_TRUE(f.diagnostics().rank_deficient);
    EXPECT_EQ(f.diagnostics().rank, 2u);
    EXPECT_NEAR(f(1.0), 3.0, 1e-9);
    EXPECT_NEAR(f(-1.0), 1.0, 1e-9);
    // Standardized states are +-1, so phi = (1, s, s^2, s^3) with s^2 = 1, s^3 = s.
    // Minimum norm splits the mean over {1, s^2} and the slope over {s, s^3}.
    const auto& c = f.coefficients();
    EXPECT_NEAR(c(0), 1.0, 1e-9);
    EXPECT_NEAR(c(2), 1.0, 1e-9);
    EXPECT_NEAR(c(1), 0.5, 1e-9);
    EXPECT_NEAR(c(3), 0.5, 1e-9);
}

TEST(Fit, DegenerateStatesUseConstantBasis) {
    const std::vector<double> x(50, 0.7);
    const auto y = normal_sample(50, 8);
    const auto f = fit(BasisSpec::polynomial(3), x, y);
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= 50.0;
    EXPECT_NEAR(f(0.7), mean, 1e-12);
    EXPECT_NEAR(f(-3.0), mean, 1e-12);
}

TEST(Fit, BitIdenticalAcrossThreadCounts) {
    const auto x = normal_sample(20000, 9);
    const auto e = normal_sample(20000, 10);
    std::vector<double> y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = std::exp(0.3 * x[k]) + e[k];
    const auto a = fit(BasisSpec::polynomial(4), x, y, 1);
    const auto b = fit(BasisSpec::polynomial(4), x, y, 4);
    const auto c = fit(BasisSpec::polynomial(4), x, y, 1);
    EXPECT_TRUE((a.coefficients().array() == b.coefficients().array()).all());
    EXPECT_TRUE((a.coefficients().array() == c.coefficients().array()).all());
}

TEST(Fit, RejectsSmallSamplesAndNonFiniteInput) {
    const auto x = normal_sample(39, 11);
    EXPECT_THROW(fit(BasisSpec::polynomial(3), x, x), std::invalid_argument);
    auto y = normal_sample(40, 12);
    auto s = normal_sample(40, 13);
    EXPECT_NO_THROW(fit(BasisSpec::polynomial(3), s, y));
    y[5] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(fit(BasisSpec::polynomial(3), s, y), std::invalid_argument);
    y[5] = 0.0;
    s[7] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(fit(BasisSpec::polynomial(3), s, y), std::invalid_argument);
    EXPECT_THROW(fit(BasisSpec::polynomial(-1), s, y), std::invalid_argument);
}

TEST(StepRegression, JointEstimatorIsExactForBrownianTarget) {
    const double dt = 0.05;
    const auto x = normal_sample(4000, 14);
    auto dw = normal_sample(4000, 15, std::sqrt(dt));
    std::vector<double> y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] + dw[k];
    const StepRegression r(BasisSpec::polynomial(3), x, y, dw, dt, ZEstimator::joint);
    for (double s : {-1.0, 0.0, 0.4, 2.0}) {
        double v = 0.0, z = 0.0;
        r(s, v, z);
        EXPECT_NEAR(v, s, 1e-9);
        EXPECT_NEAR(z, 1.0, 1e-9);
    }
}

TEST(StepRegression, SeparateEstimatorIsConsistent) {
    const double dt = 0.05;
    const std::size_t N = 200000;
    const auto x = normal_sample(N, 16);
    auto dw = normal_sample(N, 17, std::sqrt(dt));
    std::vector<double> y(N);
    for (std::size_t k = 0; k < N; ++k) y[k] = x[k] + dw[k];
    const StepRegression r(BasisSpec::polynomial(1), x, y, dw, dt, ZEstimator::separate);
    double v = 0.0, z = 0.0;
    r(0.5, v, z);
    EXPECT_NEAR(v, 0.5, 5.0 * std::sqrt(dt / N));
    // Y dW / dt has standard deviation about sqrt(1/dt + 2) at x ~ 1.
    EXPECT_NEAR(z, 1.0, 5.0 * std::sqrt((1.0 / dt + 2.0) / N) * 2.0);
}

TEST(StepRegression, ConstantTargetGivesZeroZ) {
    const auto x = normal_sample(100, 18);
    const auto dw = normal_sample(100, 19);
    const std::vector<double> y(100, 0.0);
    const StepRegression r(BasisSpec::polynomial(3), x, y, dw, 0.1, ZEstimator::joint);
    double v = 1.0, z = 1.0;
    r(0.2, v, z);
    EXPECT_EQ(v, 0.0);
    EXPECT_EQ(z, 0.0);
}

TEST(NestedOracle, UnitPayoffIsExact) {
    const auto g = TimeGrid::uniform(1.0, 4);
    const auto o = nested_mc_oracle(driftless(), g, 0.3, 1, [](auto, auto) { return 1.0; }, 1000, 1);
    EXPECT_EQ(o.mean, 1.0);
    EXPECT_EQ(o.stderr_, 0.0);
}

TEST(NestedOracle, MartingaleAndCenteredIncrement) {
    const auto g = TimeGrid::uniform(1.0, 4);
    const auto next = nested_mc_oracle(driftless(), g, 0.3, 1, [](auto x, auto) { return x[1]; }, 20000, 2);
    EXPECT_NEAR(next.mean, 0.3, 3.0 * next.stderr_);
    EXPECT_GT(next.stderr_, 0.0);
    const auto inc = nested_mc_oracle(driftless(), g, 0.3, 1, [](auto, auto dw) { return dw[0]; }, 20000, 3);
    EXPECT_NEAR(inc.mean, 0.0, 3.0 * inc.stderr_);
    EXPECT_THROW(nested_mc_oracle(driftless(), g, 0.3, 1, [](auto, auto) { return 1.0; }, 999, 1),
                 std::invalid_argument);
}

TEST(NestedOracle, TowerConsistencyWithTwoStepRegression) {
    // Two regressions chained backwards versus direct resimulation of the two-step payoff.
    const auto spec = driftless();
    const auto grid = TimeGrid::uniform(1.0, 8);
    const auto bundle = simulate_bundle(grid, spec.jump, 50000, 21);
    const auto X = euler_x0(spec, bundle);
    const std::size_t i = 6;
    const auto payoff = [](double x) { return std::sin(2.0 * x); };
    const auto col = [&](std::size_t c) {
        std::vector<double> v(static_cast<std::size_t>(X.rows()));
        for (Eigen::Index p = 0; p < X.rows(); ++p) v[static_cast<std::size_t>(p)] = X(p, static_cast<Eigen::Index>(c));
        return v;
    };
    const auto x6 = col(6), x7 = col(7), x8 = col(8);
    std::vector<double> y(x8.size());
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = payoff(x8[k]);
    const auto f7 = fit(BasisSpec::polynomial(7), x7, y);
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = f7(x7[k]);
    const auto f6 = fit(BasisSpec::polynomial(7), x6, y);

    for (double s : {-0.5, 0.0, 0.4}) {
        const auto o = nested_mc_oracle(spec, grid, s, i, [&](auto x, auto) { return payoff(x[2]); }, 40000, 22);
        EXPECT_NEAR(f6(s), o.mean, 3.0 * o.stderr_ + 0.01) << s;
    }
}
