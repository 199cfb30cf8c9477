#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "jumpfbsde/timegrid.hpp"

using jumpfbsde::TimeGrid;

TEST(TimeGrid, UniformTwoSteps) {
    const auto g = TimeGrid::uniform(1.0, 2);
    ASSERT_EQ(g.steps(), 2u);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[1], 0.5);
    EXPECT_EQ(g[2], 1.0);
}

TEST(TimeGrid, UniformSingleStep) {
    const auto g = TimeGrid::uniform(1.0, 1);
    ASSERT_EQ(g.steps(), 1u);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[1], 1.0);
}

TEST(TimeGrid, RejectsMeshAboveOne) {
    EXPECT_THROW(TimeGrid::uniform(2.0, 1), std::invalid_argument);
    EXPECT_THROW(TimeGrid(std::vector<double>{0.0, 0.5, 2.0}), std::invalid_argument);
}

TEST(TimeGrid, RejectsBadArguments) {
    EXPECT_THROW(TimeGrid::uniform(1.0, 0), std::invalid_argument);
    EXPECT_THROW(TimeGrid::uniform(0.0, 4), std::invalid_argument);
    EXPECT_THROW(TimeGrid::uniform(-1.0, 4), std::invalid_argument);
    EXPECT_THROW(TimeGrid(std::vector<double>{0.1, 0.5}), std::invalid_argument);
    EXPECT_THROW(TimeGrid(std::vector<double>{0.0, 0.5, 0.5}), std::invalid_argument);
    EXPECT_THROW(TimeGrid(std::vector<double>{0.0}), std::invalid_argument);
}

TEST(TimeGrid, ProjectExamples) {
    const auto g = TimeGrid::uniform(1.0, 2);
    EXPECT_EQ(g.project(0.7).time, 0.5);
    EXPECT_EQ(g.project(0.7).index, 1u);
    EXPECT_EQ(g.project(0.5).time, 0.5);
    EXPECT_EQ(g.project(0.0).time, 0.0);
    EXPECT_EQ(g.project(1.0).index, 2u);
    EXPECT_THROW(g.project(-0.1), std::out_of_range);
    EXPECT_THROW(g.project(1.1), std::out_of_range);
}

TEST(TimeGrid, MeshExamples) {
    EXPECT_EQ(TimeGrid::uniform(1.0, 2).mesh(), 0.5);
    EXPECT_EQ(TimeGrid(std::vector<double>{0.0, 0.25, 1.0}).mesh(), 0.75);
    EXPECT_EQ(TimeGrid::uniform(1.0, 10).mesh(), 1.0 / 10.0);
}

TEST(TimeGrid, UniformStepsAreExact) {
    for (std::size_t n : {3u, 7u, 10u, 64u}) {
        const auto g = TimeGrid::uniform(1.0, n);
        for (std::size_t i = 1; i <= n; ++i) EXPECT_EQ(g.step(i), 1.0 / static_cast<double>(n));
    }
}

TEST(TimeGrid, ProjectIsIdempotentOnGridPoints) {
    const TimeGrid g(std::vector<double>{0.0, 0.1, 0.35, 0.4, 0.9, 1.3});
    for (std::size_t i = 0; i <= g.steps(); ++i) {
        EXPECT_EQ(g.project(g[i]).index, i);
        EXPECT_EQ(g.project(g[i]).time, g[i]);
    }
}

TEST(TimeGrid, ProjectIsMonotoneAndBelowT) {
    const auto g = TimeGrid::uniform(1.0, 13);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> ts(2000);
    for (auto& t : ts) t = u(rng);
    std::sort(ts.begin(), ts.end());
    double prev = 0.0;
    for (double t : ts) {
        const auto p = g.project(t);
        EXPECT_LE(p.time, t);
        EXPECT_GE(p.time, prev);
        if (p.index < g.steps()) {
            EXPECT_GT(g[p.index + 1], t);
        }
        prev = p.time;
    }
}

TEST(TimeGrid, RefineKeepsCoarsePoints) {
    const TimeGrid g(std::vector<double>{0.0, 0.3, 0.7, 1.0});
    const auto f = g.refine(4);
    ASSERT_EQ(f.steps(), 12u);
    for (std::size_t i = 0; i <= g.steps(); ++i) EXPECT_EQ(f[4 * i], g[i]);
    EXPECT_NEAR(f.step(2), 0.075, 1e-15);
    EXPECT_EQ(g.refine(1).steps(), 3u);
    EXPECT_THROW(g.refine(0), std::invalid_argument);
}
