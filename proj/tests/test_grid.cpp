#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cem/grid.hpp"

namespace {

using cem::Error;
using cem::ErrorCode;
using cem::Grid;
using cem::GridDensity;

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected cem::Error";
    return ErrorCode::InvalidArgument;
}

TEST(Grid, StepAndCenters) {
    const Grid g(-1.0, 1.0, 8);
    EXPECT_DOUBLE_EQ(g.step(), 0.25);
    EXPECT_DOUBLE_EQ(g.center(0), -0.875);
    EXPECT_DOUBLE_EQ(g.center(7), 0.875);
    EXPECT_EQ(g.centers().size(), 8u);
}

TEST(Grid, RejectsDegenerateShapes) {
    EXPECT_EQ(code_of([] { Grid(1.0, 1.0, 16); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { Grid(0.0, 1.0, 7); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { Grid(0.0, NAN, 16); }), ErrorCode::InvalidArgument);
}

TEST(Grid, AlignedCoversInterval) {
    const Grid g = Grid::aligned(-0.33, 0.71, 0.1);
    EXPECT_LE(g.lo(), -0.33);
    EXPECT_GE(g.hi(), 0.71);
    EXPECT_NEAR(g.step(), 0.1, 1e-12);
    EXPECT_NEAR(std::remainder(g.lo(), 0.1), 0.0, 1e-9);
    // short intervals are padded up to the minimum bin count
    EXPECT_EQ(Grid::aligned(0.0, 0.1, 0.1).size(), Grid::kMinBins);
}

TEST(GridDensity, NormalizedIntegratesToOne) {
    const Grid g(0.0, 2.0, 16);
    const auto d = GridDensity::normalized(g, std::vector<double>(16, 3.0));
    double s = 0.0;
    for (double v : d.values()) s += v * d.step();
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_NEAR(d.mean(), 1.0, 1e-12);
}

TEST(GridDensity, RejectsNegativeOrEmpty) {
    const Grid g(0.0, 1.0, 8);
    std::vector<double> v(8, 1.0);
    v[3] = -0.1;
    EXPECT_EQ(code_of([&] { GridDensity::normalized(g, v); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { GridDensity::normalized(g, std::vector<double>(8, 0.0)); }),
              ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { GridDensity::normalized(g, std::vector<double>(5, 1.0)); }),
              ErrorCode::LengthMismatch);
}

TEST(GridDensity, ExactKeepsValuesBitForBit) {
    const Grid g(0.0, 1.0, 8);
    const auto d = GridDensity::normalized(g, {1, 2, 3, 4, 4, 3, 2, 1});
    const auto e = GridDensity::exact(g, d.values());
    EXPECT_EQ(d.values(), e.values());
    EXPECT_EQ(code_of([&] { GridDensity::exact(g, std::vector<double>(8, 2.0)); }), ErrorCode::InvalidArgument);
}

TEST(GridDensity, ClippedReportsNegativeMass) {
    const Grid g(0.0, 1.0, 8);
    cem::SignedGridFn f{g, {2, 2, 2, 2, 2, 2, 2, -2}};
    double clipped = 0.0;
    const auto d = GridDensity::clipped(f, &clipped);
    // negative part 2 against signed total 12
    EXPECT_NEAR(clipped, 2.0 / 12.0, 1e-12);
    EXPECT_EQ(d.values()[7], 0.0);
}

TEST(GridDensity, SpikeAndRecentering) {
    const Grid g(-1.0, 1.0, 20);
    const auto s = GridDensity::spike(g, 0.33);
    EXPECT_NEAR(s.mean(), 0.35, 1e-12);
    EXPECT_NEAR(s.recentered().mean(), 0.0, 1e-12);
    EXPECT_NEAR(s.variance(), 0.0, 1e-12);
}

TEST(GridDensity, FromCdfGivesExactBinMasses) {
    // Uniform[0, 0.5] on [0, 1]: half the bins carry all the mass
    const Grid g(0.0, 1.0, 10);
    const auto d = GridDensity::from_cdf(g, [](double x) { return std::clamp(2.0 * x, 0.0, 1.0); });
    for (std::size_t k = 0; k < 10; ++k) EXPECT_NEAR(d.values()[k], k < 5 ? 2.0 : 0.0, 1e-12);
}

TEST(GridDensity, InterpolationAndResampling) {
    const Grid g(0.0, 1.0, 10);
    const auto d = GridDensity::from_pdf(g, [](double x) { return 2.0 * x; });
    EXPECT_NEAR(d.at(0.5), 1.0, 1e-12);
    EXPECT_EQ(d.at(-0.5), 0.0);
    const auto r = d.resampled(Grid(0.0, 1.0, 40));
    EXPECT_LT(cem::l1_distance(r, d), 0.02);
}

TEST(L1Distance, CountsMassOutsideFirstGrid) {
    const auto a = GridDensity::spike(Grid(0.0, 1.0, 10), 0.5);
    const auto b = GridDensity::spike(Grid(2.0, 3.0, 10), 2.5);
    EXPECT_NEAR(cem::l1_distance(a, b), 2.0, 1e-12);
    EXPECT_NEAR(cem::l1_distance(a, a), 0.0, 1e-15);
}

TEST(SampleStats, MeanStddevQuantile) {
    const std::vector<double> xs{1, 2, 3, 4, 5};
    EXPECT_DOUBLE_EQ(cem::sample_mean(xs), 3.0);
    EXPECT_DOUBLE_EQ(cem::sample_stddev(xs), std::sqrt(2.5));
    EXPECT_DOUBLE_EQ(cem::quantile(xs, 0.5), 3.0);
    EXPECT_DOUBLE_EQ(cem::quantile(xs, 0.125), 1.5);
    EXPECT_EQ(code_of([] { cem::sample_mean(std::vector<double>{}); }), ErrorCode::EmptySample);
}

}  // namespace
