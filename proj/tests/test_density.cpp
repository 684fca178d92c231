#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cem/density.hpp"

namespace {

using cem::Error;
using cem::ErrorCode;
using cem::Grid;
using cem::GridDensity;

double phi_cdf(double x, double mu, double sigma) { return 0.5 * std::erfc(-(x - mu) / (sigma * std::numbers::sqrt2)); }

GridDensity normal_on(const Grid& g, double mu, double sigma) {
    return GridDensity::from_cdf(g, [=](double x) { return phi_cdf(x, mu, sigma); });
}

GridDensity uniform_on(const Grid& g, double a, double b) {
    return GridDensity::from_cdf(g, [=](double x) { return std::clamp((x - a) / (b - a), 0.0, 1.0); });
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected cem::Error";
    return ErrorCode::InvalidArgument;
}

// --- kde -------------------------------------------------------------------

TEST(Kde, StandardNormalSample) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01;
    std::vector<double> xs(10000);
    for (double& x : xs) x = n01(rng);
    const Grid g(-5.0, 5.0, 512);
    const auto d = cem::kde(xs, g);
    EXPECT_LE(cem::l1_distance(d, normal_on(g, 0.0, 1.0)), 0.05);
}

TEST(Kde, SinglePointIsTheKernel) {
    const Grid g(-5.0, 5.0, 512);
    const auto d = cem::kde(std::vector<double>{0.0}, g, 1.0);
    const auto ref = GridDensity::from_pdf(g, [](double x) { return std::exp(-0.5 * x * x); });
    EXPECT_LE(cem::l1_distance(d, ref), 1e-9);
}

TEST(Kde, CoverageAndEmptyErrors) {
    const Grid g(-5.0, 5.0, 512);
    EXPECT_EQ(code_of([&] { cem::kde(std::vector<double>{7.0, 7.0}, g, 0.5); }), ErrorCode::GridTooNarrow);
    EXPECT_EQ(code_of([&] { cem::kde(std::vector<double>{}, g, 0.5); }), ErrorCode::EmptySample);
}

TEST(Kde, SilvermanRule) {
    const std::vector<double> xs{-1.0, 0.0, 1.0, 2.0};
    const double sd = cem::sample_stddev(xs);
    EXPECT_NEAR(cem::silverman_bandwidth(xs), 1.06 * sd * std::pow(4.0, -0.2), 1e-12);
}

// --- convolve --------------------------------------------------------------

TEST(Convolve, SpikeIsIdentity) {
    const Grid g(-3.0, 3.0, 300);
    const auto b = normal_on(g, 0.4, 0.7);
    // odd grid with a center exactly at zero
    const auto spike = GridDensity::spike(Grid::with_step(-10.5 * g.step(), g.step(), 21), 0.0);
    const auto c = cem::convolve(spike, b);
    EXPECT_LE(cem::l1_distance(c, b), 1e-9);
}

TEST(Convolve, GaussianWidthsAddInQuadrature) {
    const Grid g(-8.0, 8.0, 1024);
    const auto c = cem::convolve(normal_on(g, 0, 1), normal_on(g, 0, 1));
    EXPECT_LE(cem::l1_distance(c, normal_on(c.grid(), 0, std::numbers::sqrt2)), 0.01);
}

TEST(Convolve, UniformsGiveTriangle) {
    const Grid g(0.0, 1.0, 1024);
    const auto u = uniform_on(g, 0, 1);
    const auto c = cem::convolve(u, u);
    const auto tri = GridDensity::from_pdf(c.grid(), [](double x) { return std::max(0.0, 1.0 - std::abs(x - 1.0)); });
    EXPECT_LE(cem::l1_distance(c, tri), 0.01);
}

TEST(Convolve, CommutativeAndLinear) {
    const Grid ga(-2.0, 2.0, 128);
    const Grid gb = Grid::with_step(0.5, ga.step(), 64);
    const auto a = normal_on(ga, 0.3, 0.5);
    const auto b = uniform_on(gb, 0.6, 1.5);
    const auto ab = cem::convolve(a, b);
    const auto ba = cem::convolve(b, a);
    ASSERT_EQ(ab.size(), ba.size());
    EXPECT_NEAR(ab.grid().lo(), ba.grid().lo(), 1e-12);
    for (std::size_t k = 0; k < ab.size(); ++k) EXPECT_NEAR(ab.values()[k], ba.values()[k], 1e-12);

    // mixture in, mixture out
    const auto c = normal_on(ga, -0.5, 0.3);
    std::vector<double> mix(ga.size());
    for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = 0.25 * a.values()[k] + 0.75 * c.values()[k];
    const auto lhs = cem::convolve(GridDensity::normalized(ga, mix), b);
    const auto cb = cem::convolve(c, b);
    for (std::size_t k = 0; k < lhs.size(); ++k)
        EXPECT_NEAR(lhs.values()[k], 0.25 * ab.values()[k] + 0.75 * cb.values()[k], 1e-12);
}

TEST(Convolve, StepMismatch) {
    const auto a = normal_on(Grid(-1, 1, 64), 0, 0.3);
    const auto b = normal_on(Grid(-1, 1, 65), 0, 0.3);
    EXPECT_EQ(code_of([&] { cem::convolve(a, b); }), ErrorCode::StepMismatch);
}

// --- deconvolve ------------------------------------------------------------

TEST(Deconvolve, RoundTripUniformGaussian) {
    const double step = 1.0 / 1024.0 * 4.0;
    const auto u = uniform_on(Grid::with_step(-0.5, step, 512), 0.0, 1.0);
    const auto gk = normal_on(Grid::with_step(-2.0, step, 1024), 0.0, 0.5);
    const auto c = cem::convolve(u, gk);
    const auto back = cem::deconvolve(c, u, 1e-6);
    EXPECT_LE(cem::l1_distance(gk, GridDensity::clipped(back)), 0.02);
}

TEST(Deconvolve, SpikeKernelIsIdentity) {
    const Grid g(-3.0, 3.0, 256);
    const auto d = normal_on(g, 0.2, 0.6);
    const auto spike = GridDensity::spike(Grid::with_step(-5.5 * g.step(), g.step(), 11), 0.0);
    const auto back = GridDensity::clipped(cem::deconvolve(d, spike, 0.0));
    EXPECT_LE(cem::l1_distance(d, back), 1e-9);
}

TEST(Deconvolve, WiderKernelIsInvalid) {
    const Grid g(-10.0, 10.0, 1024);
    const auto narrow = normal_on(g, 0, 1);
    const auto wide = normal_on(g, 0, std::numbers::sqrt2);
    const auto f = cem::deconvolve(narrow, wide, 1e-6);
    EXPECT_FALSE(cem::validity(f, 0.05).is_valid);
}

TEST(Deconvolve, Errors) {
    const auto a = normal_on(Grid(-1, 1, 64), 0, 0.3);
    const auto b = normal_on(Grid(-1, 1, 65), 0, 0.3);
    EXPECT_EQ(code_of([&] { cem::deconvolve(a, b); }), ErrorCode::StepMismatch);
}

// Random valid pairs on shared-step grids recover the unknown factor.
TEST(Deconvolve, RoundTripProperty) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double step = 0.01;
    for (int trial = 0; trial < 10; ++trial) {
        const double wa = 0.2 + unit(rng);
        const auto a = uniform_on(Grid::with_step(-0.1, step, 512), 0.0, wa);
        const double sb = 0.2 + 0.5 * unit(rng);
        const double mb = unit(rng) - 0.5;
        const auto b = normal_on(Grid::with_step(mb - 8 * sb, step, 1024), mb, sb);
        const auto back = cem::deconvolve(cem::convolve(a, b), a, 1e-6);
        EXPECT_LE(cem::l1_distance(b, GridDensity::clipped(back)), 0.03) << "trial " << trial;
    }
}

// --- validity --------------------------------------------------------------

TEST(Validity, DensityIsValid) {
    const auto d = normal_on(Grid(-4, 4, 128), 0, 1);
    const auto r = cem::validity(d.as_signed(), 0.05);
    EXPECT_TRUE(r.is_valid);
    EXPECT_EQ(r.negative_mass, 0.0);
    EXPECT_NEAR(r.total_mass_error, 0.0, 1e-12);
    EXPECT_EQ(r.tolerance_used, 0.05);
}

TEST(Validity, ConstructedNegativeBin) {
    // total mass 1, one bin carrying -0.2 of it
    const Grid g(0.0, 1.0, 10);
    std::vector<double> v(10, 1.2 / 9.0 / g.step());
    v[0] = -0.2 / g.step();
    const auto r = cem::validity({g, v}, 0.05);
    EXPECT_FALSE(r.is_valid);
    EXPECT_NEAR(r.negative_mass, 0.2, 1e-12);
    EXPECT_NEAR(r.total_mass_error, 0.0, 1e-12);
}

TEST(Validity, DecisionMatchesPredicate) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n01;
    const Grid g(0.0, 1.0, 16);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(16);
        for (double& x : v) x = 1.0 + 0.6 * n01(rng);
        const double tol = 0.02 * (1 + trial % 5);
        const auto r = cem::validity({g, v}, tol);
        EXPECT_EQ(r.is_valid, r.negative_mass <= tol && r.total_mass_error <= tol);
    }
}

// --- maximal Gaussian factor ------------------------------------------------

TEST(MaxGaussian, UniformPlusUnitGaussian) {
    const double step = 12.0 / 1024.0;
    const auto u = uniform_on(Grid::with_step(-0.5, step, 200), 0.0, 1.0);
    const auto g = normal_on(Grid::with_step(-6.0, step, 1024), 0.0, 1.0);
    const auto d = cem::convolve(u, g);
    const auto dec = cem::max_gaussian_deconvolve(d, 0.05);
    EXPECT_GE(dec.sigma_max, 0.9);
    EXPECT_LE(dec.sigma_max, 1.1);
    // Regularization stops the search short of sigma = 1, so the remainder
    // is a smoothed uniform: centered, and nearer the uniform than d is.
    EXPECT_NEAR(dec.remainder.mean(), 0.5, 0.01);
    const auto target = uniform_on(dec.remainder.grid(), 0.0, 1.0);
    EXPECT_LT(cem::l1_distance(dec.remainder, target), cem::l1_distance(d, target));
}

TEST(MaxGaussian, SpikeHasNoGaussianFactor) {
    const auto d = GridDensity::spike(Grid(-1, 1, 64), 0.0);
    const auto dec = cem::max_gaussian_deconvolve(d, 0.05);
    EXPECT_EQ(dec.sigma_max, 0.0);
    EXPECT_EQ(dec.remainder.values(), d.values());
}

TEST(MaxGaussian, GaussianDecomposesFully) {
    const auto d = normal_on(Grid(-10, 10, 1024), 0, std::numbers::sqrt2);
    const auto dec = cem::max_gaussian_deconvolve(d, 0.05);
    EXPECT_GE(dec.sigma_max, 0.85 * std::numbers::sqrt2);
    EXPECT_LE(dec.sigma_max, std::numbers::sqrt2 + 0.03);
    EXPECT_LT(dec.remainder.stddev(), d.stddev());
}

// Below the true width every deconvolution stays valid.
TEST(MaxGaussian, ValidityMonotoneBelowTrueWidth) {
    const double step = 0.01;
    const auto u = uniform_on(Grid::with_step(-0.5, step, 200), 0.0, 1.0);
    const auto g = normal_on(Grid::with_step(-6.0, step, 1200), 0.0, 0.7);
    const auto d = cem::convolve(u, g);
    for (double s : {0.0, 0.1, 0.3, 0.5, 0.6, 0.65}) {
        const auto f = cem::deconvolve(d, cem::gaussian_kernel(s, step));
        EXPECT_TRUE(cem::validity(f, 0.05).is_valid) << "sigma " << s;
    }
}

// --- bootstrap -------------------------------------------------------------

TEST(Bootstrap, SeededAndSized) {
    const std::vector<double> pool{1, 2, 3, 4, 5, 6};
    auto mean = [](std::span<const double> s) { return cem::sample_mean(s); };
    const auto a = cem::bootstrap(pool, 6, 50, 9, mean);
    const auto b = cem::bootstrap(pool, 6, 50, 9, mean);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), 50u);
    for (double v : a) {
        EXPECT_GE(v, 1.0);
        EXPECT_LE(v, 6.0);
    }
}

}  // namespace
