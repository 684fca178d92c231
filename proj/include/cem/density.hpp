#pragma once

// Grid densities: kernel density estimation, convolution, regularized
// deconvolution, validity certification and maximal-width Gaussian
// factorization.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "cem/error.hpp"
#include "cem/grid.hpp"

namespace cem {

inline constexpr double kDefaultDeconvolutionReg = 1e-6;
inline constexpr std::size_t kDefaultGridBins = 512;

/// Regularization for densities estimated from n samples: the empirical
/// characteristic function has noise amplitude about 1/sqrt(n), so spectral
/// power below that level is not trusted.
inline double sample_regularization(std::size_t n) {
    return 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(n, 1)));
}

struct ValidityReport {
    double negative_mass = 0.0;
    double total_mass_error = 0.0;
    bool is_valid = true;
    double tolerance_used = 0.0;
};

struct GaussianDecomposition {
    double sigma_max = 0.0;
    GridDensity remainder;
    double clipped_mass = 0.0;
};

/// Silverman's rule 1.06 * sd * n^(-1/5); falls back to 1e-3 * max(1, |mean|)
/// for degenerate samples.
inline double silverman_bandwidth(std::span<const double> samples) {
    require(!samples.empty(), ErrorCode::EmptySample, "bandwidth of an empty sample");
    const double sd = sample_stddev(samples);
    if (sd > 0) return 1.06 * sd * std::pow(static_cast<double>(samples.size()), -0.2);
    return 1e-3 * std::max(1.0, std::abs(sample_mean(samples)));
}

/// Gaussian-kernel density estimate at the bin centers of `grid`,
/// renormalized to unit mass.  `bandwidth` empty selects Silverman's rule.
inline GridDensity kde(std::span<const double> samples, const Grid& grid,
                       std::optional<double> bandwidth = std::nullopt) {
    require(!samples.empty(), ErrorCode::EmptySample, "kde of an empty sample");
    const double h = bandwidth.value_or(silverman_bandwidth(samples));
    require(h > 0 && std::isfinite(h), ErrorCode::InvalidArgument, "kde bandwidth must be positive");
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    require(*mn - 3 * h >= grid.lo() - 1e-12 * std::abs(grid.lo()) &&
                *mx + 3 * h <= grid.hi() + 1e-12 * std::abs(grid.hi()),
            ErrorCode::GridTooNarrow, "grid does not cover samples padded by 3 bandwidths");

    const double step = grid.step();
    const auto m = static_cast<long>(grid.size());
    const double d = step / h;
    const double q = std::exp(-d * d);
    const long half_window = static_cast<long>(std::ceil(8.0 * h / step)) + 1;
    std::vector<double> acc(grid.size(), 0.0);
    for (double x : samples) {
        const long center = static_cast<long>(std::floor((x - grid.lo()) / step));
        const long k0 = std::max(0L, center - half_window);
        const long k1 = std::min(m - 1, center + half_window);
        // exp(-u^2/2) along consecutive bins via the multiplicative recurrence
        // g_{k+1} = g_k r_k, r_{k+1} = r_k q.
        double u = (grid.center(static_cast<std::size_t>(k0)) - x) / h;
        double g = std::exp(-0.5 * u * u);
        double r = std::exp(-u * d - 0.5 * d * d);
        for (long k = k0; k <= k1; ++k) {
            acc[static_cast<std::size_t>(k)] += g;
            g *= r;
            r *= q;
        }
    }
    return GridDensity::normalized(grid, std::move(acc));
}

/// Grid aligned to multiples of `step` covering the samples padded by
/// `pad_bandwidths` bandwidths.
inline Grid kde_grid(std::span<const double> samples, double bandwidth, double step, double pad_bandwidths = 4.0) {
    require(!samples.empty(), ErrorCode::EmptySample, "grid for an empty sample");
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    return Grid::aligned(*mn - pad_bandwidths * bandwidth, *mx + pad_bandwidths * bandwidth, step);
}

/// KDE on an automatically sized grid with `m` bins (default coverage: the
/// sample range padded by 3 bandwidths, plus a hair).
inline GridDensity kde_auto(std::span<const double> samples, std::optional<double> bandwidth = std::nullopt,
                            std::size_t m = kDefaultGridBins) {
    const double h = bandwidth.value_or(silverman_bandwidth(samples));
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    const double lo = *mn - 3.0 * h;
    const double hi = *mx + 3.0 * h;
    const double pad = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});
    return kde(samples, Grid(lo - pad, hi + pad, m), h);
}

namespace detail {

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

inline std::vector<std::complex<double>> spectrum(std::span<const double> values, double step, std::size_t length) {
    std::vector<double> buf(length, 0.0);
    for (std::size_t k = 0; k < values.size(); ++k) buf[k] = values[k] * step;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> out;
    fft.fwd(out, buf);
    return out;
}

inline void check_step(const Grid& a, const Grid& b) {
    require(a.same_step(b), ErrorCode::StepMismatch, "grids have different steps");
}

}  // namespace detail

/// Discrete linear convolution scaled by the shared step.  The result grid
/// has m_a + m_b - 1 bins starting half a bin inside [a.lo + b.lo, a.hi + b.hi]
/// so that its centers are exactly the pairwise sums of input centers.
inline GridDensity convolve(const GridDensity& a, const GridDensity& b) {
    detail::check_step(a.grid(), b.grid());
    const double step = a.step();
    const std::size_t ma = a.size();
    const std::size_t mb = b.size();
    std::vector<double> out(ma + mb - 1, 0.0);
    // Sum over the shorter-index form so convolve(a,b) and convolve(b,a)
    // accumulate identical products.
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t k = 0; k < out.size(); ++k) {
        const std::size_t i0 = k >= mb - 1 ? k - (mb - 1) : 0;
        const std::size_t i1 = std::min(k, ma - 1);
        double s = 0.0;
        for (std::size_t i = i0; i <= i1; ++i) s += av[i] * bv[k - i];
        out[k] = s * step;
    }
    const Grid g = Grid::with_step(a.grid().lo() + b.grid().lo() + 0.5 * step, step, out.size());
    return GridDensity::normalized(g, std::move(out));
}

/// Tikhonov-regularized frequency-domain deconvolution: the signed
/// candidate b with c = a * b.  `reg` is relative to the peak of |A|^2.
///
/// The output grid has m_a + m_c - 1 bins and contains every displacement
/// between a center of c and a center of a, so no part of the candidate
/// (including ringing outside its true support) is cut away.
inline SignedGridFn deconvolve(const GridDensity& c, const GridDensity& a, double reg = kDefaultDeconvolutionReg) {
    detail::check_step(c.grid(), a.grid());
    require(reg >= 0 && std::isfinite(reg), ErrorCode::InvalidArgument, "regularization must be nonnegative");
    const double step = c.step();
    const std::size_t ma = a.size();
    const std::size_t mc = c.size();
    const std::size_t out_m = ma + mc - 1;
    const std::size_t length = detail::next_pow2(out_m);

    const auto A = detail::spectrum(a.values(), step, length);
    const auto C = detail::spectrum(c.values(), step, length);
    double peak = 0.0;
    for (const auto& z : A) peak = std::max(peak, std::norm(z));
    require(peak > 1e-300, ErrorCode::DegenerateKernel, "kernel spectrum vanishes");
    const double lambda = reg * peak;

    // The zero frequency is left unregularized so the candidate keeps the
    // mass ratio of c to a exactly.
    std::vector<std::complex<double>> B(length);
    B[0] = C[0] / A[0];
    for (std::size_t k = 1; k < length; ++k) {
        const double denom = std::norm(A[k]) + lambda;
        B[k] = denom > 0 ? C[k] * std::conj(A[k]) / denom : std::complex<double>(0.0, 0.0);
    }
    Eigen::FFT<double> fft;
    std::vector<double> circ;
    fft.inv(circ, B);

    // displacement s = kc - ia ranges over [-(ma-1), mc-1]; negative ones wrap.
    std::vector<double> values(out_m);
    const auto len = static_cast<long>(length);
    for (std::size_t j = 0; j < out_m; ++j) {
        const long s = static_cast<long>(j) - static_cast<long>(ma - 1);
        values[j] = circ[static_cast<std::size_t>((s % len + len) % len)] / step;
    }
    const Grid g = Grid::with_step(c.grid().lo() - a.grid().hi() + 0.5 * step, step, out_m);
    return {g, std::move(values)};
}

/// Negative mass (after renormalizing the signed total to 1) and total-mass
/// error; valid iff both are within `tolerance`.
inline ValidityReport validity(const SignedGridFn& f, double tolerance) {
    double total = 0.0;
    double negative = 0.0;
    for (double v : f.values) {
        total += v;
        if (v < 0) negative -= v;
    }
    total *= f.grid.step();
    negative *= f.grid.step();
    ValidityReport r;
    r.tolerance_used = tolerance;
    r.total_mass_error = std::abs(total - 1.0);
    r.negative_mass = total > 0 ? negative / total : std::max(1.0, negative);
    r.is_valid = r.negative_mass <= tolerance && r.total_mass_error <= tolerance;
    return r;
}

/// Mean of a signed function normalized by its signed mass.
inline double signed_mean(const SignedGridFn& f) {
    double mass = 0.0;
    double moment = 0.0;
    for (std::size_t k = 0; k < f.values.size(); ++k) {
        mass += f.values[k];
        moment += f.values[k] * f.grid.center(k);
    }
    return mass != 0.0 ? moment / mass : 0.0;
}

/// Zero-mean Gaussian N(0, sigma^2) on an odd grid of the given step,
/// centered on 0 and spanning +-8 sigma.  sigma == 0 gives the unit spike.
inline GridDensity gaussian_kernel(double sigma, double step) {
    require(sigma >= 0 && step > 0, ErrorCode::InvalidArgument, "gaussian kernel needs sigma >= 0, step > 0");
    const auto half = static_cast<std::size_t>(std::max(4.0, std::ceil(8.0 * sigma / step)));
    const std::size_t m = 2 * half + 1;
    const Grid g = Grid::with_step(-static_cast<double>(m) * step / 2.0, step, m);
    if (sigma == 0.0) return GridDensity::spike(g, 0.0);
    // bin-averaged so that widths below the step still integrate correctly
    return GridDensity::from_cdf(g, [sigma](double x) { return 0.5 * std::erfc(-x / (sigma * std::numbers::sqrt2)); });
}

/// Largest sigma in [0, sd(d)] (bisection at 1e-3 sd(d) resolution) such
/// that deconvolving d by N(0, sigma^2) passes `validity` at `tolerance`.
/// The remainder is the clipped, renormalized deconvolution at that width.
inline GaussianDecomposition max_gaussian_deconvolve(const GridDensity& d, double tolerance,
                                                     double reg = kDefaultDeconvolutionReg) {
    const double sd = d.stddev();
    const double step = d.step();
    auto attempt = [&](double sigma) { return deconvolve(d, gaussian_kernel(sigma, step), reg); };
    auto feasible = [&](double sigma) { return validity(attempt(sigma), tolerance).is_valid; };

    GaussianDecomposition out{0.0, d, 0.0};
    if (sd <= 0.0) return out;
    double lo = 0.0;
    double hi = sd;
    if (feasible(hi)) {
        lo = hi;
    } else {
        const double resolution = 1e-3 * sd;
        while (hi - lo > resolution) {
            const double mid = 0.5 * (lo + hi);
            if (feasible(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    out.sigma_max = lo;
    if (lo > 0.0) out.remainder = GridDensity::clipped(attempt(lo), &out.clipped_mass);
    return out;
}

inline constexpr double kSampleGaussianTolerance = 0.12;

struct SampleGaussianDecomposition {
    double sigma = 0.0;      ///< Gaussian width of the sampled law, KDE kernel removed
    double bandwidth = 0.0;  ///< KDE bandwidth that was removed
    GaussianDecomposition raw;  ///< decomposition of the KDE itself
};

/// Maximal-width Gaussian factor of the law behind `samples`.  The KDE
/// kernel is itself Gaussian, so the KDE's factor has width
/// sqrt(sigma^2 + h^2) and the kernel part is subtracted in quadrature.
/// Regularization follows the sampling noise of the empirical spectrum.
inline SampleGaussianDecomposition max_gaussian_from_samples(std::span<const double> samples,
                                                             double tolerance = kSampleGaussianTolerance,
                                                             std::size_t m = 1024) {
    require(samples.size() >= 2, ErrorCode::TooFewSamples, "need at least two samples");
    SampleGaussianDecomposition out;
    out.bandwidth = silverman_bandwidth(samples);
    const GridDensity d = kde_auto(samples, out.bandwidth, m);
    out.raw = max_gaussian_deconvolve(d, tolerance, sample_regularization(samples.size()));
    const double s2 = out.raw.sigma_max * out.raw.sigma_max - out.bandwidth * out.bandwidth;
    out.sigma = s2 > 0 ? std::sqrt(s2) : 0.0;
    return out;
}

/// Seeded bootstrap: draws `n_draw` values with replacement from `pool`,
/// `replicates` times, and hands each resample to `statistic`.
template <typename Statistic>
std::vector<double> bootstrap(std::span<const double> pool, std::size_t n_draw, std::size_t replicates,
                              std::uint64_t seed, Statistic&& statistic) {
    require(!pool.empty(), ErrorCode::EmptySample, "bootstrap from an empty pool");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<double> out;
    out.reserve(replicates);
    std::vector<double> resample(n_draw);
    for (std::size_t b = 0; b < replicates; ++b) {
        for (auto& v : resample) v = pool[pick(rng)];
        out.push_back(statistic(std::span<const double>(resample)));
    }
    return out;
}

}  // namespace cem
