#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cem/error.hpp"

namespace cem {

using SampleSet = std::vector<double>;

/// Paired draws (x_i, y_i) from a joint distribution.
struct PairedSample {
    SampleSet x;
    SampleSet y;

    std::size_t size() const { return x.size(); }

    PairedSample swapped() const { return {y, x}; }
};

/// Uniform 1-D grid of m bins over [lo, hi]; values live at bin centers.
class Grid {
public:
    static constexpr std::size_t kMinBins = 8;

    Grid() = default;

    Grid(double lo, double hi, std::size_t m) : lo_(lo), hi_(hi), m_(m) {
        require(std::isfinite(lo) && std::isfinite(hi) && hi > lo, ErrorCode::InvalidArgument,
                "grid requires finite hi > lo");
        require(m >= kMinBins, ErrorCode::InvalidArgument, "grid requires at least 8 bins");
    }

    /// Grid with a prescribed step whose left edge sits at lo.
    static Grid with_step(double lo, double step, std::size_t m) {
        return Grid(lo, lo + step * static_cast<double>(m), m);
    }

    /// Smallest grid of step `step`, aligned to integer multiples of the
    /// step, covering [a, b].
    static Grid aligned(double a, double b, double step) {
        require(step > 0 && std::isfinite(step), ErrorCode::InvalidArgument, "grid step must be positive");
        const double k_lo = std::floor(a / step);
        const double k_hi = std::ceil(b / step);
        auto m = static_cast<std::size_t>(std::max(k_hi - k_lo, 1.0));
        double lo = k_lo * step;
        if (m < kMinBins) {
            lo -= std::floor(static_cast<double>(kMinBins - m) / 2.0) * step;
            m = kMinBins;
        }
        return with_step(lo, step, m);
    }

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    std::size_t size() const { return m_; }
    double step() const { return (hi_ - lo_) / static_cast<double>(m_); }
    double center(std::size_t k) const { return lo_ + (static_cast<double>(k) + 0.5) * step(); }

    std::vector<double> centers() const {
        std::vector<double> c(m_);
        for (std::size_t k = 0; k < m_; ++k) c[k] = center(k);
        return c;
    }

    /// Same grid translated by `offset`.
    Grid shifted(double offset) const { return with_step(lo_ + offset, step(), m_); }

    bool same_step(const Grid& other, double rel_tol = 1e-9) const {
        return std::abs(step() - other.step()) <= rel_tol * std::max(step(), other.step());
    }

    bool operator==(const Grid&) const = default;

private:
    double lo_ = 0.0;
    double hi_ = 1.0;
    std::size_t m_ = kMinBins;
};

/// Real-valued function on a grid with no sign constraint; the raw output of
/// a deconvolution.
struct SignedGridFn {
    Grid grid;
    std::vector<double> values;

    double mass() const {
        return std::accumulate(values.begin(), values.end(), 0.0) * grid.step();
    }
};

/// Nonnegative density on a grid, normalized so that sum(values) * step = 1.
class GridDensity {
public:
    GridDensity() = default;

    /// Validates nonnegativity and finiteness, then rescales to unit mass.
    static GridDensity normalized(Grid grid, std::vector<double> values) {
        require(values.size() == grid.size(), ErrorCode::LengthMismatch, "density values do not match grid size");
        double total = 0.0;
        for (double v : values) {
            require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidArgument,
                    "density values must be finite and nonnegative");
            total += v;
        }
        total *= grid.step();
        require(total > 0.0, ErrorCode::InvalidArgument, "density has zero mass");
        for (double& v : values) v /= total;
        return GridDensity(grid, std::move(values));
    }

    /// Takes values as given (no rescaling) after checking they already
    /// integrate to 1 within 1e-9; used to reload stored densities exactly.
    static GridDensity exact(Grid grid, std::vector<double> values) {
        require(values.size() == grid.size(), ErrorCode::LengthMismatch, "density values do not match grid size");
        double total = 0.0;
        for (double v : values) {
            require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidArgument,
                    "density values must be finite and nonnegative");
            total += v;
        }
        require(std::abs(total * grid.step() - 1.0) <= 1e-9, ErrorCode::InvalidArgument,
                "density does not integrate to 1");
        return GridDensity(grid, std::move(values));
    }

    /// Clips the negative part of a signed function and renormalizes; the
    /// clipped mass (relative to the signed total) is reported through
    /// `clipped_mass` when non-null.
    static GridDensity clipped(const SignedGridFn& f, double* clipped_mass = nullptr) {
        std::vector<double> v(f.values.size());
        double negative = 0.0;
        double positive = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double x = std::isfinite(f.values[k]) ? f.values[k] : 0.0;
            if (x < 0) {
                negative -= x;
            } else {
                positive += x;
            }
            v[k] = std::max(x, 0.0);
        }
        if (clipped_mass) {
            const double total = positive - negative;
            *clipped_mass = total > 0 ? negative / total : 1.0;
        }
        require(positive > 0.0, ErrorCode::InvalidArgument, "signed function has no positive part");
        return normalized(f.grid, std::move(v));
    }

    /// Unit point mass in the bin containing `at`.
    static GridDensity spike(const Grid& grid, double at) {
        std::vector<double> v(grid.size(), 0.0);
        const double pos = std::floor((at - grid.lo()) / grid.step());
        const auto k = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(grid.size() - 1)));
        v[k] = 1.0;
        return normalized(grid, std::move(v));
    }

    /// Tabulates a pdf at the bin centers and renormalizes.
    template <typename Pdf>
    static GridDensity from_pdf(const Grid& grid, Pdf&& pdf) {
        std::vector<double> v(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) v[k] = pdf(grid.center(k));
        return normalized(grid, std::move(v));
    }

    /// Bin-averaged density from a cdf; exact bin masses for discontinuous pdfs.
    template <typename Cdf>
    static GridDensity from_cdf(const Grid& grid, Cdf&& cdf) {
        std::vector<double> v(grid.size());
        const double h = grid.step();
        double prev = cdf(grid.lo());
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const double next = cdf(grid.lo() + static_cast<double>(k + 1) * h);
            v[k] = std::max(next - prev, 0.0) / h;
            prev = next;
        }
        return normalized(grid, std::move(v));
    }

    const Grid& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }
    double step() const { return grid_.step(); }
    std::size_t size() const { return values_.size(); }

    SignedGridFn as_signed() const { return {grid_, values_}; }

    double mean() const {
        double s = 0.0;
        for (std::size_t k = 0; k < values_.size(); ++k) s += grid_.center(k) * values_[k];
        return s * step();
    }

    double variance() const {
        const double mu = mean();
        double s = 0.0;
        for (std::size_t k = 0; k < values_.size(); ++k) {
            const double d = grid_.center(k) - mu;
            s += d * d * values_[k];
        }
        return s * step();
    }

    double stddev() const { return std::sqrt(variance()); }

    /// Linear interpolation between bin centers; zero outside the grid.
    double at(double x) const {
        const double pos = (x - grid_.lo()) / step() - 0.5;
        if (pos < -0.5 || pos > static_cast<double>(size()) - 0.5) return 0.0;
        if (pos <= 0.0) return values_.front();
        const double last = static_cast<double>(size() - 1);
        if (pos >= last) return values_.back();
        const auto k = static_cast<std::size_t>(pos);
        const double w = pos - static_cast<double>(k);
        return (1.0 - w) * values_[k] + w * values_[k + 1];
    }

    /// Translate so the mean is zero (the grid moves, values do not).
    GridDensity recentered() const { return GridDensity(grid_.shifted(-mean()), values_); }

    /// Same density re-tabulated on another grid by interpolation.
    GridDensity resampled(const Grid& target) const {
        std::vector<double> v(target.size());
        for (std::size_t k = 0; k < target.size(); ++k) v[k] = at(target.center(k));
        return normalized(target, std::move(v));
    }

private:
    GridDensity(Grid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {}

    Grid grid_;
    std::vector<double> values_;
};

/// L1 distance between two densities, evaluated on the first one's grid.
inline double l1_distance(const GridDensity& a, const GridDensity& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a.values()[k] - b.at(a.grid().center(k)));
    // mass of b that falls outside a's grid
    double covered = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
        const double c = b.grid().center(k);
        if (c >= a.grid().lo() && c <= a.grid().hi()) covered += b.values()[k];
    }
    return s * a.step() + std::max(0.0, 1.0 - covered * b.step());
}

/// L1 distance of a density to a reference given as bin values on the same grid.
inline double l1_distance(const GridDensity& a, std::span<const double> reference) {
    require(reference.size() == a.size(), ErrorCode::LengthMismatch, "reference length differs from grid");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a.values()[k] - reference[k]);
    return s * a.step();
}

inline double sample_mean(std::span<const double> xs) {
    require(!xs.empty(), ErrorCode::EmptySample, "empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_stddev(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double mu = sample_mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

/// Empirical quantile with linear interpolation (type 7).
inline double quantile(std::vector<double> xs, double q) {
    require(!xs.empty(), ErrorCode::EmptySample, "empty sample");
    std::sort(xs.begin(), xs.end());
    const double pos = q * static_cast<double>(xs.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * xs[lo] + w * xs[hi];
}

}  // namespace cem
