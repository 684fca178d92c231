#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "cem/error.hpp"
#include "cem/grid.hpp"

namespace cem {

struct HsicResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n_permutations = 0;
    std::uint64_t seed = 0;

    bool operator==(const HsicResult&) const = default;
};

/// Median pairwise distance; 1.0 when the median is zero.
inline double median_heuristic(std::span<const double> xs) {
    const std::size_t n = xs.size();
    std::vector<double> d;
    d.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::abs(xs[i] - xs[j]));
    if (d.empty()) return 1.0;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0 ? *mid : 1.0;
}

/// Dense row-major n x n Gram matrix exp(-(a_i - a_j)^2 / (2 s^2)).
inline std::vector<double> gaussian_gram(std::span<const double> xs, double bandwidth) {
    const std::size_t n = xs.size();
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    std::vector<double> k(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        k[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = xs[i] - xs[j];
            k[i * n + j] = k[j * n + i] = std::exp(-d * d * inv);
        }
    }
    return k;
}

/// H K H for the centering matrix H = I - 11'/n.
inline std::vector<double> double_center(std::vector<double> k, std::size_t n) {
    std::vector<double> row(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) row[i] += k[i * n + j];
        total += row[i];
        row[i] /= static_cast<double>(n);
    }
    total /= static_cast<double>(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) k[i * n + j] += total - row[i] - row[j];
    return k;
}

namespace detail {

inline void check_hsic_inputs(std::span<const double> x, std::span<const double> y) {
    require(x.size() == y.size(), ErrorCode::LengthMismatch, "hsic inputs differ in length");
    require(x.size() >= 4, ErrorCode::TooFewSamples, "hsic needs at least 4 samples");
}

inline double frobenius(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

/// Biased HSIC V-statistic (1/n^2) tr(K H L H) with median-heuristic
/// Gaussian kernels on both inputs.
inline double hsic(std::span<const double> x, std::span<const double> y) {
    detail::check_hsic_inputs(x, y);
    const std::size_t n = x.size();
    const auto kc = double_center(gaussian_gram(x, median_heuristic(x)), n);
    const auto l = gaussian_gram(y, median_heuristic(y));
    return std::max(0.0, detail::frobenius(kc, l) / static_cast<double>(n * n));
}

/// Permutation test of independence.  Bandwidths come from the unpermuted
/// data and stay fixed; permutation b shuffles y with a generator seeded from
/// (seed, b), so the result does not depend on evaluation order.
inline HsicResult hsic_test(std::span<const double> x, std::span<const double> y, std::size_t n_permutations,
                            std::uint64_t seed) {
    detail::check_hsic_inputs(x, y);
    require(n_permutations >= 99, ErrorCode::InvalidArgument, "hsic_test needs at least 99 permutations");
    const std::size_t n = x.size();
    const auto kc = double_center(gaussian_gram(x, median_heuristic(x)), n);
    const auto l = gaussian_gram(y, median_heuristic(y));
    const double norm = static_cast<double>(n * n);
    const double observed = detail::frobenius(kc, l);

    std::vector<std::size_t> perm(n);
    std::size_t exceed = 0;
    for (std::size_t b = 0; b < n_permutations; ++b) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(b)};
        std::mt19937_64 rng(seq);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* krow = &kc[i * n];
            const double* lrow = &l[perm[i] * n];
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += krow[j] * lrow[perm[j]];
            s += acc;
        }
        if (s >= observed - 1e-12 * std::abs(observed)) ++exceed;
    }
    HsicResult r;
    r.statistic = std::max(0.0, observed / norm);
    r.p_value = static_cast<double>(1 + exceed) / static_cast<double>(n_permutations + 1);
    r.n_permutations = n_permutations;
    r.seed = seed;
    return r;
}

}  // namespace cem
