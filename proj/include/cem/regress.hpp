#pragma once

// Kernel ridge regression with a Gaussian kernel: the mechanism estimator.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>

#include "cem/dependence.hpp"
#include "cem/error.hpp"
#include "cem/grid.hpp"

namespace cem {

/// phi(x) = sum_b coefficients[b] * k(x, inputs[b]) + intercept.
struct RegressionModel {
    SampleSet inputs;
    std::vector<double> coefficients;
    double bandwidth = 1.0;
    double ridge = 0.0;
    double intercept = 0.0;

    double operator()(double x) const {
        const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
        double s = intercept;
        for (std::size_t b = 0; b < inputs.size(); ++b) {
            const double d = x - inputs[b];
            s += coefficients[b] * std::exp(-d * d * inv);
        }
        return s;
    }
};

inline SampleSet evaluate(const RegressionModel& model, std::span<const double> points) {
    SampleSet out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = model(points[i]);
    return out;
}

struct KrrOptions {
    std::optional<double> bandwidth;  ///< empty: median heuristic on the causes
    std::optional<double> ridge;      ///< empty: 5-fold CV over kRidgeLadder * n
    /// Above this many points the fit switches to subset-of-regressors with
    /// this many quantile-spaced basis inputs.
    std::size_t max_basis = 500;
};

inline constexpr std::array<double, 4> kRidgeLadder{1e-4, 1e-3, 1e-2, 1e-1};
inline constexpr std::size_t kCvFolds = 5;

namespace detail {

inline Eigen::MatrixXd cross_gram(std::span<const double> a, std::span<const double> b, double bandwidth) {
    const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
    Eigen::MatrixXd k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double d = a[i] - b[j];
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::exp(-d * d * inv);
        }
    return k;
}

inline Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
        Eigen::VectorXd x = llt.solve(rhs);
        if (x.allFinite()) return x;
    }
    return a.colPivHouseholderQr().solve(rhs);
}

/// Quantile-spaced subset of the inputs used as regression basis.
inline std::vector<std::size_t> basis_indices(std::span<const double> x, std::size_t max_basis) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (n <= max_basis) return order;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<std::size_t> picked(max_basis);
    for (std::size_t i = 0; i < max_basis; ++i) {
        const double pos = static_cast<double>(i) * static_cast<double>(n - 1) / static_cast<double>(max_basis - 1);
        picked[i] = order[static_cast<std::size_t>(std::lround(pos))];
    }
    return picked;
}

/// Solver for centered targets at several ridge values.  Exact KRR solves
/// (K + r I) a = y; subset-of-regressors solves (K_nb' K_nb + r K_bb) a = K_nb' y.
class KrrSystem {
public:
    KrrSystem(const Eigen::MatrixXd& design, const Eigen::MatrixXd* gram_bb, const Eigen::VectorXd& yc)
        : exact_(gram_bb == nullptr) {
        if (exact_) {
            normal_ = design;
            rhs_ = yc;
        } else {
            normal_ = design.transpose() * design;
            rhs_ = design.transpose() * yc;
            penalty_ = *gram_bb;
        }
    }

    Eigen::VectorXd solve(double ridge) const {
        Eigen::MatrixXd a = normal_;
        if (exact_) {
            a.diagonal().array() += ridge;
        } else {
            a += ridge * penalty_;
            a.diagonal().array() += 1e-10 * a.diagonal().mean();
        }
        return solve_spd(a, rhs_);
    }

private:
    bool exact_;
    Eigen::MatrixXd normal_;
    Eigen::MatrixXd penalty_;
    Eigen::VectorXd rhs_;
};

struct KrrProblem {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<std::size_t> folds;  // fold id per point
};

inline RegressionModel fit_krr_impl(const KrrProblem& p, const KrrOptions& opts) {
    const std::size_t n = p.x.size();
    require(p.y.size() == n, ErrorCode::LengthMismatch, "causes and effects differ in length");
    require(n >= 10, ErrorCode::TooFewSamples, "regression needs at least 10 pairs");
    const auto [mn, mx] = std::minmax_element(p.x.begin(), p.x.end());
    require(*mx > *mn, ErrorCode::DegenerateInput, "all causes are identical");
    for (std::size_t i = 0; i < n; ++i)
        require(std::isfinite(p.x[i]) && std::isfinite(p.y[i]), ErrorCode::InvalidArgument, "non-finite sample");

    const double bw = opts.bandwidth.value_or(median_heuristic(p.x));
    require(bw > 0, ErrorCode::InvalidArgument, "bandwidth must be positive");
    const auto basis_idx = basis_indices(p.x, opts.max_basis);
    const bool exact = basis_idx.size() == n;
    std::vector<double> basis(basis_idx.size());
    for (std::size_t b = 0; b < basis.size(); ++b) basis[b] = p.x[basis_idx[b]];

    const Eigen::MatrixXd k_nb = detail::cross_gram(p.x, basis, bw);
    const Eigen::MatrixXd k_bb = exact ? Eigen::MatrixXd() : detail::cross_gram(basis, basis, bw);
    const Eigen::Map<const Eigen::VectorXd> y(p.y.data(), static_cast<Eigen::Index>(n));

    double ridge_factor = 0.0;
    double ridge = 0.0;
    if (opts.ridge) {
        ridge = *opts.ridge;
        require(ridge >= 0, ErrorCode::InvalidArgument, "ridge must be nonnegative");
    } else {
        std::array<double, kRidgeLadder.size()> cv_error{};
        for (std::size_t f = 0; f < kCvFolds; ++f) {
            std::vector<Eigen::Index> tr;
            std::vector<Eigen::Index> va;
            for (std::size_t i = 0; i < n; ++i) (p.folds[i] == f ? va : tr).push_back(static_cast<Eigen::Index>(i));
            if (va.empty() || tr.size() < 2) continue;
            Eigen::VectorXd ytr = y(tr);
            const double ymean = ytr.mean();
            ytr.array() -= ymean;
            Eigen::MatrixXd design;
            if (exact) {
                design = k_nb(tr, tr);
            } else {
                design = k_nb(tr, Eigen::all);
            }
            const KrrSystem system(design, exact ? nullptr : &k_bb, ytr);
            for (std::size_t r = 0; r < kRidgeLadder.size(); ++r) {
                const double lam = kRidgeLadder[r] * static_cast<double>(tr.size());
                const Eigen::VectorXd alpha = system.solve(lam);
                const Eigen::VectorXd fit_tr = design * alpha;
                const double icpt = ymean - fit_tr.mean();
                Eigen::VectorXd pred;
                if (exact) {
                    pred = k_nb(va, tr) * alpha;
                } else {
                    pred = k_nb(va, Eigen::all) * alpha;
                }
                pred.array() += icpt;
                cv_error[r] += (y(va) - pred).squaredNorm();
            }
        }
        const auto best = std::min_element(cv_error.begin(), cv_error.end()) - cv_error.begin();
        ridge_factor = kRidgeLadder[static_cast<std::size_t>(best)];
        ridge = ridge_factor * static_cast<double>(n);
    }

    const double ymean = y.mean();
    const Eigen::VectorXd yc = y.array() - ymean;
    const Eigen::VectorXd alpha = KrrSystem(k_nb, exact ? nullptr : &k_bb, yc).solve(ridge);
    require(alpha.allFinite(), ErrorCode::NonFiniteObjective, "regression produced non-finite coefficients");
    const Eigen::VectorXd fitted = k_nb * alpha;

    RegressionModel model;
    model.inputs = std::move(basis);
    model.coefficients.assign(alpha.data(), alpha.data() + alpha.size());
    model.bandwidth = bw;
    model.ridge = ridge;
    // residual mean absorbed so training residuals are exactly zero-mean
    model.intercept = (y - fitted).mean();
    return model;
}

}  // namespace detail

/// Kernel ridge regression of pairs.y on pairs.x.  AUTO ridge picks the
/// ladder entry (times n) with the lowest 5-fold CV squared error; fold of
/// point i is i mod 5.
inline RegressionModel fit_krr(const PairedSample& pairs, const KrrOptions& opts = {}) {
    detail::KrrProblem p{pairs.x, pairs.y, {}};
    p.folds.resize(pairs.x.size());
    for (std::size_t i = 0; i < p.folds.size(); ++i) p.folds[i] = i % kCvFolds;
    return detail::fit_krr_impl(p, opts);
}

/// Pooled fit over several datasets; folds are assigned by position within
/// each dataset so that a duplicated dataset reproduces the single fit.
inline RegressionModel fit_krr_pooled(std::span<const PairedSample> datasets, const KrrOptions& opts = {}) {
    detail::KrrProblem p;
    for (const auto& d : datasets) {
        require(d.x.size() == d.y.size(), ErrorCode::LengthMismatch, "causes and effects differ in length");
        for (std::size_t i = 0; i < d.x.size(); ++i) {
            p.x.push_back(d.x[i]);
            p.y.push_back(d.y[i]);
            p.folds.push_back(i % kCvFolds);
        }
    }
    return detail::fit_krr_impl(p, opts);
}

inline SampleSet residuals(const RegressionModel& model, const PairedSample& pairs) {
    SampleSet r(pairs.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = pairs.y[i] - model(pairs.x[i]);
    return r;
}

}  // namespace cem
