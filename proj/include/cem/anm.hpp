#pragma once

// Additive noise models: single-dataset fits, bivariate direction inference
// and the shared-mechanism (conditional) fit across several datasets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cem/density.hpp"
#include "cem/dependence.hpp"
#include "cem/error.hpp"
#include "cem/grid.hpp"
#include "cem/regress.hpp"

namespace cem {

struct AnmConfig {
    KrrOptions krr;
    std::size_t n_permutations = 499;
    std::uint64_t seed = 0;
    std::size_t noise_grid_bins = kDefaultGridBins;

    // conditional fit
    std::size_t max_iterations = 500;
    double relative_tolerance = 1e-6;
    /// Weight of the RKHS-norm penalty, as a fraction of the initial HSIC
    /// objective (scale-free).
    double penalty_fraction = 1e-2;
};

inline constexpr std::size_t kMinAnmSamples = 20;

struct AnmFit {
    RegressionModel model;
    SampleSet residuals;
    HsicResult independence;
    GridDensity noise_density;
};

enum class Direction { XToY, YToX, Undecided };

inline std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::XToY: return "X_to_Y";
        case Direction::YToX: return "Y_to_X";
        case Direction::Undecided: return "Undecided";
    }
    return "Undecided";
}

struct DirectionVerdict {
    Direction direction = Direction::Undecided;
    AnmFit forward;
    AnmFit backward;
    double alpha = 0.05;
};

/// Regress effect on cause, test residual independence, estimate the noise
/// density.  A dependent residual is reported, never rejected here.
inline AnmFit fit_anm(const PairedSample& pairs, const AnmConfig& cfg = {}) {
    require(pairs.x.size() == pairs.y.size(), ErrorCode::LengthMismatch, "causes and effects differ in length");
    require(pairs.size() >= kMinAnmSamples, ErrorCode::TooFewSamples, "an additive noise fit needs at least 20 pairs");
    AnmFit fit;
    fit.model = fit_krr(pairs, cfg.krr);
    fit.residuals = residuals(fit.model, pairs);
    fit.independence = hsic_test(pairs.x, fit.residuals, cfg.n_permutations, cfg.seed);
    fit.noise_density = kde_auto(fit.residuals, std::nullopt, cfg.noise_grid_bins);
    return fit;
}

/// X_to_Y iff only the forward residuals look independent at level alpha,
/// Y_to_X for the mirror case, Undecided otherwise.
inline Direction decide_direction(double forward_p, double backward_p, double alpha) {
    const bool forward_ok = forward_p > alpha;
    const bool backward_ok = backward_p > alpha;
    if (forward_ok && !backward_ok) return Direction::XToY;
    if (backward_ok && !forward_ok) return Direction::YToX;
    return Direction::Undecided;
}

inline DirectionVerdict infer_direction(const PairedSample& pairs, double alpha, const AnmConfig& cfg = {}) {
    require(alpha > 0 && alpha < 1, ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    DirectionVerdict v;
    v.alpha = alpha;
    v.forward = fit_anm(pairs, cfg);
    v.backward = fit_anm(pairs.swapped(), cfg);
    v.direction = decide_direction(v.forward.independence.p_value, v.backward.independence.p_value, alpha);
    return v;
}

struct DatasetDiagnostics {
    double offset = 0.0;
    SampleSet residuals;
    HsicResult independence;
    GridDensity noise_density;
};

struct ConditionalAnmFit {
    RegressionModel model;
    std::vector<DatasetDiagnostics> per_dataset;
    std::vector<double> objective_trace;

    /// Mechanism as seen by dataset i (shared phi plus that dataset's offset).
    double predict(std::size_t dataset, double x) const { return model(x) + per_dataset.at(dataset).offset; }
};

/// Sum over datasets of HSIC(causes_i, residuals_i) plus an RKHS-norm
/// penalty, as a function of the shared coefficient vector.  Kernel
/// bandwidths are frozen at construction.
class ConditionalAnmObjective {
public:
    ConditionalAnmObjective(std::span<const PairedSample> datasets, const RegressionModel& init, double penalty_weight,
                            std::vector<double> residual_bandwidths)
        : penalty_(penalty_weight), residual_bw_(std::move(residual_bandwidths)) {
        const auto& basis = init.inputs;
        basis_gram_ = detail::cross_gram(basis, basis, init.bandwidth);
        for (const auto& d : datasets) {
            Block b;
            b.n = d.size();
            b.design = detail::cross_gram(d.x, basis, init.bandwidth);
            b.y = Eigen::Map<const Eigen::VectorXd>(d.y.data(), static_cast<Eigen::Index>(d.size()));
            const auto kc = double_center(gaussian_gram(d.x, median_heuristic(d.x)), b.n);
            b.cause_centered = Eigen::Map<const Eigen::MatrixXd>(kc.data(), static_cast<Eigen::Index>(b.n),
                                                                 static_cast<Eigen::Index>(b.n));
            blocks_.push_back(std::move(b));
        }
        require(residual_bw_.size() == blocks_.size(), ErrorCode::LengthMismatch, "one residual bandwidth per dataset");
    }

    std::size_t dimension() const { return static_cast<std::size_t>(basis_gram_.rows()); }

    double value(const Eigen::VectorXd& alpha) const { return evaluate(alpha, nullptr); }

    double value_and_gradient(const Eigen::VectorXd& alpha, Eigen::VectorXd& grad) const {
        return evaluate(alpha, &grad);
    }

    /// HSIC term of dataset i alone.
    double hsic_term(std::size_t i, const Eigen::VectorXd& alpha) const {
        return block_term(blocks_.at(i), residual_bw_.at(i), alpha, nullptr);
    }

private:
    struct Block {
        std::size_t n = 0;
        Eigen::MatrixXd design;
        Eigen::VectorXd y;
        Eigen::MatrixXd cause_centered;
    };

    static double block_term(const Block& b, double bw, const Eigen::VectorXd& alpha, Eigen::VectorXd* grad) {
        const Eigen::VectorXd r = b.y - b.design * alpha;
        const double inv = 1.0 / (2.0 * bw * bw);
        const double norm = 1.0 / static_cast<double>(b.n * b.n);
        double total = 0.0;
        Eigen::VectorXd g;
        if (grad) g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b.n));
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(b.n); ++j) {
            total += b.cause_centered(j, j);  // L_jj = 1
            for (Eigen::Index k = j + 1; k < static_cast<Eigen::Index>(b.n); ++k) {
                const double d = r(j) - r(k);
                const double l = std::exp(-d * d * inv);
                const double kl = b.cause_centered(j, k) * l;
                total += 2.0 * kl;
                if (grad) {
                    // d/dr_j of 2 Kc_jk L_jk = -2 Kc_jk L_jk (r_j - r_k) / s^2
                    const double t = -4.0 * kl * d * inv;
                    g(j) += t;
                    g(k) -= t;
                }
            }
        }
        if (grad) *grad += -(b.design.transpose() * g) * norm;
        return total * norm;
    }

    double evaluate(const Eigen::VectorXd& alpha, Eigen::VectorXd* grad) const {
        if (grad) *grad = Eigen::VectorXd::Zero(alpha.size());
        double total = 0.0;
        for (std::size_t i = 0; i < blocks_.size(); ++i) total += block_term(blocks_[i], residual_bw_[i], alpha, grad);
        const Eigen::VectorXd ka = basis_gram_ * alpha;
        total += penalty_ * alpha.dot(ka);
        if (grad) *grad += 2.0 * penalty_ * ka;
        return total;
    }

    double penalty_;
    std::vector<double> residual_bw_;
    Eigen::MatrixXd basis_gram_;
    std::vector<Block> blocks_;
};

/// One mechanism shared by all datasets, fitted by gradient descent on
/// sum_i HSIC(causes_i, residuals_i) + penalty from the pooled
/// squared-error fit.  Dataset 0 has offset 0; the others carry a constant
/// offset so each residual set is zero-mean.  The HSIC terms are weighted
/// equally regardless of sample size.
inline ConditionalAnmFit fit_conditional_anm(std::span<const PairedSample> datasets, const AnmConfig& cfg = {}) {
    require(datasets.size() >= 2, ErrorCode::TooFewDatasets, "conditional fit needs at least two datasets");
    for (const auto& d : datasets) {
        require(d.x.size() == d.y.size(), ErrorCode::LengthMismatch, "causes and effects differ in length");
        require(d.size() >= kMinAnmSamples, ErrorCode::TooFewSamples, "each dataset needs at least 20 pairs");
    }

    ConditionalAnmFit fit;
    fit.model = fit_krr_pooled(datasets, cfg.krr);
    Eigen::VectorXd alpha = Eigen::Map<const Eigen::VectorXd>(fit.model.coefficients.data(),
                                                              static_cast<Eigen::Index>(fit.model.coefficients.size()));

    std::vector<double> residual_bw;
    for (const auto& d : datasets) residual_bw.push_back(median_heuristic(residuals(fit.model, d)));

    double penalty = 0.0;
    if (cfg.penalty_fraction > 0 && cfg.max_iterations > 0) {
        const ConditionalAnmObjective probe(datasets, fit.model, 0.0, residual_bw);
        const Eigen::MatrixXd kbb = detail::cross_gram(fit.model.inputs, fit.model.inputs, fit.model.bandwidth);
        const double norm = alpha.dot(kbb * alpha);
        if (norm > 0) penalty = cfg.penalty_fraction * probe.value(alpha) / norm;
    }
    const ConditionalAnmObjective objective(datasets, fit.model, penalty, residual_bw);

    Eigen::VectorXd grad;
    double current = objective.value_and_gradient(alpha, grad);
    require(std::isfinite(current), ErrorCode::NonFiniteObjective, "initial objective is not finite");
    fit.objective_trace.push_back(current);

    double step = 0.0;
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
        const double gnorm2 = grad.squaredNorm();
        if (!(gnorm2 > 0)) break;
        if (step == 0.0) step = 1e-2 * std::max(1.0, alpha.norm()) / std::sqrt(gnorm2);
        // backtracking line search with the Armijo condition
        bool accepted = false;
        Eigen::VectorXd candidate;
        double next = current;
        for (int halvings = 0; halvings < 50; ++halvings) {
            candidate = alpha - step * grad;
            next = objective.value(candidate);
            require(std::isfinite(next) || halvings < 49, ErrorCode::NonFiniteObjective, "objective diverged");
            if (std::isfinite(next) && next <= current - 1e-4 * step * gnorm2) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        const double decrease = current - next;
        alpha = candidate;
        current = objective.value_and_gradient(alpha, grad);
        fit.objective_trace.push_back(current);
        step *= 2.0;
        if (decrease < cfg.relative_tolerance * std::abs(fit.objective_trace.front())) break;
    }

    fit.model.coefficients.assign(alpha.data(), alpha.data() + alpha.size());
    fit.model.intercept = 0.0;
    std::vector<double> means;
    for (const auto& d : datasets) {
        const auto r = residuals(fit.model, d);
        means.push_back(sample_mean(r));
    }
    fit.model.intercept = means.front();
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        DatasetDiagnostics diag;
        diag.offset = i == 0 ? 0.0 : means[i] - means.front();
        diag.residuals = residuals(fit.model, datasets[i]);
        for (double& r : diag.residuals) r -= diag.offset;
        diag.independence = hsic_test(datasets[i].x, diag.residuals, cfg.n_permutations, cfg.seed + i);
        diag.noise_density = kde_auto(diag.residuals, std::nullopt, cfg.noise_grid_bins);
        fit.per_dataset.push_back(std::move(diag));
    }
    return fit;
}

}  // namespace cem
