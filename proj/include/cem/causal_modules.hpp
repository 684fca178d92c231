#pragma once

// Inverting injective conditionals, localizing which factor of P(C, E)
// changed, re-estimating the causal conditional, and the marginal
// consistency check for anticausal semi-supervised data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cem/anm.hpp"
#include "cem/density.hpp"
#include "cem/error.hpp"
#include "cem/grid.hpp"
#include "cem/regress.hpp"

namespace cem {

// ---------------------------------------------------------------------------
// Discrete conditionals

/// Column j is P(output | input = j).
class StochasticMatrix {
public:
    StochasticMatrix(std::size_t n_out, std::size_t n_in, std::vector<double> entries)
        : n_out_(n_out), n_in_(n_in), entries_(std::move(entries)) {
        require(n_out > 0 && n_in > 0, ErrorCode::DimensionMismatch, "stochastic matrix needs positive dimensions");
        require(entries_.size() == n_out * n_in, ErrorCode::DimensionMismatch, "entry count differs from n_out*n_in");
        for (double v : entries_)
            require(v >= 0 && std::isfinite(v), ErrorCode::InvalidArgument, "stochastic matrix entries must be >= 0");
        for (std::size_t j = 0; j < n_in; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n_out; ++i) s += at(i, j);
            require(std::abs(s - 1.0) <= 1e-9, ErrorCode::InvalidArgument,
                    "column " + std::to_string(j) + " does not sum to 1");
        }
    }

    /// From a list of rows, one per output value.
    static StochasticMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        require(!rows.empty(), ErrorCode::DimensionMismatch, "stochastic matrix needs at least one row");
        std::vector<double> e;
        for (const auto& r : rows) {
            require(r.size() == rows.front().size(), ErrorCode::DimensionMismatch, "ragged rows");
            e.insert(e.end(), r.begin(), r.end());
        }
        return {rows.size(), rows.front().size(), std::move(e)};
    }

    std::size_t n_out() const { return n_out_; }
    std::size_t n_in() const { return n_in_; }
    double at(std::size_t i, std::size_t j) const { return entries_[i * n_in_ + j]; }
    const std::vector<double>& entries() const { return entries_; }

    Eigen::MatrixXd matrix() const {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(n_out_), static_cast<Eigen::Index>(n_in_));
        for (std::size_t i = 0; i < n_out_; ++i)
            for (std::size_t j = 0; j < n_in_; ++j)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = at(i, j);
        return m;
    }

    std::vector<double> apply(std::span<const double> p) const {
        require(p.size() == n_in_, ErrorCode::DimensionMismatch, "vector length differs from n_in");
        std::vector<double> q(n_out_, 0.0);
        for (std::size_t i = 0; i < n_out_; ++i)
            for (std::size_t j = 0; j < n_in_; ++j) q[i] += at(i, j) * p[j];
        return q;
    }

private:
    std::size_t n_out_;
    std::size_t n_in_;
    std::vector<double> entries_;
};

/// Header "n_out n_in", then n_out rows of n_in entries.
inline StochasticMatrix read_stochastic_matrix(std::istream& in) {
    std::size_t n_out = 0;
    std::size_t n_in = 0;
    if (!(in >> n_out >> n_in)) fail(ErrorCode::InvalidConfig, "stochastic matrix header must be 'n_out n_in'");
    std::vector<double> e(n_out * n_in);
    for (double& v : e)
        if (!(in >> v)) fail(ErrorCode::InvalidConfig, "stochastic matrix has too few entries");
    return {n_out, n_in, std::move(e)};
}

inline void write_stochastic_matrix(std::ostream& out, const StochasticMatrix& m) {
    char buf[32];
    out << m.n_out() << ' ' << m.n_in() << '\n';
    for (std::size_t i = 0; i < m.n_out(); ++i) {
        for (std::size_t j = 0; j < m.n_in(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", m.at(i, j));
            out << (j ? " " : "") << buf;
        }
        out << '\n';
    }
}

struct MatrixInversion {
    std::vector<double> p;
    double residual_l1 = 0.0;
};

namespace detail {

/// Lawson-Hanson nonnegative least squares: min ||A x - b||, x >= 0.
inline Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iter = 500) {
    const Eigen::Index n = a.cols();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double tol = 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()) * std::max(1.0, b.cwiseAbs().maxCoeff());

    auto solve_passive = [&](Eigen::VectorXd& z) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < n; ++j)
            if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
        z = Eigen::VectorXd::Zero(n);
        if (idx.empty()) return;
        const Eigen::MatrixXd ap = a(Eigen::all, idx);
        const Eigen::VectorXd zp = ap.colPivHouseholderQr().solve(b);
        for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
    };

    for (int outer = 0; outer < max_iter; ++outer) {
        const Eigen::VectorXd w = a.transpose() * (b - a * x);
        Eigen::Index best = -1;
        double best_w = tol;
        for (Eigen::Index j = 0; j < n; ++j)
            if (!passive[static_cast<std::size_t>(j)] && w(j) > best_w) {
                best_w = w(j);
                best = j;
            }
        if (best < 0) break;
        passive[static_cast<std::size_t>(best)] = true;
        for (int inner = 0; inner < max_iter; ++inner) {
            Eigen::VectorXd z;
            solve_passive(z);
            bool feasible = true;
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0) feasible = false;
            if (feasible) {
                x = z;
                break;
            }
            double step = 1.0;
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)] && z(j) <= 0) step = std::min(step, x(j) / (x(j) - z(j)));
            x += step * (z - x);
            for (Eigen::Index j = 0; j < n; ++j)
                if (passive[static_cast<std::size_t>(j)] && x(j) <= 1e-15) {
                    passive[static_cast<std::size_t>(j)] = false;
                    x(j) = 0.0;
                }
        }
    }
    return x;
}

}  // namespace detail

/// Solve M p = q over the probability simplex.  Requires full column rank
/// (singular values above 1e-10 of the largest); exact when q lies in the
/// image of the simplex.
inline MatrixInversion invert_matrix_conditional(const StochasticMatrix& m, std::span<const double> q) {
    require(q.size() == m.n_out(), ErrorCode::DimensionMismatch, "q length differs from n_out");
    require(m.n_in() <= m.n_out(), ErrorCode::DimensionMismatch, "n_in must not exceed n_out");
    const Eigen::MatrixXd a = m.matrix();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& sv = svd.singularValues();
    require(sv.size() > 0 && sv(sv.size() - 1) > 1e-10 * sv(0), ErrorCode::RankDeficient,
            "stochastic matrix is not of full column rank");

    const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size()));
    Eigen::VectorXd p = a.colPivHouseholderQr().solve(b);
    const bool on_simplex = p.minCoeff() >= -1e-12 && std::abs(p.sum() - 1.0) <= 1e-9;
    if (!on_simplex) {
        // heavily weighted sum row turns the simplex constraint into NNLS
        const double w = 1e4 * std::max(1.0, a.norm());
        Eigen::MatrixXd aug(a.rows() + 1, a.cols());
        aug << a, Eigen::RowVectorXd::Constant(a.cols(), w);
        Eigen::VectorXd rhs(b.size() + 1);
        rhs << b, w;
        p = detail::nnls(aug, rhs);
    }
    p = p.cwiseMax(0.0);
    if (p.sum() > 0) p /= p.sum();

    MatrixInversion out;
    out.p.assign(p.data(), p.data() + p.size());
    out.residual_l1 = (a * p - b).cwiseAbs().sum();
    return out;
}

// ---------------------------------------------------------------------------
// Post-nonlinear conditionals

/// Piecewise-linear table with strictly increasing abscissae.
class MonotoneTable {
public:
    MonotoneTable() = default;
    MonotoneTable(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
        require(xs_.size() == ys_.size() && xs_.size() >= 2, ErrorCode::LengthMismatch,
                "table needs at least two (x, y) points");
        for (std::size_t i = 1; i < xs_.size(); ++i)
            require(xs_[i] > xs_[i - 1], ErrorCode::InvalidArgument, "table abscissae must increase");
    }

    template <typename F>
    static MonotoneTable tabulate(F&& f, double lo, double hi, std::size_t points) {
        std::vector<double> xs(points);
        std::vector<double> ys(points);
        for (std::size_t i = 0; i < points; ++i) {
            xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
            ys[i] = f(xs[i]);
        }
        return {std::move(xs), std::move(ys)};
    }

    /// +1 strictly increasing, -1 strictly decreasing, 0 otherwise.
    int monotonicity() const {
        bool inc = true;
        bool dec = true;
        for (std::size_t i = 1; i < ys_.size(); ++i) {
            if (!(ys_[i] > ys_[i - 1])) inc = false;
            if (!(ys_[i] < ys_[i - 1])) dec = false;
        }
        return inc ? 1 : (dec ? -1 : 0);
    }

    double x_min() const { return xs_.front(); }
    double x_max() const { return xs_.back(); }
    double y_min() const { return std::min(ys_.front(), ys_.back()); }
    double y_max() const { return std::max(ys_.front(), ys_.back()); }

    double operator()(double x) const { return interp(xs_, ys_, x); }

    double derivative(double x) const {
        const std::size_t k = segment(xs_, x);
        return (ys_[k + 1] - ys_[k]) / (xs_[k + 1] - xs_[k]);
    }

    /// Inverse of a strictly monotone table.
    double inverse(double y) const {
        if (ys_.back() > ys_.front()) return interp(ys_, xs_, y);
        std::vector<double> ry(ys_.rbegin(), ys_.rend());
        std::vector<double> rx(xs_.rbegin(), xs_.rend());
        return interp(ry, rx, y);
    }

private:
    static std::size_t segment(const std::vector<double>& xs, double x) {
        const auto it = std::upper_bound(xs.begin(), xs.end(), x);
        const auto k = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - xs.begin() - 1, 0));
        return std::min(k, xs.size() - 2);
    }
    static double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
        const std::size_t k = segment(xs, x);
        const double t = (x - xs[k]) / (xs[k + 1] - xs[k]);
        return ys[k] + t * (ys[k + 1] - ys[k]);
    }

    std::vector<double> xs_;
    std::vector<double> ys_;
};

/// Y = psi(phi(X) + N).
struct PnlConditional {
    MonotoneTable psi;
    MonotoneTable phi;
    GridDensity noise;
};

struct PnlOptions {
    double reg = kDefaultDeconvolutionReg;
    double tolerance = 0.05;
    std::size_t output_bins = 1024;
};

namespace detail {

/// Density of T on `target` where S = source(T) for the strictly monotone
/// table `source`: F_T(t) = F_S(source(t)), mirrored when decreasing.
inline GridDensity pull_back(const GridDensity& s, const MonotoneTable& source, const Grid& target) {
    std::vector<double> cum(s.size() + 1, 0.0);
    for (std::size_t k = 0; k < s.size(); ++k) cum[k + 1] = cum[k] + s.values()[k] * s.step();
    auto cdf_s = [&](double x) {
        const double pos = (x - s.grid().lo()) / s.step();
        if (pos <= 0) return 0.0;
        if (pos >= static_cast<double>(s.size())) return cum.back();
        const auto k = static_cast<std::size_t>(pos);
        return cum[k] + (pos - static_cast<double>(k)) * (cum[k + 1] - cum[k]);
    };
    const bool increasing = source.monotonicity() > 0;
    return GridDensity::from_cdf(target, [&](double t) {
        const double f = cdf_s(source(t));
        return increasing ? f : cum.back() - f;
    });
}

}  // namespace detail

/// Recover P(X) from the output density q of a post-nonlinear conditional:
/// undo psi, deconvolve the noise, undo phi.
inline GridDensity invert_pnl_conditional(const PnlConditional& cond, const GridDensity& q,
                                          const PnlOptions& opts = {}) {
    require(cond.psi.monotonicity() != 0, ErrorCode::NonInvertiblePsi, "psi table is not strictly monotone");
    require(cond.phi.monotonicity() != 0, ErrorCode::NonInjectivePhi, "phi table is not strictly monotone");
    const double step = cond.noise.step();

    // (i) T = psi^-1(Y) on a grid sharing the noise step
    const double eps = 1e-12 * std::max(1.0, std::abs(q.grid().hi()));
    require(q.grid().lo() >= cond.psi.y_min() - eps && q.grid().hi() <= cond.psi.y_max() + eps,
            ErrorCode::NonInvertiblePsi, "q extends beyond the range of psi");
    const double t_a = cond.psi.inverse(q.grid().lo());
    const double t_b = cond.psi.inverse(q.grid().hi());
    const Grid t_grid = Grid::aligned(std::min(t_a, t_b), std::max(t_a, t_b), step);
    const GridDensity t = detail::pull_back(q, cond.psi, t_grid);

    // (ii) remove the noise
    const SignedGridFn s_raw = deconvolve(t, cond.noise, opts.reg);
    const ValidityReport rep = validity(s_raw, opts.tolerance);
    require(rep.is_valid, ErrorCode::InvalidDeconvolution,
            "noise deconvolution is not a density (negative mass " + std::to_string(rep.negative_mass) + ")");
    const GridDensity s = GridDensity::clipped(s_raw);

    // (iii) X = phi^-1(S) on phi's domain
    const Grid x_grid(cond.phi.x_min(), cond.phi.x_max(), opts.output_bins);
    return detail::pull_back(s, cond.phi, x_grid);
}

// ---------------------------------------------------------------------------
// Localizing distribution change

enum class ShiftVerdict { CauseChanged, MechanismChanged, Ambiguous, NoFit };

inline std::string_view to_string(ShiftVerdict v) {
    switch (v) {
        case ShiftVerdict::CauseChanged: return "CauseChanged";
        case ShiftVerdict::MechanismChanged: return "MechanismChanged";
        case ShiftVerdict::Ambiguous: return "Ambiguous";
        case ShiftVerdict::NoFit: return "NoFit";
    }
    return "NoFit";
}

/// cause_ok: deconvolving by P(N_E) gave a density; mechanism_ok: deconvolving
/// by P(phi(C)) gave a zero-mean density.
inline ShiftVerdict classify_shift(bool cause_ok, bool mechanism_ok) {
    if (cause_ok && mechanism_ok) return ShiftVerdict::Ambiguous;
    if (cause_ok) return ShiftVerdict::CauseChanged;
    if (mechanism_ok) return ShiftVerdict::MechanismChanged;
    return ShiftVerdict::NoFit;
}

struct LocalizeConfig {
    AnmConfig anm;
    double alpha = 0.05;
    std::size_t grid_bins = 1024;
    std::optional<double> reg;  ///< empty: sample_regularization(new sample size)
    std::size_t bootstrap_replicates = 200;
    double bootstrap_quantile = 0.95;
    double mean_z = 2.576;  ///< two-sided 99% normal quantile for the mean check
    /// Effect KDE bandwidth as a multiple of Silverman's rule.
    double bandwidth_scale = 1.0;
};

/// Defaults for estimate_causal_conditional: the recovered noise is used as
/// a density, so the effect KDE is smoothed more than for the verdict alone.
inline LocalizeConfig estimation_config() {
    LocalizeConfig cfg;
    cfg.bandwidth_scale = 1.5;
    return cfg;
}

struct ShiftDiagnosis {
    ShiftVerdict verdict = ShiftVerdict::NoFit;
    ValidityReport cause_branch;      ///< deconvolution by P(N_E): candidate P'(phi(C))
    ValidityReport mechanism_branch;  ///< deconvolution by P(phi(C)): candidate P'(N_E)
    double mechanism_mean = 0.0;      ///< implied mean of P'(N_E)
    double mean_tolerance = 0.0;
    std::optional<GridDensity> recovered;

    AnmFit fit;
    GridDensity train_effects;  ///< KDE of the training effects
    GridDensity new_effects;    ///< KDE of the new effects

    bool mechanism_accepted() const {
        return mechanism_branch.is_valid && std::abs(mechanism_mean) <= mean_tolerance;
    }
};

namespace detail {

/// Inverse-CDF sampler over grid bins (uniform within a bin).
class GridSampler {
public:
    explicit GridSampler(const GridDensity& d) : grid_(d.grid()), cum_(d.size(), 0.0) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d.size(); ++k) cum_[k] = (acc += d.values()[k]);
        for (double& c : cum_) c /= acc;
    }
    double operator()(std::mt19937_64& rng) const {
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const auto k = static_cast<std::size_t>(std::lower_bound(cum_.begin(), cum_.end(), u) - cum_.begin());
        const double v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        return grid_.lo() + (static_cast<double>(std::min(k, cum_.size() - 1)) + v) * grid_.step();
    }

private:
    Grid grid_;
    std::vector<double> cum_;
};

struct ShiftAnalysis {
    AnmFit fit;
    double bandwidth = 0.0;  ///< KDE bandwidth of the effect densities
    double step = 0.0;
    double reg = 0.0;
    GridDensity new_effects;
    GridDensity train_effects;
    GridDensity phi_density;    ///< P(phi(C))
    GridDensity noise_density;  ///< P(N_E), bandwidth matched to phi_density
    SignedGridFn mechanism_candidate;
    SignedGridFn cause_candidate;
    double mechanism_tol = 0.0;
    double cause_tol = 0.0;
    double noise_mean = 0.0;  ///< mean of P'(N_E) implied by the sample means
    double mean_tol = 0.0;
    double reconvolution_l1 = 0.0;
    double reconvolution_threshold = 0.0;
};

/// Larger of the two validity scores, so one tolerance covers both.
inline double violation(const SignedGridFn& f) {
    const auto r = validity(f, 1.0);
    return std::max(r.negative_mass, r.total_mass_error);
}

inline double reconvolution_l1(const GridDensity& phi_density, const SignedGridFn& mechanism_candidate,
                               const GridDensity& target) {
    const GridDensity noise = GridDensity::clipped(mechanism_candidate).recentered();
    return l1_distance(target, convolve(phi_density, noise));
}

inline ShiftAnalysis analyze_shift(const PairedSample& train, std::span<const double> new_effects,
                                   const LocalizeConfig& cfg) {
    require(train.size() >= kMinAnmSamples, ErrorCode::TooFewSamples, "training data needs at least 20 pairs");
    require(new_effects.size() >= kMinAnmSamples, ErrorCode::TooFewSamples, "new data needs at least 20 effects");
    ShiftAnalysis s;
    s.fit = fit_anm(train, cfg.anm);
    require(s.fit.independence.p_value > cfg.alpha, ErrorCode::AnmMisfit,
            "training residuals depend on the cause (p = " + std::to_string(s.fit.independence.p_value) + ")");

    const std::size_t n_new = new_effects.size();
    // Factor KDEs use h/sqrt(2) so that their convolution carries the same
    // kernel width as the effect KDE.
    s.bandwidth = cfg.bandwidth_scale * silverman_bandwidth(new_effects);
    const double h_factor = s.bandwidth / std::numbers::sqrt2;
    const auto [mn, mx] = std::minmax_element(new_effects.begin(), new_effects.end());
    s.step = (*mx - *mn + 8.0 * s.bandwidth) / static_cast<double>(cfg.grid_bins);
    s.reg = cfg.reg.value_or(sample_regularization(n_new));

    const SampleSet phi_values = evaluate(s.fit.model, train.x);
    s.new_effects = kde(new_effects, kde_grid(new_effects, s.bandwidth, s.step), s.bandwidth);
    s.train_effects = kde(train.y, kde_grid(train.y, s.bandwidth, s.step), s.bandwidth);
    s.phi_density = kde(phi_values, kde_grid(phi_values, h_factor, s.step), h_factor);
    s.noise_density = kde(s.fit.residuals, kde_grid(s.fit.residuals, h_factor, s.step), h_factor);

    s.mechanism_candidate = deconvolve(s.new_effects, s.phi_density, s.reg);
    s.cause_candidate = deconvolve(s.new_effects, s.noise_density, s.reg);
    s.reconvolution_l1 = reconvolution_l1(s.phi_density, s.mechanism_candidate, s.new_effects);

    // Null calibration: resample the training effects at the new sample size
    // (no change) and record how far each deconvolution strays from a density.
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.anm.seed), static_cast<std::uint32_t>(cfg.anm.seed >> 32),
                      0xB007u};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    SampleSet resample(n_new);
    std::vector<double> neg_mech;
    std::vector<double> neg_cause;
    std::vector<double> reconv;
    for (std::size_t b = 0; b < cfg.bootstrap_replicates; ++b) {
        for (double& v : resample) v = train.y[pick(rng)];
        const GridDensity c = kde(resample, kde_grid(resample, s.bandwidth, s.step), s.bandwidth);
        const SignedGridFn mech = deconvolve(c, s.phi_density, s.reg);
        neg_mech.push_back(violation(mech));
        reconv.push_back(reconvolution_l1(s.phi_density, mech, c));
        neg_cause.push_back(violation(deconvolve(c, s.noise_density, s.reg)));
    }
    s.mechanism_tol = quantile(neg_mech, cfg.bootstrap_quantile);
    s.cause_tol = quantile(neg_cause, cfg.bootstrap_quantile);
    s.reconvolution_threshold = quantile(reconv, cfg.bootstrap_quantile);

    // With zero-mean training residuals, mean(E') - mean(E) is the mean of
    // the new noise; its standard error combines both samples.
    s.noise_mean = sample_mean(new_effects) - sample_mean(train.y);
    const double sd_train = sample_stddev(train.y);
    const double sd_new = sample_stddev(new_effects);
    s.mean_tol = cfg.mean_z * std::sqrt(sd_train * sd_train / static_cast<double>(train.size()) +
                                        sd_new * sd_new / static_cast<double>(n_new));
    return s;
}

}  // namespace detail

/// Decide whether P(C) or P(E|C) changed between the training pairs and a
/// sample of new effects, by checking which deconvolution of the new effect
/// density yields a probability density.
inline ShiftDiagnosis localize_shift(const PairedSample& train, std::span<const double> new_effects,
                                     const LocalizeConfig& cfg = {}) {
    auto s = detail::analyze_shift(train, new_effects, cfg);
    ShiftDiagnosis d;
    d.cause_branch = validity(s.cause_candidate, s.cause_tol);
    d.mechanism_branch = validity(s.mechanism_candidate, s.mechanism_tol);
    d.mechanism_mean = s.noise_mean;
    d.mean_tolerance = s.mean_tol;
    d.verdict = classify_shift(d.cause_branch.is_valid, d.mechanism_accepted());
    if (d.verdict == ShiftVerdict::CauseChanged) d.recovered = GridDensity::clipped(s.cause_candidate);
    if (d.verdict == ShiftVerdict::MechanismChanged) d.recovered = GridDensity::clipped(s.mechanism_candidate).recentered();
    d.fit = std::move(s.fit);
    d.train_effects = std::move(s.train_effects);
    d.new_effects = std::move(s.new_effects);
    return d;
}

struct CausalConditionalEstimate {
    RegressionModel model;
    GridDensity new_noise;
    ValidityReport validity;
    double reconvolution_l1 = 0.0;
    double reconvolution_threshold = 0.0;
    /// Reconvolving the new noise with P(phi(C)) misses the new effect
    /// density by more than the null calibration allows.
    bool reconvolution_flagged = false;
};

/// Keep the training mechanism and re-estimate the noise from new effects,
/// assuming P(C) is unchanged.
inline CausalConditionalEstimate estimate_causal_conditional(const PairedSample& train,
                                                             std::span<const double> new_effects,
                                                             const LocalizeConfig& cfg = estimation_config()) {
    auto s = detail::analyze_shift(train, new_effects, cfg);
    CausalConditionalEstimate out;
    out.validity = validity(s.mechanism_candidate, s.mechanism_tol);
    const double mean = s.noise_mean;
    require(out.validity.is_valid, ErrorCode::InvalidDeconvolution,
            "deconvolution by P(phi(C)) is not a density (negative mass " +
                std::to_string(out.validity.negative_mass) + "); P(C) has likely changed");
    require(std::abs(mean) <= s.mean_tol, ErrorCode::InvalidDeconvolution,
            "recovered noise has mean " + std::to_string(mean) + "; P(C) has likely changed");
    out.model = std::move(s.fit.model);
    out.new_noise = GridDensity::clipped(s.mechanism_candidate).recentered();
    out.reconvolution_l1 = s.reconvolution_l1;
    out.reconvolution_threshold = s.reconvolution_threshold;
    out.reconvolution_flagged = s.reconvolution_l1 > s.reconvolution_threshold;
    return out;
}

// ---------------------------------------------------------------------------
// Marginal consistency

/// Continuous conditional X = phi(Y) + N.
struct NoiseModel {
    RegressionModel model;
    GridDensity noise;
};

using ConditionalModel = std::variant<StochasticMatrix, NoiseModel>;
using Marginal = std::variant<std::vector<double>, GridDensity>;

struct ConsistencyResult {
    double distance = 0.0;
    double threshold = 0.0;
    bool consistent = false;
};

struct ConsistencyConfig {
    std::size_t bootstrap_replicates = 200;
    double bootstrap_quantile = 0.95;
    std::size_t grid_bins = 512;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<double> histogram(std::span<const double> categories, std::size_t k) {
    std::vector<double> h(k, 0.0);
    for (double c : categories) {
        const auto i = static_cast<long>(std::lround(c));
        require(i >= 0 && static_cast<std::size_t>(i) < k && std::abs(c - static_cast<double>(i)) < 1e-9,
                ErrorCode::InvalidArgument, "discrete inputs must be category indices");
        h[static_cast<std::size_t>(i)] += 1.0;
    }
    for (double& v : h) v /= static_cast<double>(categories.size());
    return h;
}

inline double l1(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

}  // namespace detail

/// Model-implied input marginal: discrete M p_y, or the mixture of noise
/// densities shifted by phi(y) weighted by p_y on `grid`.
inline std::vector<double> implied_marginal(const StochasticMatrix& m, std::span<const double> p_y) {
    return m.apply(p_y);
}

inline GridDensity implied_marginal(const NoiseModel& nm, const GridDensity& p_y, const Grid& grid) {
    std::vector<double> v(grid.size(), 0.0);
    const auto centers = grid.centers();
    for (std::size_t j = 0; j < p_y.size(); ++j) {
        const double w = p_y.values()[j] * p_y.step();
        if (w == 0.0) continue;
        const double shift = nm.model(p_y.grid().center(j));
        for (std::size_t k = 0; k < grid.size(); ++k) v[k] += w * nm.noise.at(centers[k] - shift);
    }
    return GridDensity::normalized(grid, std::move(v));
}

/// Does the model generate the observed input distribution?  The L1
/// distance between the implied marginal and the empirical one is compared
/// with its bootstrap distribution under the model.
inline ConsistencyResult marginal_consistency_check(const ConditionalModel& conditional, const Marginal& p_y,
                                                    std::span<const double> extra_inputs,
                                                    const ConsistencyConfig& cfg = {}) {
    require(conditional.index() == p_y.index(), ErrorCode::TypeMismatch,
            "conditional and marginal must both be discrete or both continuous");
    require(!extra_inputs.empty(), ErrorCode::EmptySample, "no extra inputs");
    const std::size_t n = extra_inputs.size();
    ConsistencyResult r;
    std::vector<double> null_dist;
    std::mt19937_64 rng(cfg.seed);

    if (const auto* m = std::get_if<StochasticMatrix>(&conditional)) {
        const auto& py = std::get<std::vector<double>>(p_y);
        const auto implied = implied_marginal(*m, py);
        r.distance = detail::l1(implied, detail::histogram(extra_inputs, m->n_out()));
        std::discrete_distribution<std::size_t> draw(implied.begin(), implied.end());
        std::vector<double> sample(n);
        for (std::size_t b = 0; b < cfg.bootstrap_replicates; ++b) {
            for (double& s : sample) s = static_cast<double>(draw(rng));
            null_dist.push_back(detail::l1(implied, detail::histogram(sample, m->n_out())));
        }
    } else {
        const auto& nm = std::get<NoiseModel>(conditional);
        const auto& py = std::get<GridDensity>(p_y);
        const double h = silverman_bandwidth(extra_inputs);
        // cover both the observed inputs and the bulk of the implied marginal
        double lo = *std::min_element(extra_inputs.begin(), extra_inputs.end());
        double hi = *std::max_element(extra_inputs.begin(), extra_inputs.end());
        for (std::size_t j = 0; j < py.size(); ++j) {
            if (py.values()[j] <= 0) continue;
            const double c = nm.model(py.grid().center(j));
            lo = std::min(lo, c + nm.noise.grid().lo());
            hi = std::max(hi, c + nm.noise.grid().hi());
        }
        const Grid grid(lo - 4 * h, hi + 4 * h, cfg.grid_bins);
        const GridDensity implied = implied_marginal(nm, py, grid);
        // compare like with like: smooth the implied marginal with the KDE kernel
        const GridDensity kernel = gaussian_kernel(h, grid.step());
        const GridDensity smoothed = convolve(implied, kernel).resampled(grid);
        r.distance = l1_distance(kde(extra_inputs, grid, h), smoothed);
        const detail::GridSampler sampler(implied);
        std::vector<double> sample(n);
        for (std::size_t b = 0; b < cfg.bootstrap_replicates; ++b) {
            for (double& s : sample) s = sampler(rng);
            null_dist.push_back(l1_distance(kde(sample, grid, h), smoothed));
        }
    }
    r.threshold = quantile(null_dist, cfg.bootstrap_quantile);
    r.consistent = r.distance <= r.threshold;
    return r;
}

}  // namespace cem
