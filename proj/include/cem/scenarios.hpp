#pragma once

// Adaptation pipelines: each (prediction direction, extra data, assumption)
// configuration is routed to one procedure that returns an adapted
// conditional P'(Y|X) on a grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "cem/anm.hpp"
#include "cem/causal_modules.hpp"
#include "cem/density.hpp"
#include "cem/error.hpp"
#include "cem/grid.hpp"

namespace cem {

enum class PredictionDirection { Causal, Anticausal };
enum class ExtraKind { Inputs, Outputs, Pairs };
enum class DriftKind { NoiseChange, MechanismChange };

inline std::string_view to_string(PredictionDirection d) {
    return d == PredictionDirection::Causal ? "causal" : "anticausal";
}
inline std::string_view to_string(ExtraKind k) {
    switch (k) {
        case ExtraKind::Inputs: return "inputs";
        case ExtraKind::Outputs: return "outputs";
        case ExtraKind::Pairs: return "pairs";
    }
    return "inputs";
}
inline std::string_view to_string(DriftKind k) { return k == DriftKind::NoiseChange ? "noise" : "mechanism"; }

struct ScenarioSpec {
    PredictionDirection direction = PredictionDirection::Causal;
    ExtraKind extra_kind = ExtraKind::Inputs;
    bool extra_is_shifted = true;
    std::optional<DriftKind> drift_kind;  ///< required exactly when extra_kind is Pairs
    double alpha = 0.05;
    std::uint64_t seed = 0;
};

inline void validate(const ScenarioSpec& spec) {
    require(spec.drift_kind.has_value() == (spec.extra_kind == ExtraKind::Pairs), ErrorCode::InvalidConfig,
            "drift_kind must be given exactly when the extra data are pairs");
    require(spec.alpha > 0 && spec.alpha < 1, ErrorCode::InvalidConfig, "alpha must lie in (0, 1)");
}

struct ScenarioConfig {
    LocalizeConfig localize;
    std::optional<Grid> x_grid;
    std::optional<Grid> y_grid;
    std::size_t x_bins = 128;
    std::size_t y_bins = 256;
    /// causal_ssl_outputs only applies when the noise is asserted Gaussian.
    bool gaussian_noise = true;
    double ssl_tolerance = kSampleGaussianTolerance;
    ConsistencyConfig consistency;

    const AnmConfig& anm() const { return localize.anm; }
    double alpha() const { return localize.alpha; }
};

struct Provenance {
    std::string route;
    std::vector<std::string> flags;
    std::vector<std::pair<std::string, double>> values;

    bool has_flag(std::string_view f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
    void flag(std::string f) {
        if (!has_flag(f)) flags.push_back(std::move(f));
    }
    void set(std::string key, double v) {
        for (auto& [k, old] : values)
            if (k == key) {
                old = v;
                return;
            }
        values.emplace_back(std::move(key), v);
    }
    std::optional<double> value(std::string_view key) const {
        for (const auto& [k, v] : values)
            if (k == key) return v;
        return std::nullopt;
    }
};

/// Conditional density table: row k is p(y | x in bin k) over y_grid.
struct ConditionalPredictor {
    Grid x_grid;
    Grid y_grid;
    std::vector<double> density;  ///< row-major x_grid.size() x y_grid.size()
    std::vector<double> point_estimate;
    Provenance provenance;

    std::span<const double> row(std::size_t k) const {
        return {density.data() + k * y_grid.size(), y_grid.size()};
    }

    double row_std(std::size_t k) const {
        const auto r = row(k);
        const double dy = y_grid.step();
        double var = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            const double d = y_grid.center(j) - point_estimate[k];
            var += d * d * r[j] * dy;
        }
        return std::sqrt(var);
    }

    /// Point estimate of the bin containing x (clamped to the grid).
    double predict(double x) const {
        const double pos = (x - x_grid.lo()) / x_grid.step();
        const auto k = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(x_grid.size() - 1)));
        return point_estimate[k];
    }
};

namespace detail {

/// CDF of a grid density, linear within bins.
class GridCdf {
public:
    explicit GridCdf(const GridDensity& d) : grid_(d.grid()), cum_(d.size() + 1, 0.0) {
        for (std::size_t k = 0; k < d.size(); ++k) cum_[k + 1] = cum_[k] + d.values()[k] * d.step();
    }
    double operator()(double x) const {
        const double pos = (x - grid_.lo()) / grid_.step();
        if (pos <= 0) return 0.0;
        if (pos >= static_cast<double>(grid_.size())) return cum_.back();
        const auto k = static_cast<std::size_t>(pos);
        return cum_[k] + (pos - static_cast<double>(k)) * (cum_[k + 1] - cum_[k]);
    }

private:
    Grid grid_;
    std::vector<double> cum_;
};

/// Probability of each bin of `grid` under d shifted by `shift`.
inline std::vector<double> bin_masses(const GridCdf& cdf, const Grid& grid, double shift = 0.0) {
    std::vector<double> out(grid.size());
    const double dy = grid.step();
    double prev = cdf(grid.lo() - shift);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double next = cdf(grid.lo() + static_cast<double>(j + 1) * dy - shift);
        out[j] = std::max(0.0, next - prev);
        prev = next;
    }
    return out;
}

/// Row-normalize and fill the point estimates.
inline void finalize(ConditionalPredictor& p) {
    const std::size_t ny = p.y_grid.size();
    const double dy = p.y_grid.step();
    p.point_estimate.assign(p.x_grid.size(), 0.0);
    for (std::size_t k = 0; k < p.x_grid.size(); ++k) {
        double* r = p.density.data() + k * ny;
        double total = 0.0;
        for (std::size_t j = 0; j < ny; ++j) total += r[j];
        total *= dy;
        double mean = 0.0;
        for (std::size_t j = 0; j < ny; ++j) {
            r[j] /= total;
            mean += p.y_grid.center(j) * r[j] * dy;
        }
        p.point_estimate[k] = mean;
    }
}

/// P(Y | X = x) = noise(y - mean(x)) tabulated on the grids.  A row whose
/// noise mass misses the y grid becomes a spike at the nearest bin.
template <typename MeanFn>
ConditionalPredictor predictor_from_noise(const Grid& x_grid, const Grid& y_grid, MeanFn&& mean,
                                          const GridDensity& noise) {
    ConditionalPredictor p;
    p.x_grid = x_grid;
    p.y_grid = y_grid;
    const std::size_t ny = y_grid.size();
    p.density.assign(x_grid.size() * ny, 0.0);
    const GridCdf cdf(noise);
    const double dy = y_grid.step();
    std::size_t outside = 0;
    for (std::size_t k = 0; k < x_grid.size(); ++k) {
        const double mu = mean(x_grid.center(k));
        const auto masses = bin_masses(cdf, y_grid, mu);
        double total = 0.0;
        for (double v : masses) total += v;
        double* r = p.density.data() + k * ny;
        if (total > 1e-300) {
            for (std::size_t j = 0; j < ny; ++j) r[j] = masses[j] / dy;
        } else {
            ++outside;
            const double pos = (mu - y_grid.lo()) / dy;
            r[static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(ny - 1)))] = 1.0 / dy;
        }
    }
    finalize(p);
    if (outside > 0) {
        p.provenance.flag("rows_outside_y_grid");
        p.provenance.set("rows_outside_y_grid", static_cast<double>(outside));
    }
    return p;
}

inline ConditionalPredictor predictor_from_model(const Grid& x_grid, const Grid& y_grid, const RegressionModel& model,
                                                 const GridDensity& noise) {
    return predictor_from_noise(x_grid, y_grid, [&model](double x) { return model(x); }, noise);
}

inline std::pair<Grid, Grid> resolve_grids(const PairedSample& train, const ScenarioConfig& cfg,
                                           double noise_sd) {
    const auto [xmin, xmax] = std::minmax_element(train.x.begin(), train.x.end());
    const auto [ymin, ymax] = std::minmax_element(train.y.begin(), train.y.end());
    const double pad = 3.0 * std::max(noise_sd, 1e-3 * std::max(1.0, *ymax - *ymin));
    Grid xg = cfg.x_grid.value_or(Grid(*xmin, *xmax > *xmin ? *xmax : *xmin + 1.0, cfg.x_bins));
    Grid yg = cfg.y_grid.value_or(Grid(*ymin - pad, *ymax + pad, cfg.y_bins));
    return {xg, yg};
}

inline std::string verdict_flag(ShiftVerdict v) {
    switch (v) {
        case ShiftVerdict::CauseChanged: return "cause_changed";
        case ShiftVerdict::MechanismChanged: return "mechanism_changed";
        case ShiftVerdict::Ambiguous: return "ambiguous_shift";
        case ShiftVerdict::NoFit: return "no_fit_shift";
    }
    return "no_fit_shift";
}

inline void record_diagnosis(Provenance& p, const ShiftDiagnosis& d) {
    p.flag(verdict_flag(d.verdict));
    p.set("cause_branch_negative_mass", d.cause_branch.negative_mass);
    p.set("cause_branch_tolerance", d.cause_branch.tolerance_used);
    p.set("mechanism_branch_negative_mass", d.mechanism_branch.negative_mass);
    p.set("mechanism_branch_tolerance", d.mechanism_branch.tolerance_used);
    p.set("mechanism_mean", d.mechanism_mean);
    p.set("mechanism_mean_tolerance", d.mean_tolerance);
    p.set("train_independence_p", d.fit.independence.p_value);
    if (d.verdict == ShiftVerdict::Ambiguous || d.verdict == ShiftVerdict::NoFit) p.flag("warning_baseline_returned");
}

inline void record_fit(Provenance& p, const std::string& prefix, const AnmFit& fit, double alpha) {
    p.set(prefix + "_independence_p", fit.independence.p_value);
    if (fit.independence.p_value <= alpha) p.flag(prefix + "_misfit");
}

/// Strictly monotone on the central 98% of the sample?
inline bool monotone_on(const RegressionModel& model, std::span<const double> xs) {
    std::vector<double> v(xs.begin(), xs.end());
    const double lo = quantile(v, 0.01);
    const double hi = quantile(v, 0.99);
    if (!(hi > lo)) return false;
    const auto table = MonotoneTable::tabulate([&](double x) { return model(x); }, lo, hi, 200);
    return table.monotonicity() != 0;
}

/// New noise for a MechanismChanged verdict, via estimate_causal_conditional
/// with its own smoothing; if that estimate is rejected, the verdict's
/// recovered density is used and flagged.
inline GridDensity changed_noise(const PairedSample& train, std::span<const double> effects,
                                 const ShiftDiagnosis& d, const LocalizeConfig& cfg, Provenance& prov) {
    LocalizeConfig est = estimation_config();
    est.anm = cfg.anm;
    est.alpha = cfg.alpha;
    est.grid_bins = cfg.grid_bins;
    est.reg = cfg.reg;
    try {
        auto e = estimate_causal_conditional(train, effects, est);
        if (e.reconvolution_flagged) prov.flag("reconvolution_mismatch");
        prov.set("reconvolution_l1", e.reconvolution_l1);
        return std::move(e.new_noise);
    } catch (const Error& err) {
        if (err.code() != ErrorCode::InvalidDeconvolution) throw;
        prov.flag("estimate_rejected");
        return *d.recovered;
    }
}

inline MonotoneTable mechanism_table(const RegressionModel& model, std::span<const double> xs) {
    std::vector<double> v(xs.begin(), xs.end());
    return MonotoneTable::tabulate([&](double x) { return model(x); }, quantile(v, 0.01), quantile(v, 0.99), 200);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Baseline and Bayes reweighting

/// Conditional from an ANM fit in the prediction direction:
/// P(Y | X) = P_N(Y - phi(X)).
inline ConditionalPredictor baseline_predictor(const PairedSample& train, const ScenarioConfig& cfg = {}) {
    const AnmFit fit = fit_anm(train, cfg.anm());
    const auto [xg, yg] = detail::resolve_grids(train, cfg, fit.noise_density.stddev());
    auto p = detail::predictor_from_model(xg, yg, fit.model, fit.noise_density);
    p.provenance.route = "baseline";
    detail::record_fit(p.provenance, "train", fit, cfg.alpha());
    return p;
}

/// Posterior P'(Y | X) from a conditional in the causal direction (rows over
/// Y, densities over X) and a new prior over Y.  The result's x_grid is the
/// causal predictor's y_grid and vice versa.  Rows without evidence are
/// flagged and set to the prior.
inline ConditionalPredictor bayes_reweight(const ConditionalPredictor& causal, const GridDensity& p_y_new) {
    const Grid& y_grid = causal.x_grid;
    const Grid& x_grid = causal.y_grid;
    require(causal.density.size() == y_grid.size() * x_grid.size(), ErrorCode::ShapeMismatch,
            "conditional table does not match its grids");
    const auto prior = detail::bin_masses(detail::GridCdf(p_y_new), y_grid);
    double prior_total = 0.0;
    for (double w : prior) prior_total += w;
    require(prior_total > 0, ErrorCode::ShapeMismatch, "new prior has no mass on the conditional's grid");

    ConditionalPredictor out;
    out.x_grid = x_grid;
    out.y_grid = y_grid;
    const std::size_t nx = x_grid.size();
    const std::size_t ny = y_grid.size();
    out.density.assign(nx * ny, 0.0);
    std::size_t undefined = 0;
    for (std::size_t k = 0; k < nx; ++k) {
        double total = 0.0;
        for (std::size_t j = 0; j < ny; ++j) total += causal.density[j * nx + k] * prior[j];
        double* r = out.density.data() + k * ny;
        if (total < 1e-12) {
            ++undefined;
            for (std::size_t j = 0; j < ny; ++j) r[j] = prior[j];
        } else {
            for (std::size_t j = 0; j < ny; ++j) r[j] = causal.density[j * nx + k] * prior[j];
        }
    }
    detail::finalize(out);
    out.provenance.route = "bayes-reweight";
    if (undefined > 0) {
        out.provenance.flag("undefined_rows");
        out.provenance.set("undefined_rows", static_cast<double>(undefined));
    }
    return out;
}

/// Discrete posterior P'(Y | X): rows indexed by output x, columns by y.
struct DiscretePosterior {
    std::size_t n_x = 0;
    std::size_t n_y = 0;
    std::vector<double> rows;
    std::vector<bool> defined;

    std::span<const double> row(std::size_t x) const { return {rows.data() + x * n_y, n_y}; }
};

inline DiscretePosterior bayes_reweight(const StochasticMatrix& m, std::span<const double> p_y_new) {
    require(p_y_new.size() == m.n_in(), ErrorCode::ShapeMismatch, "prior length differs from the matrix columns");
    double s = 0.0;
    for (double w : p_y_new) {
        require(w >= 0 && std::isfinite(w), ErrorCode::ShapeMismatch, "prior entries must be nonnegative");
        s += w;
    }
    require(std::abs(s - 1.0) <= 1e-9, ErrorCode::ShapeMismatch, "prior must sum to 1");
    DiscretePosterior out;
    out.n_x = m.n_out();
    out.n_y = m.n_in();
    out.rows.assign(out.n_x * out.n_y, 0.0);
    out.defined.assign(out.n_x, true);
    for (std::size_t x = 0; x < out.n_x; ++x) {
        double total = 0.0;
        for (std::size_t y = 0; y < out.n_y; ++y) total += m.at(x, y) * p_y_new[y];
        for (std::size_t y = 0; y < out.n_y; ++y) {
            if (total < 1e-12) {
                out.rows[x * out.n_y + y] = p_y_new[y];
            } else {
                out.rows[x * out.n_y + y] = m.at(x, y) * p_y_new[y] / total;
            }
        }
        out.defined[x] = total >= 1e-12;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Causal prediction pipelines

/// New outputs only: localize the change; a changed noise is re-estimated,
/// a changed input distribution leaves the conditional alone, and anything
/// undecided falls back to the baseline with a warning.
inline ConditionalPredictor causal_output_shift(const PairedSample& train, std::span<const double> new_outputs,
                                                const ScenarioConfig& cfg = {}) {
    const ShiftDiagnosis d = localize_shift(train, new_outputs, cfg.localize);
    const auto [xg, yg] = detail::resolve_grids(train, cfg, d.fit.noise_density.stddev());
    Provenance prov;
    ConditionalPredictor p;
    if (d.verdict == ShiftVerdict::MechanismChanged) {
        const GridDensity noise = detail::changed_noise(train, new_outputs, d, cfg.localize, prov);
        p = detail::predictor_from_model(xg, yg, d.fit.model, noise);
        prov.set("new_noise_sd", noise.stddev());
    } else {
        p = detail::predictor_from_model(xg, yg, d.fit.model, d.fit.noise_density);
    }
    for (auto& f : prov.flags) p.provenance.flag(f);
    for (auto& [k, v] : prov.values) p.provenance.set(k, v);
    p.provenance.route = "localize-shift";
    detail::record_diagnosis(p.provenance, d);
    return p;
}

/// Extra unpaired outputs from the same distribution, Gaussian noise: the
/// widest Gaussian factor of the pooled output law is the noise.
inline ConditionalPredictor causal_ssl_outputs(const PairedSample& train, std::span<const double> extra_outputs,
                                               const ScenarioConfig& cfg = {}) {
    require(cfg.gaussian_noise, ErrorCode::UnsupportedScenario,
            "output decomposition is only identified for Gaussian noise");
    const AnmFit fit = fit_anm(train, cfg.anm());
    const auto [xg, yg] = detail::resolve_grids(train, cfg, fit.noise_density.stddev());
    if (extra_outputs.empty()) {
        auto p = detail::predictor_from_model(xg, yg, fit.model, fit.noise_density);
        p.provenance.route = "noise-decomposition";
        p.provenance.flag("no_extra_outputs");
        detail::record_fit(p.provenance, "train", fit, cfg.alpha());
        return p;
    }
    SampleSet pooled(train.y.begin(), train.y.end());
    pooled.insert(pooled.end(), extra_outputs.begin(), extra_outputs.end());
    const auto dec = max_gaussian_from_samples(pooled, cfg.ssl_tolerance);
    const GridDensity noise = gaussian_kernel(dec.sigma, std::min(yg.step(), std::max(dec.sigma, 1e-6) / 16.0));
    auto p = detail::predictor_from_model(xg, yg, fit.model, noise);
    p.provenance.route = "noise-decomposition";
    p.provenance.set("sigma_hat", dec.sigma);
    p.provenance.set("sigma_max_kde", dec.raw.sigma_max);
    p.provenance.set("kde_bandwidth", dec.bandwidth);
    p.provenance.set("remainder_clipped_mass", dec.raw.clipped_mass);
    p.provenance.set("residual_sd", sample_stddev(fit.residuals));
    detail::record_fit(p.provenance, "train", fit, cfg.alpha());
    return p;
}

/// Pairs with the same mechanism but new noise: one shared function, the
/// target domain's noise.
inline ConditionalPredictor causal_transfer(const PairedSample& train, const PairedSample& extra_pairs,
                                            const ScenarioConfig& cfg = {}) {
    const std::vector<PairedSample> sets{train, extra_pairs};
    const ConditionalAnmFit cf = fit_conditional_anm(sets, cfg.anm());
    const auto& target = cf.per_dataset[1];
    const auto [xg, yg] = detail::resolve_grids(train, cfg, cf.per_dataset[0].noise_density.stddev());
    auto p = detail::predictor_from_noise(xg, yg, [&](double x) { return cf.predict(1, x); }, target.noise_density);
    p.provenance.route = "conditional-anm";
    p.provenance.set("offset", target.offset);
    for (std::size_t i = 0; i < cf.per_dataset.size(); ++i) {
        const double pv = cf.per_dataset[i].independence.p_value;
        p.provenance.set("dataset" + std::to_string(i) + "_independence_p", pv);
        if (pv <= cfg.alpha()) p.provenance.flag("misfit");
    }
    p.provenance.set("iterations", static_cast<double>(cf.objective_trace.size() - 1));
    return p;
}

/// Pairs from a changed mechanism with the same noise: refit phi on the new
/// pairs, keep the training noise.
inline ConditionalPredictor causal_concept_drift(const PairedSample& train, const PairedSample& extra_pairs,
                                                 const ScenarioConfig& cfg = {}) {
    const AnmFit train_fit = fit_anm(train, cfg.anm());
    const AnmFit new_fit = fit_anm(extra_pairs, cfg.anm());
    const auto [xg, yg] = detail::resolve_grids(train, cfg, train_fit.noise_density.stddev());
    auto p = detail::predictor_from_model(xg, yg, new_fit.model, train_fit.noise_density);
    p.provenance.route = "concept-drift";
    detail::record_fit(p.provenance, "train", train_fit, cfg.alpha());
    detail::record_fit(p.provenance, "extra", new_fit, cfg.alpha());
    return p;
}

// ---------------------------------------------------------------------------
// Anticausal prediction pipelines (the causal direction is Y -> X)

namespace detail {

/// Causal conditional P(X | Y) on the ML grids swapped.
inline ConditionalPredictor causal_table(const Grid& ml_x, const Grid& ml_y, const RegressionModel& model,
                                         const GridDensity& noise) {
    return predictor_from_model(ml_y, ml_x, model, noise);
}

template <typename MeanFn>
ConditionalPredictor causal_table(const Grid& ml_x, const Grid& ml_y, MeanFn&& mean, const GridDensity& noise) {
    return predictor_from_noise(ml_y, ml_x, std::forward<MeanFn>(mean), noise);
}

inline ConditionalPredictor posterior(const ConditionalPredictor& causal, const GridDensity& prior,
                                      std::string route) {
    auto p = bayes_reweight(causal, prior);
    for (const auto& f : causal.provenance.flags) p.provenance.flag(f);
    p.provenance.route = std::move(route);
    return p;
}

}  // namespace detail

/// New inputs (effects) only: localize; a changed prior is recovered through
/// the inverted mechanism, a changed noise is re-estimated; then Bayes.
inline ConditionalPredictor anticausal_input_shift(const PairedSample& train, std::span<const double> new_inputs,
                                                   const ScenarioConfig& cfg = {}) {
    const PairedSample causal = train.swapped();
    const RegressionModel probe = fit_krr(causal, cfg.anm().krr);
    require(detail::monotone_on(probe, causal.x), ErrorCode::NonMonotonePhi,
            "the fitted mechanism is not monotone, so P(Y) cannot be recovered from P(X)");

    const ShiftDiagnosis d = localize_shift(causal, new_inputs, cfg.localize);
    const auto [xg, yg] = detail::resolve_grids(train, cfg, 0.0);
    const GridDensity train_prior = kde_auto(train.y);
    ConditionalPredictor p;
    switch (d.verdict) {
        case ShiftVerdict::CauseChanged: {
            const auto table = detail::mechanism_table(d.fit.model, causal.x);
            const GridDensity new_prior = detail::pull_back(*d.recovered, table, yg);
            p = detail::posterior(detail::causal_table(xg, yg, d.fit.model, d.fit.noise_density), new_prior,
                                  "localize-shift-inverse");
            p.provenance.set("new_prior_mean", new_prior.mean());
            p.provenance.set("new_prior_sd", new_prior.stddev());
            break;
        }
        case ShiftVerdict::MechanismChanged: {
            Provenance prov;
            const GridDensity noise = detail::changed_noise(causal, new_inputs, d, cfg.localize, prov);
            p = detail::posterior(detail::causal_table(xg, yg, d.fit.model, noise), train_prior,
                                  "localize-shift-inverse");
            for (auto& f : prov.flags) p.provenance.flag(f);
            for (auto& [k, v] : prov.values) p.provenance.set(k, v);
            p.provenance.set("new_noise_sd", noise.stddev());
            break;
        }
        default:
            p = baseline_predictor(train, cfg);
            p.provenance.route = "localize-shift-inverse";
            break;
    }
    detail::record_diagnosis(p.provenance, d);
    return p;
}

/// Extra outputs (causes): the mechanism P(X|Y) is unchanged, only the prior
/// moves.  Unshifted extra outputs are pooled with the training ones.
inline ConditionalPredictor anticausal_output_shift(const PairedSample& train, std::span<const double> extra_outputs,
                                                    bool shifted, const ScenarioConfig& cfg = {}) {
    require(!extra_outputs.empty(), ErrorCode::EmptySample, "no extra outputs");
    const PairedSample causal = train.swapped();
    const AnmFit fit = fit_anm(causal, cfg.anm());
    const auto [xg, yg] = detail::resolve_grids(train, cfg, 0.0);
    SampleSet prior_sample(extra_outputs.begin(), extra_outputs.end());
    if (!shifted) prior_sample.insert(prior_sample.end(), train.y.begin(), train.y.end());
    const GridDensity prior = kde_auto(prior_sample);
    auto p = detail::posterior(detail::causal_table(xg, yg, fit.model, fit.noise_density), prior, "bayes-reweight");
    detail::record_fit(p.provenance, "causal", fit, cfg.alpha());
    if (!shifted) p.provenance.flag("pooled_prior");
    return p;
}

/// Extra unshifted inputs: no adaptation, but check whether the causal
/// model reproduces their distribution.
inline ConditionalPredictor anticausal_ssl_inputs(const PairedSample& train, std::span<const double> extra_inputs,
                                                  const ScenarioConfig& cfg = {}) {
    auto p = baseline_predictor(train, cfg);
    p.provenance.route = "ssl-consistency-check";
    const AnmFit causal = fit_anm(train.swapped(), cfg.anm());
    ConsistencyConfig cc = cfg.consistency;
    cc.seed = cfg.anm().seed;
    const auto r = marginal_consistency_check(NoiseModel{causal.model, causal.noise_density}, kde_auto(train.y),
                                              extra_inputs, cc);
    p.provenance.set("consistency_distance", r.distance);
    p.provenance.set("consistency_threshold", r.threshold);
    p.provenance.flag(r.consistent ? "ssl_consistent" : "ssl_inconsistent");
    return p;
}

/// Pairs sharing the causal mechanism with new noise: conditional ANM in
/// the causal direction, target noise and target prior, then Bayes.
inline ConditionalPredictor anticausal_transfer(const PairedSample& train, const PairedSample& extra_pairs,
                                                const ScenarioConfig& cfg = {}) {
    const std::vector<PairedSample> sets{train.swapped(), extra_pairs.swapped()};
    const ConditionalAnmFit cf = fit_conditional_anm(sets, cfg.anm());
    const auto [xg, yg] = detail::resolve_grids(train, cfg, 0.0);
    auto table = detail::causal_table(xg, yg, [&](double y) { return cf.predict(1, y); },
                                      cf.per_dataset[1].noise_density);
    auto p = detail::posterior(table, kde_auto(extra_pairs.y), "conditional-anm-inverse");
    for (std::size_t i = 0; i < cf.per_dataset.size(); ++i) {
        const double pv = cf.per_dataset[i].independence.p_value;
        p.provenance.set("dataset" + std::to_string(i) + "_independence_p", pv);
        if (pv <= cfg.alpha()) p.provenance.flag("misfit");
    }
    return p;
}

/// Pairs from a changed causal mechanism: refit phi' in the causal
/// direction, keep the training noise and prior, then Bayes.
inline ConditionalPredictor anticausal_concept_drift(const PairedSample& train, const PairedSample& extra_pairs,
                                                     const ScenarioConfig& cfg = {}) {
    const AnmFit train_fit = fit_anm(train.swapped(), cfg.anm());
    const AnmFit new_fit = fit_anm(extra_pairs.swapped(), cfg.anm());
    const auto [xg, yg] = detail::resolve_grids(train, cfg, 0.0);
    auto p = detail::posterior(detail::causal_table(xg, yg, new_fit.model, train_fit.noise_density),
                               kde_auto(train.y), "concept-drift-inverse");
    detail::record_fit(p.provenance, "train", train_fit, cfg.alpha());
    detail::record_fit(p.provenance, "extra", new_fit, cfg.alpha());
    return p;
}

// ---------------------------------------------------------------------------
// Dispatch

using ExtraData = std::variant<SampleSet, PairedSample>;

/// Name of the pipeline a spec is routed to.
inline std::string_view route_of(const ScenarioSpec& spec) {
    validate(spec);
    const bool causal = spec.direction == PredictionDirection::Causal;
    switch (spec.extra_kind) {
        case ExtraKind::Inputs:
            if (causal) return "pass-through";
            return spec.extra_is_shifted ? "localize-shift-inverse" : "ssl-consistency-check";
        case ExtraKind::Outputs:
            if (causal) return spec.extra_is_shifted ? "localize-shift" : "noise-decomposition";
            return "bayes-reweight";
        case ExtraKind::Pairs:
            if (*spec.drift_kind == DriftKind::NoiseChange) return causal ? "conditional-anm" : "conditional-anm-inverse";
            return causal ? "concept-drift" : "concept-drift-inverse";
    }
    return "pass-through";
}

inline ConditionalPredictor adapt(const ScenarioSpec& spec, const PairedSample& train, const ExtraData& extra,
                                  ScenarioConfig cfg = {}) {
    validate(spec);
    cfg.localize.alpha = spec.alpha;
    cfg.localize.anm.seed = spec.seed;
    const bool wants_pairs = spec.extra_kind == ExtraKind::Pairs;
    require(std::holds_alternative<PairedSample>(extra) == wants_pairs, ErrorCode::ShapeMismatch,
            wants_pairs ? "this scenario needs extra (x, y) pairs" : "this scenario needs a single extra column");
    const bool causal = spec.direction == PredictionDirection::Causal;

    if (wants_pairs) {
        const auto& pairs = std::get<PairedSample>(extra);
        if (*spec.drift_kind == DriftKind::NoiseChange)
            return causal ? causal_transfer(train, pairs, cfg) : anticausal_transfer(train, pairs, cfg);
        return causal ? causal_concept_drift(train, pairs, cfg) : anticausal_concept_drift(train, pairs, cfg);
    }
    const auto& column = std::get<SampleSet>(extra);
    if (spec.extra_kind == ExtraKind::Inputs) {
        if (causal) {
            // Independence of mechanism and input: P'(Y|X) = P(Y|X).
            auto p = baseline_predictor(train, cfg);
            p.provenance.route = "pass-through";
            p.provenance.flag(spec.extra_is_shifted ? "covariate_shift" : "ssl_no_gain");
            return p;
        }
        return spec.extra_is_shifted ? anticausal_input_shift(train, column, cfg)
                                     : anticausal_ssl_inputs(train, column, cfg);
    }
    if (causal)
        return spec.extra_is_shifted ? causal_output_shift(train, column, cfg) : causal_ssl_outputs(train, column, cfg);
    return anticausal_output_shift(train, column, spec.extra_is_shifted, cfg);
}

}  // namespace cem
