#pragma once

// Seeded scenario sweep: each cell generates training and target-domain
// data, runs adapt and the baseline, and scores both against the true
// target conditional evaluated on the predictor's grid.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cem/datagen.hpp"
#include "cem/io.hpp"
#include "cem/scenarios.hpp"

namespace cem {

// ---------------------------------------------------------------------------
// Oracle

/// True p'(y | x) on the bins of y_grid, for data from `target` where the ML
/// input is the cause (Causal) or the effect (Anticausal).
inline std::vector<double> oracle_row(const GeneratorSpec& target, PredictionDirection direction, double x,
                                      const Grid& y_grid) {
    const std::size_t ny = y_grid.size();
    const double dy = y_grid.step();
    std::vector<double> row(ny, 0.0);
    if (direction == PredictionDirection::Causal) {
        const double mu = apply(target.mechanism, x);
        double prev = cdf(target.noise, y_grid.lo() - mu);
        for (std::size_t j = 0; j < ny; ++j) {
            const double next = cdf(target.noise, y_grid.lo() + static_cast<double>(j + 1) * dy - mu);
            row[j] = std::max(0.0, next - prev) / dy;
            prev = next;
        }
        return row;
    }
    // Bayes on the grid: prior bin mass times the noise density at x - phi(y).
    double total = 0.0;
    double prev = cdf(target.cause, y_grid.lo());
    for (std::size_t j = 0; j < ny; ++j) {
        const double next = cdf(target.cause, y_grid.lo() + static_cast<double>(j + 1) * dy);
        row[j] = std::max(0.0, next - prev) * pdf(target.noise, x - apply(target.mechanism, y_grid.center(j)));
        total += row[j];
        prev = next;
    }
    if (total > 0)
        for (double& v : row) v /= total * dy;
    return row;
}

struct PredictorMetrics {
    double row_l1 = 0.0;  ///< mean over evaluation points of the L1 distance to the oracle row
    double rmse = 0.0;    ///< point estimate against the oracle conditional mean
};

/// Scores p at `points` evenly spaced x values over [x_lo, x_hi]; each x
/// uses the predictor row of the bin containing it.
inline PredictorMetrics evaluate_predictor(const ConditionalPredictor& p, const GeneratorSpec& target,
                                           PredictionDirection direction, double x_lo, double x_hi,
                                           std::size_t points = 64) {
    require(points >= 2 && x_hi > x_lo, ErrorCode::InvalidArgument, "evaluation range is empty");
    const double dy = p.y_grid.step();
    const double nx = static_cast<double>(p.x_grid.size());
    PredictorMetrics m;
    for (std::size_t i = 0; i < points; ++i) {
        const double x = x_lo + (x_hi - x_lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        const auto k = static_cast<std::size_t>(std::clamp((x - p.x_grid.lo()) / p.x_grid.step(), 0.0, nx - 1));
        const auto row = p.row(k);
        const auto truth = oracle_row(target, direction, x, p.y_grid);
        double l1 = 0.0;
        double mass = 0.0;
        double mean = 0.0;
        for (std::size_t j = 0; j < truth.size(); ++j) {
            l1 += std::abs(row[j] - truth[j]) * dy;
            mass += truth[j] * dy;
            mean += p.y_grid.center(j) * truth[j] * dy;
        }
        // oracle mass beyond the y grid counts as missed
        m.row_l1 += l1 + std::max(0.0, 1.0 - mass);
        const double err = p.point_estimate[k] - (mass > 0 ? mean / mass : 0.0);
        m.rmse += err * err;
    }
    m.row_l1 /= static_cast<double>(points);
    m.rmse = std::sqrt(m.rmse / static_cast<double>(points));
    return m;
}

// ---------------------------------------------------------------------------
// Scenarios

struct BenchmarkScenario {
    std::string name;
    ScenarioSpec spec;
    GeneratorSpec base;        ///< n and seed are set per cell
    std::optional<Shift> shift;  ///< empty: target domain equals training domain
    bool pass_through = false;   ///< adapt returns the baseline by construction
};

/// The eleven default scenarios: one per supported (direction, extra kind,
/// assumption) route.  Generators are written cause-first; anticausal
/// scenarios predict the cause from the effect.
inline std::vector<BenchmarkScenario> default_scenarios() {
    using PD = PredictionDirection;
    using EK = ExtraKind;
    auto spec = [](PD d, EK k, bool shifted, std::optional<DriftKind> drift = std::nullopt) {
        ScenarioSpec s;
        s.direction = d;
        s.extra_kind = k;
        s.extra_is_shifted = shifted;
        s.drift_kind = drift;
        return s;
    };
    auto gen = [](Mechanism m, CauseDist c, NoiseDist n) {
        GeneratorSpec g;
        g.mechanism = m;
        g.cause = c;
        g.noise = n;
        return g;
    };
    std::vector<BenchmarkScenario> out;
    out.push_back({"causal_covariate_shift", spec(PD::Causal, EK::Inputs, true),
                   gen(Mechanism::Tanh3, GaussianDist{0.0, 0.7}, GaussianNoise{0.2}),
                   CauseShift{GaussianDist{0.4, 0.5}}, true});
    out.push_back({"causal_ssl_inputs", spec(PD::Causal, EK::Inputs, false),
                   gen(Mechanism::Tanh3, GaussianDist{0.0, 0.7}, GaussianNoise{0.2}), std::nullopt, true});
    out.push_back({"causal_output_shift", spec(PD::Causal, EK::Outputs, true),
                   gen(Mechanism::Identity, UniformDist{-1.0, 1.0}, GaussianNoise{std::numbers::sqrt2}),
                   NoiseShift{GaussianNoise{1.0}}});
    out.push_back({"causal_ssl_outputs", spec(PD::Causal, EK::Outputs, false),
                   gen(Mechanism::Square, UniformDist{-1.0, 1.0}, GaussianNoise{1.0}), std::nullopt});
    out.push_back({"causal_transfer", spec(PD::Causal, EK::Pairs, true, DriftKind::NoiseChange),
                   gen(Mechanism::Tanh3, UniformDist{-1.0, 1.0}, GaussianNoise{0.2}),
                   NoiseShift{GaussianNoise{0.5}}});
    out.push_back({"causal_concept_drift", spec(PD::Causal, EK::Pairs, true, DriftKind::MechanismChange),
                   gen(Mechanism::Square, UniformDist{-1.0, 1.0}, GaussianNoise{0.3}),
                   MechanismShift{Mechanism::Cube}});
    out.push_back({"anticausal_input_shift", spec(PD::Anticausal, EK::Inputs, true),
                   gen(Mechanism::Identity, GaussianDist{0.0, 1.0}, GaussianNoise{0.4}),
                   CauseShift{GaussianDist{0.8, 0.6}}});
    out.push_back({"anticausal_ssl_inputs", spec(PD::Anticausal, EK::Inputs, false),
                   gen(Mechanism::Identity, GaussianDist{0.0, 1.0}, GaussianNoise{0.4}), std::nullopt});
    out.push_back({"anticausal_output_shift", spec(PD::Anticausal, EK::Outputs, true),
                   gen(Mechanism::Identity, GaussianDist{0.0, 1.0}, GaussianNoise{0.5}),
                   CauseShift{GaussianDist{1.0, 0.5}}});
    out.push_back({"anticausal_transfer", spec(PD::Anticausal, EK::Pairs, true, DriftKind::NoiseChange),
                   gen(Mechanism::Tanh3, UniformDist{-1.0, 1.0}, GaussianNoise{0.2}),
                   NoiseShift{GaussianNoise{0.5}}});
    out.push_back({"anticausal_concept_drift", spec(PD::Anticausal, EK::Pairs, true, DriftKind::MechanismChange),
                   gen(Mechanism::Cube, UniformDist{-1.0, 1.0}, GaussianNoise{0.3}),
                   MechanismShift{Mechanism::CubePlus}});
    return out;
}

struct BenchmarkConfig {
    std::vector<BenchmarkScenario> scenarios = default_scenarios();
    std::size_t seeds = 30;
    std::uint64_t first_seed = 1;
    std::size_t n = 500;
    std::size_t n_extra = 500;
    std::size_t threads = 0;  ///< 0: hardware concurrency
    std::size_t eval_points = 64;
    ScenarioConfig scenario;  ///< grids are overridden per cell
};

struct CellResult {
    std::string scenario;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    PredictorMetrics adapted;
    PredictorMetrics baseline;
    std::optional<ConditionalPredictor> predictor;
};

/// Training and target-domain samples in ML orientation (x = ML input).
struct CellData {
    PairedSample train;
    PairedSample target;
    GeneratorSpec train_spec;
    GeneratorSpec target_spec;
};

inline CellData make_cell_data(const BenchmarkScenario& sc, std::uint64_t seed, std::size_t n, std::size_t n_extra) {
    GeneratorSpec base = sc.base;
    base.n = n;
    base.seed = seed;
    auto pair = generate_domain_pair(base, sc.shift, n_extra);
    CellData d{std::move(pair.train), std::move(pair.extra_pairs), pair.train_spec, pair.extra_spec};
    if (sc.spec.direction == PredictionDirection::Anticausal) {
        d.train = d.train.swapped();
        d.target = d.target.swapped();
    }
    return d;
}

inline ExtraData extra_for(const ScenarioSpec& spec, const PairedSample& target) {
    switch (spec.extra_kind) {
        case ExtraKind::Inputs: return target.x;
        case ExtraKind::Outputs: return target.y;
        case ExtraKind::Pairs: return target;
    }
    return target;
}

/// Shared grids for the adapted and baseline predictors of one cell.
inline std::pair<Grid, Grid> cell_grids(const CellData& d, std::size_t x_bins, std::size_t y_bins) {
    auto range = [](const SampleSet& a, const SampleSet& b) {
        const auto [a0, a1] = std::minmax_element(a.begin(), a.end());
        const auto [b0, b1] = std::minmax_element(b.begin(), b.end());
        return std::pair{std::min(*a0, *b0), std::max(*a1, *b1)};
    };
    const auto [x0, x1] = range(d.train.x, d.target.x);
    const auto [y0, y1] = range(d.train.y, d.target.y);
    const double pad = 0.2 * (y1 - y0);
    return {Grid(x0, x1, x_bins), Grid(y0 - pad, y1 + pad, y_bins)};
}

inline CellResult run_cell(const BenchmarkScenario& sc, std::uint64_t seed, const BenchmarkConfig& cfg) {
    CellResult r;
    r.scenario = sc.name;
    r.seed = seed;
    try {
        const CellData d = make_cell_data(sc, seed, cfg.n, cfg.n_extra);
        ScenarioConfig scfg = cfg.scenario;
        const auto [xg, yg] = cell_grids(d, scfg.x_bins, scfg.y_bins);
        scfg.x_grid = xg;
        scfg.y_grid = yg;
        ScenarioSpec spec = sc.spec;
        spec.seed = seed;
        ScenarioConfig base_cfg = scfg;
        base_cfg.localize.anm.seed = seed;
        const ConditionalPredictor adapted = adapt(spec, d.train, extra_for(spec, d.target), scfg);
        const ConditionalPredictor baseline = baseline_predictor(d.train, base_cfg);
        SampleSet xs = d.target.x;
        const double lo = quantile(xs, 0.05);
        const double hi = quantile(xs, 0.95);
        r.adapted = evaluate_predictor(adapted, d.target_spec, spec.direction, lo, hi, cfg.eval_points);
        r.baseline = evaluate_predictor(baseline, d.target_spec, spec.direction, lo, hi, cfg.eval_points);
        r.predictor = adapted;
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    return r;
}

struct ScenarioSummary {
    std::string name;
    bool shifted = false;
    bool pass_through = false;
    std::size_t cells = 0;
    std::size_t failed = 0;
    double adapted_mean = 0.0;
    double adapted_std = 0.0;
    double baseline_mean = 0.0;
    double baseline_std = 0.0;
    double adapted_rmse = 0.0;
    double baseline_rmse = 0.0;

    /// Strictly better for adapted scenarios, equal for pass-through ones.
    bool meets_target() const {
        if (cells == failed) return false;
        if (pass_through) return adapted_mean == baseline_mean;
        if (!shifted) return true;
        return adapted_mean < baseline_mean;
    }
};

struct BenchmarkResult {
    std::vector<CellResult> cells;  ///< scenario-major, seed-minor
    std::vector<ScenarioSummary> summaries;
    double seconds = 0.0;
};

inline ScenarioSummary summarize(const BenchmarkScenario& sc, std::span<const CellResult> cells) {
    ScenarioSummary s;
    s.name = sc.name;
    s.shifted = sc.shift.has_value();
    s.pass_through = sc.pass_through;
    s.cells = cells.size();
    std::vector<double> a, b, ra, rb;
    for (const auto& c : cells) {
        if (!c.ok) {
            ++s.failed;
            continue;
        }
        a.push_back(c.adapted.row_l1);
        b.push_back(c.baseline.row_l1);
        ra.push_back(c.adapted.rmse);
        rb.push_back(c.baseline.rmse);
    }
    if (a.empty()) return s;
    auto sd = [](const std::vector<double>& v) { return v.size() > 1 ? sample_stddev(v) : 0.0; };
    s.adapted_mean = sample_mean(a);
    s.adapted_std = sd(a);
    s.baseline_mean = sample_mean(b);
    s.baseline_std = sd(b);
    s.adapted_rmse = sample_mean(ra);
    s.baseline_rmse = sample_mean(rb);
    return s;
}

/// Runs every (scenario, seed) cell, concurrently when threads > 1.  Cells
/// are independent; a failing cell is recorded and the sweep continues.
inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t total = cfg.scenarios.size() * cfg.seeds;
    BenchmarkResult out;
    out.cells.resize(total);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < total; i = next++) {
            const auto& sc = cfg.scenarios[i / cfg.seeds];
            out.cells[i] = run_cell(sc, cfg.first_seed + i % cfg.seeds, cfg);
        }
    };
    std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(total, 1));
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    for (std::size_t s = 0; s < cfg.scenarios.size(); ++s)
        out.summaries.push_back(summarize(cfg.scenarios[s], std::span(out.cells).subspan(s * cfg.seeds, cfg.seeds)));
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string metrics_csv_header() { return "seed,status,adapted_row_l1,baseline_row_l1,adapted_rmse,baseline_rmse\n"; }

inline std::string metrics_csv_row(const CellResult& c) {
    using io::format_double;
    if (!c.ok) return std::to_string(c.seed) + ",failed,,,,\n";
    return std::to_string(c.seed) + ",ok," + format_double(c.adapted.row_l1) + "," +
           format_double(c.baseline.row_l1) + "," + format_double(c.adapted.rmse) + "," +
           format_double(c.baseline.rmse) + "\n";
}

inline std::string summary_csv(std::span<const ScenarioSummary> rows) {
    using io::format_double;
    std::string s =
        "scenario,shifted,pass_through,cells,failed,adapted_row_l1_mean,adapted_row_l1_std,baseline_row_l1_mean,"
        "baseline_row_l1_std,adapted_rmse_mean,baseline_rmse_mean,meets_target\n";
    for (const auto& r : rows)
        s += r.name + "," + (r.shifted ? "1" : "0") + "," + (r.pass_through ? "1" : "0") + "," +
             std::to_string(r.cells) + "," + std::to_string(r.failed) + "," + format_double(r.adapted_mean) + "," +
             format_double(r.adapted_std) + "," + format_double(r.baseline_mean) + "," +
             format_double(r.baseline_std) + "," + format_double(r.adapted_rmse) + "," +
             format_double(r.baseline_rmse) + "," + (r.meets_target() ? "1" : "0") + "\n";
    return s;
}

/// Per-cell directories, per-scenario metrics and SVG, and summary.csv.
/// Output is identical for identical configs whatever the thread count.
inline void write_benchmark(const BenchmarkResult& result, const BenchmarkConfig& cfg,
                            const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::IoError, "cannot create '" + dir.string() + "'");
    for (std::size_t s = 0; s < cfg.scenarios.size(); ++s) {
        const auto& sc = cfg.scenarios[s];
        const fs::path sdir = dir / sc.name;
        std::string per_seed = metrics_csv_header();
        io::Series adapted{"adapted", {}, {}, "#d62728"};
        io::Series baseline{"baseline", {}, {}, "#1f77b4"};
        for (std::size_t k = 0; k < cfg.seeds; ++k) {
            const auto& c = result.cells[s * cfg.seeds + k];
            const fs::path cdir = sdir / ("seed_" + std::to_string(c.seed));
            fs::create_directories(cdir, ec);
            require(!ec, ErrorCode::IoError, "cannot create '" + cdir.string() + "'");
            io::write_file((cdir / "metrics.csv").string(), metrics_csv_header() + metrics_csv_row(c));
            if (c.ok) {
                io::write_file((cdir / "predictions.csv").string(), io::predictions_csv(*c.predictor));
                adapted.x.push_back(static_cast<double>(c.seed));
                adapted.y.push_back(c.adapted.row_l1);
                baseline.x.push_back(static_cast<double>(c.seed));
                baseline.y.push_back(c.baseline.row_l1);
            } else {
                io::write_file((cdir / "error.txt").string(), c.error + "\n");
            }
            per_seed += metrics_csv_row(c);
        }
        const auto& sum = result.summaries[s];
        io::write_file((sdir / "cells.csv").string(), per_seed);
        io::write_file((sdir / "metrics.csv").string(),
                       "metric,adapted_mean,adapted_std,baseline_mean,baseline_std\nrow_l1," +
                           io::format_double(sum.adapted_mean) + "," + io::format_double(sum.adapted_std) + "," +
                           io::format_double(sum.baseline_mean) + "," + io::format_double(sum.baseline_std) + "\n");
        io::write_file((dir / (sc.name + ".svg")).string(),
                       io::render_svg({sc.name + ": row L1 to oracle", "seed", "row L1", {adapted, baseline}}));
    }
    io::write_file((dir / "summary.csv").string(), summary_csv(result.summaries));
}

}  // namespace cem
