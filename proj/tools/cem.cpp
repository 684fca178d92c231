// Batch command-line front end: gen, fit-anm, direction, localize, adapt,
// benchmark.  Exit codes: 0 success, 1 error, 2 abstention or ambiguity.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cem/cem.hpp"

namespace fs = std::filesystem;
using namespace cem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitAbstain = 2;

struct Common {
    std::string config;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::size_t n_permutations = 499;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "flat key = value file; keys are option names without dashes");
    sub->add_option("-o,--out", c.out_dir, "output directory")->envname("CEM_OUT_DIR");
    sub->add_option("--seed", c.seed, "random seed");
    sub->add_option("--alpha", c.alpha, "significance level")->check(CLI::Range(1e-6, 0.5));
    sub->add_option("--n-permutations", c.n_permutations, "HSIC permutations")->check(CLI::Range(19, 100000));
}

AnmConfig anm_config(const Common& c) {
    AnmConfig a;
    a.seed = c.seed;
    a.n_permutations = c.n_permutations;
    return a;
}

fs::path out_path(const Common& c, const std::string& name) {
    std::error_code ec;
    fs::create_directories(c.out_dir, ec);
    require(!ec, ErrorCode::IoError, "cannot create output directory '" + c.out_dir + "'");
    return fs::path(c.out_dir) / name;
}

void write_report(const Common& c, const std::string& name, const io::Record& r) {
    io::write_file(out_path(c, name).string(), io::timestamp_line() + r.str());
}

/// A single column, or the effect column y of an "x,y" file.
SampleSet read_marginal(const std::string& path, bool take_x = false) {
    const std::string text = io::read_file(path);
    if (text.rfind("x,y", 0) == 0) {
        const auto pairs = io::parse_pairs_csv(text);
        return take_x ? pairs.x : pairs.y;
    }
    return io::parse_column_csv(text);
}

// ---------------------------------------------------------------------------

struct GenArgs {
    Common common;
    std::string mechanism = "identity";
    std::string cause = "gaussian 0 1";
    std::string noise = "gaussian 1";
    std::size_t n = 500;
    std::string shift;
    std::size_t n_extra = 500;
    std::string direction = "causal";
};

int cmd_gen(const GenArgs& a) {
    io::Record r;
    r.set("mechanism", a.mechanism);
    r.set("cause", a.cause);
    r.set("noise", a.noise);
    r.set("n", static_cast<std::uint64_t>(a.n));
    r.set("seed", a.common.seed);
    const GeneratorSpec base = io::get_generator(r);
    require(a.direction == "causal" || a.direction == "anticausal", ErrorCode::InvalidConfig,
            "direction must be causal or anticausal");
    require(a.n_extra > 0, ErrorCode::InvalidConfig, "n-extra must be positive");
    std::optional<Shift> shift;
    if (!a.shift.empty()) shift = io::parse_shift(a.shift);
    auto pair = generate_domain_pair(base, shift, a.n_extra);
    if (a.direction == "anticausal") {
        pair.train = pair.train.swapped();
        pair.extra_pairs = pair.extra_pairs.swapped();
    }
    io::write_file(out_path(a.common, "train.csv").string(), io::pairs_csv(pair.train));
    io::write_file(out_path(a.common, "extra.csv").string(), io::pairs_csv(pair.extra_pairs));
    io::Record t = io::artifact("truth");
    t.set("direction", a.direction);
    t.set("changed", pair.changed);
    if (shift) t.set("shift", io::to_text(*shift));
    io::put(t, "train.", pair.train_spec);
    io::put(t, "extra.", pair.extra_spec);
    write_report(a.common, "truth.meta", t);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct FitArgs {
    Common common;
    std::string train;
};

int cmd_fit_anm(const FitArgs& a) {
    const PairedSample train = io::read_pairs_csv(a.train);
    const AnmFit fit = fit_anm(train, anm_config(a.common));
    io::write_file(out_path(a.common, "anm_fit.txt").string(), io::to_text(fit));
    io::Record r = io::artifact("anm_report");
    r.set("n", static_cast<std::uint64_t>(train.size()));
    io::put(r, "independence.", fit.independence);
    r.set("independent", fit.independence.p_value > a.common.alpha);
    r.set("residual_sd", sample_stddev(fit.residuals));
    write_report(a.common, "anm.report", r);
    io::Series curve{"phi", {}, {}, "#d62728"};
    const auto [lo, hi] = std::minmax_element(train.x.begin(), train.x.end());
    for (int i = 0; i <= 200; ++i) {
        const double x = *lo + (*hi - *lo) * i / 200.0;
        curve.x.push_back(x);
        curve.y.push_back(fit.model(x));
    }
    io::write_file(out_path(a.common, "anm.svg").string(),
                   io::render_svg({"fitted mechanism", "x", "phi(x)", {curve}}));
    return kExitOk;
}

int cmd_direction(const FitArgs& a) {
    const PairedSample train = io::read_pairs_csv(a.train);
    const auto v = infer_direction(train, a.common.alpha, anm_config(a.common));
    io::Record r = io::artifact("direction_report");
    r.set("verdict", std::string(to_string(v.direction)));
    r.set("alpha", a.common.alpha);
    r.set("forward_p_value", v.forward.independence.p_value);
    r.set("backward_p_value", v.backward.independence.p_value);
    r.set("forward_statistic", v.forward.independence.statistic);
    r.set("backward_statistic", v.backward.independence.statistic);
    r.set("n_permutations", static_cast<std::uint64_t>(a.common.n_permutations));
    r.set("seed", a.common.seed);
    write_report(a.common, "direction.report", r);
    std::cout << to_string(v.direction) << "\n";
    return v.direction == Direction::Undecided ? kExitAbstain : kExitOk;
}

// ---------------------------------------------------------------------------

struct LocalizeArgs {
    Common common;
    std::string train;
    std::string extra;
    std::size_t grid_bins = 1024;
    std::optional<double> reg;
    std::size_t bootstrap = 200;
};

int cmd_localize(const LocalizeArgs& a) {
    const PairedSample train = io::read_pairs_csv(a.train);
    const SampleSet extra = read_marginal(a.extra);
    LocalizeConfig cfg;
    cfg.anm = anm_config(a.common);
    cfg.alpha = a.common.alpha;
    cfg.grid_bins = a.grid_bins;
    cfg.reg = a.reg;
    cfg.bootstrap_replicates = a.bootstrap;
    const ShiftDiagnosis d = localize_shift(train, extra, cfg);

    io::Record r = io::artifact("diagnosis_report");
    r.set("verdict", std::string(to_string(d.verdict)));
    io::put(r, "cause_branch.", d.cause_branch);
    io::put(r, "mechanism_branch.", d.mechanism_branch);
    r.set("mechanism_branch.mean", d.mechanism_mean);
    r.set("mechanism_branch.mean_tolerance", d.mean_tolerance);
    r.set("mechanism_branch.accepted", d.mechanism_accepted());
    io::put(r, "train_fit.independence.", d.fit.independence);
    r.set("recovered", std::string(d.recovered ? "recovered.density" : "none"));
    write_report(a.common, "diagnosis.report", r);

    io::Plot plot{"effect densities", "e", "density",
                  {io::density_series(d.train_effects, "P(E)", "#1f77b4"),
                   io::density_series(d.new_effects, "P'(E)", "#ff7f0e")}};
    if (d.recovered) {
        io::write_file(out_path(a.common, "recovered.density").string(), io::to_text(*d.recovered));
        plot.series.push_back(io::density_series(
            *d.recovered, d.verdict == ShiftVerdict::CauseChanged ? "P'(phi(C))" : "P'(N_E)", "#2ca02c"));
    }
    io::write_file(out_path(a.common, "localize.svg").string(), io::render_svg(plot));
    std::cout << to_string(d.verdict) << "\n";
    return d.recovered ? kExitOk : kExitAbstain;
}

// ---------------------------------------------------------------------------

struct AdaptArgs {
    Common common;
    std::string train;
    std::string extra;
    std::string truth;
    std::string direction = "causal";
    std::string extra_kind = "inputs";
    bool shifted = true;
    std::string drift_kind;
    std::size_t x_bins = 128;
    std::size_t y_bins = 256;
};

ScenarioSpec scenario_spec(const AdaptArgs& a) {
    ScenarioSpec s;
    require(a.direction == "causal" || a.direction == "anticausal", ErrorCode::InvalidConfig,
            "direction must be causal or anticausal");
    s.direction = a.direction == "causal" ? PredictionDirection::Causal : PredictionDirection::Anticausal;
    if (a.extra_kind == "inputs") {
        s.extra_kind = ExtraKind::Inputs;
    } else if (a.extra_kind == "outputs") {
        s.extra_kind = ExtraKind::Outputs;
    } else if (a.extra_kind == "pairs") {
        s.extra_kind = ExtraKind::Pairs;
    } else {
        fail(ErrorCode::InvalidConfig, "extra-kind must be inputs, outputs or pairs");
    }
    s.extra_is_shifted = a.shifted;
    if (a.drift_kind == "noise") {
        s.drift_kind = DriftKind::NoiseChange;
    } else if (a.drift_kind == "mechanism") {
        s.drift_kind = DriftKind::MechanismChange;
    } else {
        require(a.drift_kind.empty(), ErrorCode::InvalidConfig, "drift-kind must be noise or mechanism");
    }
    s.alpha = a.common.alpha;
    s.seed = a.common.seed;
    validate(s);
    return s;
}

int cmd_adapt(const AdaptArgs& a) {
    const ScenarioSpec spec = scenario_spec(a);
    const PairedSample train = io::read_pairs_csv(a.train);
    ExtraData extra;
    if (spec.extra_kind == ExtraKind::Pairs) {
        extra = io::read_pairs_csv(a.extra);
    } else {
        extra = read_marginal(a.extra, spec.extra_kind == ExtraKind::Inputs);
    }
    ScenarioConfig cfg;
    cfg.localize.anm = anm_config(a.common);
    cfg.x_bins = a.x_bins;
    cfg.y_bins = a.y_bins;
    const ConditionalPredictor p = adapt(spec, train, extra, cfg);

    io::write_file(out_path(a.common, "predictor.txt").string(), io::to_text(p));
    io::write_file(out_path(a.common, "predictions.csv").string(), io::predictions_csv(p));
    io::Record r = io::artifact("provenance_report");
    r.set("route", p.provenance.route);
    std::string flags;
    for (const auto& f : p.provenance.flags) flags += (flags.empty() ? "" : " ") + f;
    r.set("flags", flags);
    for (const auto& [k, v] : p.provenance.values) r.set("value." + k, v);
    write_report(a.common, "provenance.report", r);

    std::string truth_path = a.truth;
    if (truth_path.empty()) {
        const fs::path guess = fs::path(a.train).parent_path() / "truth.meta";
        if (fs::exists(guess)) truth_path = guess.string();
    }
    if (!truth_path.empty()) {
        const io::Record t = io::read_record(truth_path);
        io::expect_artifact(t, "truth");
        const GeneratorSpec target = io::get_generator(t, "extra.");
        const bool anticausal = t.get("direction") == "anticausal";
        require(anticausal == (spec.direction == PredictionDirection::Anticausal), ErrorCode::InvalidConfig,
                "truth.meta direction differs from the requested direction");
        PairedSample target_data = generate(target);
        if (anticausal) target_data = target_data.swapped();
        const double lo = quantile(target_data.x, 0.05);
        const double hi = quantile(target_data.x, 0.95);
        const auto m = evaluate_predictor(p, target, spec.direction, lo, hi);
        io::write_file(out_path(a.common, "metrics.csv").string(),
                       "row_l1,rmse\n" + io::format_double(m.row_l1) + "," + io::format_double(m.rmse) + "\n");
    }
    std::cout << p.provenance.route << "\n";
    return p.provenance.has_flag("warning_baseline_returned") ? kExitAbstain : kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    Common common;
    std::size_t seeds = 30;
    std::size_t n = 500;
    std::size_t n_extra = 500;
    std::size_t threads = 0;
    std::vector<std::string> scenarios;
};

int cmd_benchmark(const BenchArgs& a) {
    BenchmarkConfig cfg;
    cfg.seeds = a.seeds;
    cfg.first_seed = a.common.seed == 0 ? 1 : a.common.seed;
    cfg.n = a.n;
    cfg.n_extra = a.n_extra;
    cfg.threads = a.threads;
    cfg.scenario.localize.alpha = a.common.alpha;
    cfg.scenario.localize.anm.n_permutations = a.common.n_permutations;
    if (!a.scenarios.empty()) {
        std::vector<BenchmarkScenario> keep;
        for (const auto& name : a.scenarios) {
            bool found = false;
            for (const auto& s : cfg.scenarios)
                if (s.name == name) {
                    keep.push_back(s);
                    found = true;
                }
            require(found, ErrorCode::InvalidConfig, "unknown scenario '" + name + "'");
        }
        cfg.scenarios = std::move(keep);
    }
    require(cfg.seeds > 0 && cfg.n >= kMinAnmSamples && cfg.n_extra >= kMinAnmSamples, ErrorCode::InvalidConfig,
            "benchmark needs seeds > 0 and at least 20 samples per domain");
    const BenchmarkResult res = run_benchmark(cfg);
    write_benchmark(res, cfg, out_path(a.common, ""));
    std::size_t failed = 0;
    for (const auto& s : res.summaries) {
        failed += s.failed;
        std::printf("%-26s adapted %.4f  baseline %.4f  failed %zu/%zu\n", s.name.c_str(), s.adapted_mean,
                    s.baseline_mean, s.failed, s.cells);
    }
    std::printf("%.1f s\n", res.seconds);
    return failed == 0 ? kExitOk : kExitError;
}

/// Config-file values become leading arguments so that explicit flags,
/// parsed later, override them.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> out;
    std::string config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
    }
    if (config.empty() || args.empty()) return args;
    const io::Record r = io::read_record(config);
    out.push_back(args[0]);
    for (const auto& [k, v] : r.fields()) {
        if (k == "scenarios") {
            out.push_back("--scenarios");
            std::istringstream ss(v);
            for (std::string w; ss >> w;) out.push_back(w);
            continue;
        }
        out.push_back("--" + k);
        out.push_back(v);
    }
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cause-effect model adaptation toolkit"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "generate training and extra samples with ground truth");
    add_common(g, gen.common);
    g->add_option("--mechanism", gen.mechanism, "identity, square, cube, tanh3 or cube_plus");
    g->add_option("--cause", gen.cause, "e.g. 'uniform -1 1', 'gaussian 0 1', 'mixture2 -1 .5 1 .5 .5'");
    g->add_option("--noise", gen.noise, "e.g. 'gaussian 0.3', 'laplace 0.5', 'uniform 1'");
    g->add_option("-n,--n", gen.n, "training sample size");
    g->add_option("--shift", gen.shift, "e.g. 'noise gaussian 0.6', 'cause uniform 0 2', 'mechanism cube'");
    g->add_option("--n-extra", gen.n_extra, "extra sample size");
    g->add_option("--direction", gen.direction, "causal writes x = cause; anticausal writes x = effect");

    FitArgs fit;
    auto* f = app.add_subcommand("fit-anm", "fit an additive noise model y = phi(x) + n");
    add_common(f, fit.common);
    f->add_option("--train", fit.train, "CSV with header x,y")->required();

    FitArgs dir;
    auto* d = app.add_subcommand("direction", "infer X_to_Y, Y_to_X or Undecided");
    add_common(d, dir.common);
    d->add_option("--train", dir.train, "CSV with header x,y")->required();

    LocalizeArgs loc;
    auto* l = app.add_subcommand("localize", "decide whether P(C) or P(E|C) changed");
    add_common(l, loc.common);
    l->add_option("--train", loc.train, "CSV with header x,y (cause, effect)")->required();
    l->add_option("--extra", loc.extra, "new effects: single column, or the y column of an x,y file")->required();
    l->add_option("--grid-bins", loc.grid_bins, "deconvolution grid bins")->check(CLI::Range(64, 1 << 16));
    l->add_option("--reg", loc.reg, "Tikhonov regularization (default 1/sqrt(n))")->check(CLI::PositiveNumber);
    l->add_option("--bootstrap", loc.bootstrap, "null calibration replicates")->check(CLI::Range(20, 100000));

    AdaptArgs ad;
    auto* a = app.add_subcommand("adapt", "adapt P(Y|X) to the extra data");
    add_common(a, ad.common);
    a->add_option("--train", ad.train, "CSV with header x,y (ML input, ML output)")->required();
    a->add_option("--extra", ad.extra, "extra data: x,y pairs, or a single column")->required();
    a->add_option("--truth", ad.truth, "truth.meta for oracle metrics (default: next to --train)");
    a->add_option("--direction", ad.direction, "causal (x is the cause) or anticausal");
    a->add_option("--extra-kind", ad.extra_kind, "inputs, outputs or pairs");
    a->add_option("--shifted", ad.shifted, "extra data come from a changed distribution");
    a->add_option("--drift-kind", ad.drift_kind, "noise or mechanism (pairs only)");
    a->add_option("--x-bins", ad.x_bins, "predictor input bins")->check(CLI::Range(8, 1 << 14));
    a->add_option("--y-bins", ad.y_bins, "predictor output bins")->check(CLI::Range(8, 1 << 14));

    BenchArgs bench;
    auto* b = app.add_subcommand("benchmark", "run the scenario sweep");
    add_common(b, bench.common);
    b->add_option("--seeds", bench.seeds, "seeds per scenario");
    b->add_option("-n,--n", bench.n, "training sample size");
    b->add_option("--n-extra", bench.n_extra, "extra sample size");
    b->add_option("--threads", bench.threads, "worker threads (0: all cores)");
    b->add_option("--scenarios", bench.scenarios, "subset of scenario names")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

    try {
        std::vector<std::string> args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }

    try {
        if (*g) return cmd_gen(gen);
        if (*f) return cmd_fit_anm(fit);
        if (*d) return cmd_direction(dir);
        if (*l) return cmd_localize(loc);
        if (*a) return cmd_adapt(ad);
        if (*b) return cmd_benchmark(bench);
    } catch (const cem::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
