// Acceptance suite: runs the ten criteria and prints one PASS/FAIL line each.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cem/cem.hpp"

using namespace cem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string format(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double phi_cdf(double x, double mu, double s) { return 0.5 * std::erfc(-(x - mu) / (s * std::numbers::sqrt2)); }

GridDensity normal_on(const Grid& g, double mu, double s) {
    return GridDensity::from_cdf(g, [=](double x) { return phi_cdf(x, mu, s); });
}

GridDensity uniform_on(const Grid& g, double a, double b) {
    return GridDensity::from_cdf(g, [=](double x) { return std::clamp((x - a) / (b - a), 0.0, 1.0); });
}

// 1 -----------------------------------------------------------------------------

Outcome deconvolution_round_trip() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t m = 1024;
    const double step = 0.01;
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        // a: a uniform or a two-bump mixture; b: a Gaussian of random width
        const double wa = 0.3 + unit(rng);
        GridDensity a = uniform_on(Grid::with_step(-0.2, step, m), 0.0, wa);
        if (k % 2 == 1) {
            const double sep = 0.5 + unit(rng);
            const Grid g = Grid::with_step(-1.5, step, m);
            a = GridDensity::from_cdf(
                g, [=](double x) { return 0.4 * phi_cdf(x, 0.0, 0.15) + 0.6 * phi_cdf(x, sep, 0.25); });
        }
        const double sb = 0.2 + 0.5 * unit(rng);
        const double mb = unit(rng) - 0.5;
        const GridDensity b = normal_on(Grid::with_step(mb - 5.12, step, m), mb, sb);
        const auto back = GridDensity::clipped(deconvolve(convolve(a, b), a));
        worst = std::max(worst, l1_distance(b, back));
    }
    const double secs = seconds_since(t0);
    return {worst <= 0.03 && secs < 5.0, format("max L1 %.4f (<= 0.03), %.2f s (< 5 s)", worst, secs)};
}

// 2 -----------------------------------------------------------------------------

Outcome localization_examples() {
    int ambiguous = 0;
    int reversed = 0;
    const int runs = 30;
    for (int s = 0; s < runs; ++s) {
        LocalizeConfig cfg;
        cfg.anm.seed = static_cast<std::uint64_t>(s);
        const GeneratorSpec amb{Mechanism::Identity, UniformDist{-1, 1}, GaussianNoise{1.0}, 2000,
                                static_cast<std::uint64_t>(s) + 100};
        const GeneratorSpec rev{Mechanism::Identity, UniformDist{-1, 1}, GaussianNoise{std::numbers::sqrt2}, 2000,
                                static_cast<std::uint64_t>(s) + 100};
        const auto pa = generate_shift_pair(amb, NoiseShift{GaussianNoise{std::numbers::sqrt2}}, 2000);
        const auto pr = generate_shift_pair(rev, NoiseShift{GaussianNoise{1.0}}, 2000);
        try {
            ambiguous += localize_shift(pa.train, pa.extra_pairs.y, cfg).verdict == ShiftVerdict::Ambiguous;
        } catch (const Error&) {
        }
        try {
            reversed += localize_shift(pr.train, pr.extra_pairs.y, cfg).verdict == ShiftVerdict::MechanismChanged;
        } catch (const Error&) {
        }
    }
    return {ambiguous >= 24 && reversed >= 24,
            format("ambiguous %d/30, reversed MechanismChanged %d/30 (each >= 24)", ambiguous, reversed)};
}

// 3 -----------------------------------------------------------------------------

Outcome direction_inference() {
    const auto t0 = std::chrono::steady_clock::now();
    int forward = 0;
    int undecided = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        AnmConfig cfg;
        cfg.seed = s;
        const auto nonlinear =
            generate({Mechanism::Tanh3, GaussianDist{0, 1}, UniformNoise{0.3}, 400, 1000 + s});
        forward += infer_direction(nonlinear, 0.05, cfg).direction == Direction::XToY;
        const auto linear = generate({Mechanism::Identity, GaussianDist{0, 1}, GaussianNoise{1.0}, 400, 2000 + s});
        undecided += infer_direction(linear, 0.05, cfg).direction == Direction::Undecided;
    }
    const double secs = seconds_since(t0);
    return {forward >= 43 && undecided >= 30 && secs < 600,
            format("tanh3 X_to_Y %d/50 (>= 43), linear-Gaussian Undecided %d/50 (>= 30), %.0f s (< 600 s)", forward,
                   undecided, secs)};
}

// 4 -----------------------------------------------------------------------------

std::vector<PairedSample> noise_shift_domains(std::size_t n, std::uint64_t seed) {
    const GeneratorSpec base{Mechanism::Tanh3, UniformDist{-1, 1}, GaussianNoise{0.2}, n, seed};
    const auto pair = generate_shift_pair(base, NoiseShift{GaussianNoise{0.5}}, n);
    return {pair.train, pair.extra_pairs};
}

Outcome conditional_anm() {
    std::vector<double> rmse;
    int monotone = 0;
    const int runs = 30;
    for (int s = 0; s < runs; ++s) {
        AnmConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(s);
        const auto sets = noise_shift_domains(300, 500 + static_cast<std::uint64_t>(s));
        const auto fit = fit_conditional_anm(sets, cfg);
        double sse = 0.0;
        int k = 0;
        for (int i = 0; i <= 180; ++i, ++k) {
            const double x = -0.9 + 0.01 * i;
            sse += std::pow(fit.predict(0, x) - std::tanh(3 * x), 2);
        }
        rmse.push_back(std::sqrt(sse / k));
        bool ok = true;
        for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) ok &= fit.objective_trace[i] <= fit.objective_trace[i - 1];
        monotone += ok;
    }
    std::sort(rmse.begin(), rmse.end());
    const double median = 0.5 * (rmse[14] + rmse[15]);

    // analytic gradient against central differences, coordinate by coordinate
    const auto sets = noise_shift_domains(60, 77);
    const RegressionModel init = fit_krr_pooled(sets);
    std::vector<double> bw;
    for (const auto& d : sets) bw.push_back(median_heuristic(residuals(init, d)));
    const ConditionalAnmObjective objective(sets, init, 1e-3, bw);
    const Eigen::VectorXd a0 =
        Eigen::Map<const Eigen::VectorXd>(init.coefficients.data(), static_cast<Eigen::Index>(init.coefficients.size()));
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g;
    double worst_rel = 0.0;
    for (int point = 0; point < 20; ++point) {
        Eigen::VectorXd a = a0;
        const double scale = 0.1 * (a0.cwiseAbs().mean() + 1e-3);
        for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += scale * g(rng);
        Eigen::VectorXd grad;
        objective.value_and_gradient(a, grad);
        Eigen::VectorXd fd(a.size());
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            const double h = 1e-5 * std::max(1.0, std::abs(a[i]));
            Eigen::VectorXd ap = a;
            Eigen::VectorXd am = a;
            ap[i] += h;
            am[i] -= h;
            fd[i] = (objective.value(ap) - objective.value(am)) / (2 * h);
        }
        worst_rel = std::max(worst_rel, (grad - fd).norm() / std::max(grad.norm(), 1e-300));
    }
    return {median <= 0.1 && monotone == runs && worst_rel <= 1e-4,
            format("median RMSE %.4f (<= 0.1), monotone trace %d/30, gradient rel. error %.2e (<= 1e-4)", median,
                   monotone, worst_rel)};
}

// 5 -----------------------------------------------------------------------------

Outcome pass_through() {
    int identical = 0;
    int total = 0;
    for (std::uint64_t s = 1; s <= 30; ++s) {
        const GeneratorSpec base{Mechanism::Tanh3, GaussianDist{0.0, 0.7}, GaussianNoise{0.2}, 500, s};
        for (bool shifted : {true, false}) {
            const auto pair = shifted ? generate_shift_pair(base, CauseShift{GaussianDist{0.4, 0.5}}, 500)
                                      : generate_domain_pair(base, std::nullopt, 500);
            ScenarioSpec spec;
            spec.extra_is_shifted = shifted;
            spec.seed = s;
            ScenarioConfig cfg;
            const auto adapted = adapt(spec, pair.train, pair.extra_pairs.x, cfg);
            cfg.localize.anm.seed = s;
            const auto baseline = baseline_predictor(pair.train, cfg);
            identical += adapted.density == baseline.density && adapted.point_estimate == baseline.point_estimate;
            ++total;
        }
    }
    return {identical == total, format("bit-identical %d/%d", identical, total)};
}

// 6 -----------------------------------------------------------------------------

Outcome bayes_reweighting() {
    const auto m = StochasticMatrix::from_rows({{0.7, 0.2, 0.1}, {0.2, 0.6, 0.2}, {0.1, 0.2, 0.7}});
    const std::vector<double> prior{0.5, 0.3, 0.2};
    // worked by hand: row x is M(x, .) * prior / (M prior)_x
    const double hand[3][3] = {{35.0 / 43, 6.0 / 43, 2.0 / 43}, {10.0 / 32, 18.0 / 32, 4.0 / 32},
                               {5.0 / 25, 6.0 / 25, 14.0 / 25}};
    const auto post = bayes_reweight(m, prior);
    double discrete_err = 0.0;
    for (std::size_t x = 0; x < 3; ++x)
        for (std::size_t y = 0; y < 3; ++y) discrete_err = std::max(discrete_err, std::abs(post.row(x)[y] - hand[x][y]));

    // grid: P(X | Y = y) = N(x; y + tanh(2y)/2, 0.5), new prior N(0.3, 0.8)
    auto mean = [](double y) { return y + 0.5 * std::tanh(2 * y); };
    const double sd = 0.5;
    const Grid yg(-2.5, 2.5, 1000);
    const Grid xg(-6, 6, 1200);
    ConditionalPredictor causal;
    causal.x_grid = yg;
    causal.y_grid = xg;
    for (std::size_t k = 0; k < yg.size(); ++k)
        for (std::size_t j = 0; j < xg.size(); ++j)
            causal.density.push_back(std::exp(-0.5 * std::pow((xg.center(j) - mean(yg.center(k))) / sd, 2)));
    detail::finalize(causal);
    const auto p = bayes_reweight(causal, normal_on(yg, 0.3, 0.8));

    // brute force: integrate prior * likelihood over each y bin with a fine rule
    double worst_row = 0.0;
    const int sub = 64;
    for (std::size_t j = 0; j < xg.size(); j += 10) {
        const double x = xg.center(j);
        std::vector<double> mass(yg.size(), 0.0);
        double total = 0.0;
        for (std::size_t k = 0; k < yg.size(); ++k) {
            for (int s = 0; s < sub; ++s) {
                const double y = yg.lo() + (static_cast<double>(k) + (s + 0.5) / sub) * yg.step();
                const double w = std::exp(-0.5 * std::pow((y - 0.3) / 0.8, 2)) *
                                 std::exp(-0.5 * std::pow((x - mean(y)) / sd, 2));
                mass[k] += w;
            }
            total += mass[k];
        }
        if (!(total > 1e-200)) continue;
        double l1 = 0.0;
        for (std::size_t k = 0; k < yg.size(); ++k) l1 += std::abs(p.row(j)[k] * yg.step() - mass[k] / total);
        worst_row = std::max(worst_row, l1);
    }
    return {discrete_err <= 1e-12 && worst_row <= 1e-3,
            format("discrete max error %.1e (<= 1e-12), grid worst row L1 %.2e (<= 1e-3)", discrete_err, worst_row)};
}

// 7 -----------------------------------------------------------------------------

Outcome matrix_inversion() {
    std::mt19937_64 rng(7);
    std::gamma_distribution<double> gam(1.0, 1.0);
    auto simplex = [&](std::size_t n) {
        std::vector<double> v(n);
        double s = 0.0;
        for (double& x : v) s += x = gam(rng);
        for (double& x : v) x /= s;
        return v;
    };
    double worst = 0.0;
    int solved = 0;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> entries(25);
        for (std::size_t y = 0; y < 5; ++y) {
            const auto col = simplex(5);
            for (std::size_t x = 0; x < 5; ++x) entries[x * 5 + y] = col[x];
        }
        const StochasticMatrix m(5, 5, entries);
        const auto p = simplex(5);
        const auto q = m.apply(p);
        try {
            const auto r = invert_matrix_conditional(m, q);
            double l1 = 0.0;
            for (std::size_t i = 0; i < 5; ++i) l1 += std::abs(r.p[i] - p[i]);
            worst = std::max(worst, l1);
            ++solved;
        } catch (const Error&) {
        }
    }
    bool rank_deficient = false;
    try {
        const auto m = StochasticMatrix::from_rows({{0.5, 0.5, 0.2}, {0.3, 0.3, 0.3}, {0.2, 0.2, 0.5}});
        invert_matrix_conditional(m, std::vector<double>{0.4, 0.3, 0.3});
    } catch (const Error& e) {
        rank_deficient = e.code() == ErrorCode::RankDeficient;
    }
    return {solved == 100 && worst <= 1e-6 && rank_deficient,
            format("solved %d/100, max L1 %.1e (<= 1e-6), duplicated columns %s", solved, worst,
                   rank_deficient ? "RankDeficient" : "not rejected")};
}

// 8 -----------------------------------------------------------------------------

Outcome maximal_gaussian() {
    bool pass = true;
    std::string detail;
    std::uint64_t seed = 1;
    for (double sigma : {0.5, 1.0}) {
        std::mt19937_64 rng(seed++);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> g(0.0, sigma);
        std::vector<double> xs(5000);
        for (double& x : xs) x = u(rng) + g(rng);
        const auto r = max_gaussian_from_samples(xs, kSampleGaussianTolerance, 1024);
        const double rel = std::abs(r.sigma - sigma) / sigma;
        double l1 = 2.0;
        if (r.raw.sigma_max > 0) l1 = l1_distance(r.raw.remainder, uniform_on(r.raw.remainder.grid(), 0.0, 1.0));
        pass &= rel <= 0.10 && l1 <= 0.08;
        detail += format("%ssigma %.1f: est %.3f (rel %.3f <= 0.10), remainder L1 %.3f (<= 0.08)",
                         detail.empty() ? "" : "; ", sigma, r.sigma, rel, l1);
    }
    return {pass, detail};
}

// 9 -----------------------------------------------------------------------------

Outcome hsic_calibration() {
    auto normals = [](std::size_t n, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> d;
        std::vector<double> v(n);
        for (double& x : v) x = d(rng);
        return v;
    };
    int false_pos = 0;
    for (std::uint64_t t = 0; t < 200; ++t)
        false_pos += hsic_test(normals(300, 10000 + t), normals(300, 20000 + t), 499, t).p_value <= 0.05;
    int detected = 0;
    const int power_trials = 100;
    for (std::uint64_t t = 0; t < power_trials; ++t) {
        const auto x = normals(300, 30000 + t);
        auto y = normals(300, 40000 + t);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * x[i] * x[i] + 0.1 * y[i];
        detected += hsic_test(x, y, 499, t).p_value <= 0.05;
    }
    const double type1 = false_pos / 200.0;
    const double power = static_cast<double>(detected) / power_trials;
    return {type1 >= 0.02 && type1 <= 0.09 && power >= 0.95,
            format("type-I %.3f (in [0.02, 0.09]), power %.2f (>= 0.95)", type1, power)};
}

// 10 ----------------------------------------------------------------------------

Outcome benchmark_sweep() {
    BenchmarkConfig cfg;
    const auto res = run_benchmark(cfg);
    int meets = 0;
    std::size_t failed = 0;
    std::string misses;
    for (const auto& s : res.summaries) {
        failed += s.failed;
        if (s.meets_target()) {
            ++meets;
        } else {
            misses += " " + s.name;
        }
    }
    const auto n = static_cast<int>(res.summaries.size());
    return {meets == n && failed == 0 && res.seconds <= 1800,
            format("%d/%d scenarios meet target, %zu failed cells, %.0f s (<= 1800 s)%s%s", meets, n, failed,
                   res.seconds, misses.empty() ? "" : "; missed:", misses.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"deconvolution round trip", deconvolution_round_trip},
        {"shift localization examples", localization_examples},
        {"direction inference", direction_inference},
        {"conditional ANM", conditional_anm},
        {"covariate-shift pass-through", pass_through},
        {"Bayes reweighting", bayes_reweighting},
        {"stochastic-matrix inversion", matrix_inversion},
        {"maximal-width Gaussian", maximal_gaussian},
        {"HSIC calibration", hsic_calibration},
        {"end-to-end benchmark", benchmark_sweep},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!wanted.empty() && !wanted.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
