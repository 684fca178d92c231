#pragma once

// Seeded synthetic cause/effect generators with closed-form densities for
// oracle checks.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cem/error.hpp"
#include "cem/grid.hpp"

namespace cem {

enum class Mechanism { Identity, Square, Cube, Tanh3, CubePlus };

inline std::string_view to_string(Mechanism m) {
    switch (m) {
        case Mechanism::Identity: return "identity";
        case Mechanism::Square: return "square";
        case Mechanism::Cube: return "cube";
        case Mechanism::Tanh3: return "tanh3";
        case Mechanism::CubePlus: return "cube_plus";
    }
    return "identity";
}

inline Mechanism parse_mechanism(std::string_view name) {
    for (auto m : {Mechanism::Identity, Mechanism::Square, Mechanism::Cube, Mechanism::Tanh3, Mechanism::CubePlus})
        if (to_string(m) == name) return m;
    fail(ErrorCode::UnknownMechanism, "unknown mechanism '" + std::string(name) + "'");
}

inline double apply(Mechanism m, double x) {
    switch (m) {
        case Mechanism::Identity: return x;
        case Mechanism::Square: return x * x;
        case Mechanism::Cube: return x * x * x;
        case Mechanism::Tanh3: return std::tanh(3.0 * x);
        case Mechanism::CubePlus: return x * x * x + x;
    }
    return x;
}

struct UniformDist {
    double a = 0.0;
    double b = 1.0;
    bool operator==(const UniformDist&) const = default;
};
struct GaussianDist {
    double mu = 0.0;
    double sigma = 1.0;
    bool operator==(const GaussianDist&) const = default;
};
struct Mixture2Dist {
    double mu1 = -1.0;
    double sigma1 = 0.5;
    double mu2 = 1.0;
    double sigma2 = 0.5;
    double w = 0.5;  ///< weight of the first component
    bool operator==(const Mixture2Dist&) const = default;
};
using CauseDist = std::variant<UniformDist, GaussianDist, Mixture2Dist>;

struct GaussianNoise {
    double sigma = 1.0;
    bool operator==(const GaussianNoise&) const = default;
};
struct LaplaceNoise {
    double b = 1.0;
    bool operator==(const LaplaceNoise&) const = default;
};
struct UniformNoise {
    double a = 1.0;  ///< support [-a, a]
    bool operator==(const UniformNoise&) const = default;
};
using NoiseDist = std::variant<GaussianNoise, LaplaceNoise, UniformNoise>;

struct GeneratorSpec {
    Mechanism mechanism = Mechanism::Identity;
    CauseDist cause = GaussianDist{};
    NoiseDist noise = GaussianNoise{};
    std::size_t n = 100;
    std::uint64_t seed = 0;

    bool operator==(const GeneratorSpec&) const = default;
};

namespace detail {

inline double normal_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

inline double normal_cdf(double x, double mu, double sigma) {
    return 0.5 * std::erfc(-(x - mu) / (sigma * std::numbers::sqrt2));
}

}  // namespace detail

inline double pdf(const CauseDist& d, double x) {
    return std::visit(
        [x](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, UniformDist>) {
                return (x >= c.a && x <= c.b) ? 1.0 / (c.b - c.a) : 0.0;
            } else if constexpr (std::is_same_v<T, GaussianDist>) {
                return detail::normal_pdf(x, c.mu, c.sigma);
            } else {
                return c.w * detail::normal_pdf(x, c.mu1, c.sigma1) + (1 - c.w) * detail::normal_pdf(x, c.mu2, c.sigma2);
            }
        },
        d);
}

inline double cdf(const CauseDist& d, double x) {
    return std::visit(
        [x](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, UniformDist>) {
                return std::clamp((x - c.a) / (c.b - c.a), 0.0, 1.0);
            } else if constexpr (std::is_same_v<T, GaussianDist>) {
                return detail::normal_cdf(x, c.mu, c.sigma);
            } else {
                return c.w * detail::normal_cdf(x, c.mu1, c.sigma1) + (1 - c.w) * detail::normal_cdf(x, c.mu2, c.sigma2);
            }
        },
        d);
}

inline double pdf(const NoiseDist& d, double x) {
    return std::visit(
        [x](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, GaussianNoise>) {
                return detail::normal_pdf(x, 0.0, c.sigma);
            } else if constexpr (std::is_same_v<T, LaplaceNoise>) {
                return std::exp(-std::abs(x) / c.b) / (2.0 * c.b);
            } else {
                return std::abs(x) <= c.a ? 0.5 / c.a : 0.0;
            }
        },
        d);
}

inline double cdf(const NoiseDist& d, double x) {
    return std::visit(
        [x](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, GaussianNoise>) {
                return detail::normal_cdf(x, 0.0, c.sigma);
            } else if constexpr (std::is_same_v<T, LaplaceNoise>) {
                return x < 0 ? 0.5 * std::exp(x / c.b) : 1.0 - 0.5 * std::exp(-x / c.b);
            } else {
                return std::clamp((x + c.a) / (2.0 * c.a), 0.0, 1.0);
            }
        },
        d);
}

inline double stddev(const NoiseDist& d) {
    return std::visit(
        [](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, GaussianNoise>) {
                return c.sigma;
            } else if constexpr (std::is_same_v<T, LaplaceNoise>) {
                return std::numbers::sqrt2 * c.b;
            } else {
                return c.a / std::sqrt(3.0);
            }
        },
        d);
}

inline void validate(const GeneratorSpec& spec) {
    const bool cause_ok = std::visit(
        [](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, UniformDist>) {
                return c.b > c.a;
            } else if constexpr (std::is_same_v<T, GaussianDist>) {
                return c.sigma > 0;
            } else {
                return c.sigma1 > 0 && c.sigma2 > 0 && c.w >= 0 && c.w <= 1;
            }
        },
        spec.cause);
    const bool noise_ok = std::visit(
        [](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, GaussianNoise>) {
                return c.sigma > 0;
            } else if constexpr (std::is_same_v<T, LaplaceNoise>) {
                return c.b > 0;
            } else {
                return c.a > 0;
            }
        },
        spec.noise);
    require(cause_ok, ErrorCode::InvalidConfig, "cause distribution has a non-positive scale");
    require(noise_ok, ErrorCode::InvalidConfig, "noise distribution has a non-positive scale");
    require(spec.n > 0, ErrorCode::InvalidConfig, "sample size must be positive");
}

inline double draw(const CauseDist& d, std::mt19937_64& rng) {
    return std::visit(
        [&rng](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, UniformDist>) {
                return std::uniform_real_distribution<double>(c.a, c.b)(rng);
            } else if constexpr (std::is_same_v<T, GaussianDist>) {
                return std::normal_distribution<double>(c.mu, c.sigma)(rng);
            } else {
                const bool first = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < c.w;
                return first ? std::normal_distribution<double>(c.mu1, c.sigma1)(rng)
                             : std::normal_distribution<double>(c.mu2, c.sigma2)(rng);
            }
        },
        d);
}

/// Every noise law in the catalog is symmetric about zero.
inline double draw(const NoiseDist& d, std::mt19937_64& rng) {
    return std::visit(
        [&rng](const auto& c) -> double {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, GaussianNoise>) {
                return std::normal_distribution<double>(0.0, c.sigma)(rng);
            } else if constexpr (std::is_same_v<T, LaplaceNoise>) {
                const double u = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
                return -c.b * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
            } else {
                return std::uniform_real_distribution<double>(-c.a, c.a)(rng);
            }
        },
        d);
}

/// Pairs (c_i, mechanism(c_i) + n_i); the noise column is drawn from an
/// independent stream so changing the noise law leaves the causes intact.
inline PairedSample generate(const GeneratorSpec& spec) {
    validate(spec);
    std::seed_seq cause_seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 1u};
    std::seed_seq noise_seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 2u};
    std::mt19937_64 cause_rng(cause_seq);
    std::mt19937_64 noise_rng(noise_seq);
    PairedSample out;
    out.x.resize(spec.n);
    out.y.resize(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) {
        out.x[i] = draw(spec.cause, cause_rng);
        out.y[i] = apply(spec.mechanism, out.x[i]) + draw(spec.noise, noise_rng);
    }
    return out;
}

struct CauseShift {
    CauseDist cause;
};
struct NoiseShift {
    NoiseDist noise;
};
struct MechanismShift {
    Mechanism mechanism;
};
using Shift = std::variant<CauseShift, NoiseShift, MechanismShift>;

inline std::string_view shift_kind(const Shift& s) {
    switch (s.index()) {
        case 0: return "cause";
        case 1: return "noise";
        default: return "mechanism";
    }
}

struct ShiftPair {
    PairedSample train;
    PairedSample extra_pairs;
    GeneratorSpec train_spec;
    GeneratorSpec extra_spec;
    std::string changed;  ///< which field differs: "cause", "noise" or "mechanism"
};

inline GeneratorSpec apply_shift(const GeneratorSpec& base, const Shift& shift) {
    GeneratorSpec out = base;
    std::visit(
        [&out](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, CauseShift>) {
                out.cause = s.cause;
            } else if constexpr (std::is_same_v<T, NoiseShift>) {
                out.noise = s.noise;
            } else {
                out.mechanism = s.mechanism;
            }
        },
        shift);
    return out;
}

/// Training data from `base` and an extra sample in which exactly one
/// component has been substituted.  The extra sample uses a derived seed.
inline ShiftPair generate_shift_pair(const GeneratorSpec& base, const Shift& shift, std::size_t n_extra) {
    validate(base);
    ShiftPair out;
    out.train_spec = base;
    out.extra_spec = apply_shift(base, shift);
    require(!(out.extra_spec.mechanism == base.mechanism && out.extra_spec.cause == base.cause &&
              out.extra_spec.noise == base.noise),
            ErrorCode::InvalidConfig, "the shift leaves the generator unchanged");
    validate(out.extra_spec);
    out.extra_spec.n = n_extra;
    out.extra_spec.seed = base.seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL;
    out.changed = std::string(shift_kind(shift));
    out.train = generate(out.train_spec);
    out.extra_pairs = generate(out.extra_spec);
    return out;
}

/// Like generate_shift_pair, but an empty shift draws the extra sample from
/// the training generator itself (changed = "none").
inline ShiftPair generate_domain_pair(const GeneratorSpec& base, const std::optional<Shift>& shift,
                                      std::size_t n_extra) {
    if (shift) return generate_shift_pair(base, *shift, n_extra);
    validate(base);
    ShiftPair out;
    out.train_spec = base;
    out.extra_spec = base;
    out.extra_spec.n = n_extra;
    out.extra_spec.seed = base.seed * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL;
    validate(out.extra_spec);
    out.changed = "none";
    out.train = generate(out.train_spec);
    out.extra_pairs = generate(out.extra_spec);
    return out;
}

}  // namespace cem
