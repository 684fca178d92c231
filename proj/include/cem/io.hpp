#pragma once

// Text formats: flat key = value records (configs and artifacts alike),
// two-column and single-column CSV, and self-contained SVG line plots.
// Numbers are written with 17 significant digits so reloads are exact.

#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cem/anm.hpp"
#include "cem/causal_modules.hpp"
#include "cem/datagen.hpp"
#include "cem/error.hpp"
#include "cem/grid.hpp"
#include "cem/regress.hpp"
#include "cem/scenarios.hpp"

namespace cem::io {

inline constexpr int kFormatVersion = 1;

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

/// Strict parse: the whole token must be a finite number.
inline bool parse_double(std::string_view token, double& out) {
    const std::string t = trim(token);
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

/// "# written <UTC time>": the one line allowed to differ between reruns.
inline std::string timestamp_line() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << "# written " << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::IoError, "cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot open '" + path + "' for writing");
    out << contents;
    out.flush();
    require(static_cast<bool>(out), ErrorCode::IoError, "write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Key = value records

/// Ordered flat record.  Lines are "key = value"; blank lines and lines
/// starting with '#' are ignored.  Arrays are space-separated.
class Record {
public:
    void set(const std::string& key, std::string value) {
        for (auto& [k, v] : fields_)
            if (k == key) {
                v = std::move(value);
                return;
            }
        fields_.emplace_back(key, std::move(value));
    }
    void set(const std::string& key, const char* value) { set(key, std::string(value)); }
    void set(const std::string& key, double v) { set(key, format_double(v)); }
    void set(const std::string& key, std::uint64_t v) { set(key, std::to_string(v)); }
    void set(const std::string& key, bool v) { set(key, std::string(v ? "true" : "false")); }
    void set(const std::string& key, std::span<const double> xs) {
        std::string s;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (i) s += ' ';
            s += format_double(xs[i]);
        }
        set(key, std::move(s));
    }

    bool has(const std::string& key) const { return find(key) != nullptr; }

    const std::string& get(const std::string& key) const {
        const auto* v = find(key);
        require(v != nullptr, ErrorCode::InvalidConfig, "missing key '" + key + "'");
        return *v;
    }
    std::string get_or(const std::string& key, const std::string& fallback) const {
        const auto* v = find(key);
        return v ? *v : fallback;
    }
    double get_double(const std::string& key) const {
        double out = 0.0;
        require(parse_double(get(key), out), ErrorCode::InvalidConfig, "key '" + key + "' is not a number");
        return out;
    }
    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }
    std::uint64_t get_uint(const std::string& key) const {
        const std::string t = trim(get(key));
        std::uint64_t out = 0;
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
        require(!t.empty() && ec == std::errc() && ptr == t.data() + t.size(), ErrorCode::InvalidConfig,
                "key '" + key + "' is not a nonnegative integer");
        return out;
    }
    std::uint64_t get_uint_or(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? get_uint(key) : fallback;
    }
    bool get_bool(const std::string& key) const {
        const std::string v = trim(get(key));
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        fail(ErrorCode::InvalidConfig, "key '" + key + "' is not a boolean");
    }
    bool get_bool_or(const std::string& key, bool fallback) const { return has(key) ? get_bool(key) : fallback; }
    std::vector<double> get_array(const std::string& key) const {
        std::vector<double> out;
        std::istringstream ss(get(key));
        std::string tok;
        while (ss >> tok) {
            double v = 0.0;
            require(parse_double(tok, v), ErrorCode::InvalidConfig, "key '" + key + "' holds a non-number");
            out.push_back(v);
        }
        return out;
    }

    const std::vector<std::pair<std::string, std::string>>& fields() const { return fields_; }

    std::string str() const {
        std::string s;
        for (const auto& [k, v] : fields_) s += k + " = " + v + '\n';
        return s;
    }

    static Record parse(std::string_view text) {
        Record r;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            const auto end = std::min(text.find('\n', pos), text.size());
            const std::string line = trim(text.substr(pos, end - pos));
            pos = end + 1;
            ++line_no;
            if (line.empty() || line.front() == '#') continue;
            const auto eq = line.find('=');
            require(eq != std::string::npos, ErrorCode::InvalidConfig,
                    "line " + std::to_string(line_no) + ": expected 'key = value'");
            const std::string key = trim(std::string_view(line).substr(0, eq));
            require(!key.empty(), ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": empty key");
            require(!r.has(key), ErrorCode::InvalidConfig, "duplicate key '" + key + "'");
            r.set(key, trim(std::string_view(line).substr(eq + 1)));
            if (end == text.size()) break;
        }
        return r;
    }

private:
    const std::string* find(const std::string& key) const {
        for (const auto& [k, v] : fields_)
            if (k == key) return &v;
        return nullptr;
    }

    std::vector<std::pair<std::string, std::string>> fields_;
};

inline Record read_record(const std::string& path) { return Record::parse(read_file(path)); }

/// Starts a versioned artifact record of the given kind.
inline Record artifact(const std::string& kind) {
    Record r;
    r.set("kind", kind);
    r.set("version", std::to_string(kFormatVersion));
    return r;
}

inline void expect_artifact(const Record& r, const std::string& kind) {
    require(r.get_or("kind", "") == kind, ErrorCode::InvalidConfig, "expected a '" + kind + "' record");
    require(r.get_uint("version") == static_cast<std::uint64_t>(kFormatVersion), ErrorCode::InvalidConfig,
            "unsupported " + kind + " version");
}

// ---------------------------------------------------------------------------
// Library types (prefix "" or "name." for embedding)

inline void put(Record& r, const std::string& p, const Grid& g) {
    r.set(p + "lo", g.lo());
    r.set(p + "hi", g.hi());
    r.set(p + "m", static_cast<std::uint64_t>(g.size()));
}
inline Grid get_grid(const Record& r, const std::string& p) {
    return Grid(r.get_double(p + "lo"), r.get_double(p + "hi"), static_cast<std::size_t>(r.get_uint(p + "m")));
}

inline void put(Record& r, const std::string& p, const GridDensity& d) {
    put(r, p, d.grid());
    r.set(p + "values", std::span<const double>(d.values()));
}
inline GridDensity get_density(const Record& r, const std::string& p) {
    return GridDensity::exact(get_grid(r, p), r.get_array(p + "values"));
}

inline void put(Record& r, const std::string& p, const RegressionModel& m) {
    r.set(p + "bandwidth", m.bandwidth);
    r.set(p + "ridge", m.ridge);
    r.set(p + "intercept", m.intercept);
    r.set(p + "inputs", std::span<const double>(m.inputs));
    r.set(p + "coefficients", std::span<const double>(m.coefficients));
}
inline RegressionModel get_model(const Record& r, const std::string& p) {
    RegressionModel m;
    m.bandwidth = r.get_double(p + "bandwidth");
    m.ridge = r.get_double(p + "ridge");
    m.intercept = r.get_double(p + "intercept");
    m.inputs = r.get_array(p + "inputs");
    m.coefficients = r.get_array(p + "coefficients");
    require(m.inputs.size() == m.coefficients.size(), ErrorCode::InvalidConfig, "inputs and coefficients differ in length");
    return m;
}

inline void put(Record& r, const std::string& p, const HsicResult& h) {
    r.set(p + "statistic", h.statistic);
    r.set(p + "p_value", h.p_value);
    r.set(p + "n_permutations", static_cast<std::uint64_t>(h.n_permutations));
    r.set(p + "seed", h.seed);
}
inline HsicResult get_hsic(const Record& r, const std::string& p) {
    HsicResult h;
    h.statistic = r.get_double(p + "statistic");
    h.p_value = r.get_double(p + "p_value");
    h.n_permutations = static_cast<std::size_t>(r.get_uint(p + "n_permutations"));
    h.seed = r.get_uint(p + "seed");
    return h;
}

inline void put(Record& r, const std::string& p, const ValidityReport& v) {
    r.set(p + "negative_mass", v.negative_mass);
    r.set(p + "total_mass_error", v.total_mass_error);
    r.set(p + "is_valid", v.is_valid);
    r.set(p + "tolerance_used", v.tolerance_used);
}

inline std::string to_text(const GridDensity& d) {
    Record r = artifact("grid_density");
    put(r, "", d);
    return r.str();
}
inline GridDensity density_from_text(std::string_view text) {
    const Record r = Record::parse(text);
    expect_artifact(r, "grid_density");
    return get_density(r, "");
}

inline std::string to_text(const RegressionModel& m) {
    Record r = artifact("regression_model");
    put(r, "", m);
    return r.str();
}
inline RegressionModel model_from_text(std::string_view text) {
    const Record r = Record::parse(text);
    expect_artifact(r, "regression_model");
    return get_model(r, "");
}

inline std::string to_text(const AnmFit& f) {
    Record r = artifact("anm_fit");
    put(r, "model.", f.model);
    r.set("residuals", std::span<const double>(f.residuals));
    put(r, "independence.", f.independence);
    put(r, "noise.", f.noise_density);
    return r.str();
}
inline AnmFit anm_fit_from_text(std::string_view text) {
    const Record r = Record::parse(text);
    expect_artifact(r, "anm_fit");
    AnmFit f;
    f.model = get_model(r, "model.");
    f.residuals = r.get_array("residuals");
    f.independence = get_hsic(r, "independence.");
    f.noise_density = get_density(r, "noise.");
    return f;
}

inline std::string to_text(const ConditionalAnmFit& f) {
    Record r = artifact("conditional_anm_fit");
    put(r, "model.", f.model);
    r.set("objective_trace", std::span<const double>(f.objective_trace));
    r.set("datasets", static_cast<std::uint64_t>(f.per_dataset.size()));
    for (std::size_t i = 0; i < f.per_dataset.size(); ++i) {
        const std::string p = "dataset" + std::to_string(i) + ".";
        const auto& d = f.per_dataset[i];
        r.set(p + "offset", d.offset);
        r.set(p + "residuals", std::span<const double>(d.residuals));
        put(r, p + "independence.", d.independence);
        put(r, p + "noise.", d.noise_density);
    }
    return r.str();
}
inline ConditionalAnmFit conditional_fit_from_text(std::string_view text) {
    const Record r = Record::parse(text);
    expect_artifact(r, "conditional_anm_fit");
    ConditionalAnmFit f;
    f.model = get_model(r, "model.");
    f.objective_trace = r.get_array("objective_trace");
    const auto n = r.get_uint("datasets");
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::string p = "dataset" + std::to_string(i) + ".";
        DatasetDiagnostics d;
        d.offset = r.get_double(p + "offset");
        d.residuals = r.get_array(p + "residuals");
        d.independence = get_hsic(r, p + "independence.");
        d.noise_density = get_density(r, p + "noise.");
        f.per_dataset.push_back(std::move(d));
    }
    return f;
}

inline std::string to_text(const ConditionalPredictor& c) {
    Record r = artifact("conditional_predictor");
    put(r, "x_grid.", c.x_grid);
    put(r, "y_grid.", c.y_grid);
    r.set("density", std::span<const double>(c.density));
    r.set("point_estimate", std::span<const double>(c.point_estimate));
    r.set("route", c.provenance.route);
    std::string flags;
    for (const auto& f : c.provenance.flags) flags += (flags.empty() ? "" : " ") + f;
    r.set("flags", flags);
    for (const auto& [k, v] : c.provenance.values) r.set("value." + k, v);
    return r.str();
}
inline ConditionalPredictor predictor_from_text(std::string_view text) {
    const Record r = Record::parse(text);
    expect_artifact(r, "conditional_predictor");
    ConditionalPredictor c;
    c.x_grid = get_grid(r, "x_grid.");
    c.y_grid = get_grid(r, "y_grid.");
    c.density = r.get_array("density");
    c.point_estimate = r.get_array("point_estimate");
    require(c.density.size() == c.x_grid.size() * c.y_grid.size() && c.point_estimate.size() == c.x_grid.size(),
            ErrorCode::InvalidConfig, "predictor table does not match its grids");
    c.provenance.route = r.get("route");
    std::istringstream fs(r.get("flags"));
    for (std::string f; fs >> f;) c.provenance.flags.push_back(f);
    for (const auto& [k, v] : r.fields())
        if (k.rfind("value.", 0) == 0) c.provenance.set(k.substr(6), r.get_double(k));
    return c;
}

// ---------------------------------------------------------------------------
// Generator specs as config text

namespace detail {

inline std::vector<std::string> words(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream ss{std::string(s)};
    for (std::string w; ss >> w;) out.push_back(w);
    return out;
}

inline std::vector<double> numbers(const std::vector<std::string>& w, std::size_t expected, const std::string& what) {
    require(w.size() == expected + 1, ErrorCode::InvalidConfig,
            what + " '" + w.front() + "' takes " + std::to_string(expected) + " parameters");
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i)
        require(parse_double(w[i + 1], out[i]), ErrorCode::InvalidConfig, what + " parameter is not a number");
    return out;
}

}  // namespace detail

/// "uniform a b", "gaussian mu sigma", "mixture2 mu1 sigma1 mu2 sigma2 w"
inline std::string to_text(const CauseDist& d) {
    return std::visit(
        [](const auto& c) -> std::string {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, UniformDist>) {
                return "uniform " + format_double(c.a) + " " + format_double(c.b);
            } else if constexpr (std::is_same_v<T, GaussianDist>) {
                return "gaussian " + format_double(c.mu) + " " + format_double(c.sigma);
            } else {
                return "mixture2 " + format_double(c.mu1) + " " + format_double(c.sigma1) + " " +
                       format_double(c.mu2) + " " + format_double(c.sigma2) + " " + format_double(c.w);
            }
        },
        d);
}

inline CauseDist parse_cause(std::string_view text) {
    const auto w = detail::words(text);
    require(!w.empty(), ErrorCode::InvalidConfig, "empty cause distribution");
    if (w[0] == "uniform") {
        const auto v = detail::numbers(w, 2, "cause");
        return UniformDist{v[0], v[1]};
    }
    if (w[0] == "gaussian") {
        const auto v = detail::numbers(w, 2, "cause");
        return GaussianDist{v[0], v[1]};
    }
    if (w[0] == "mixture2") {
        const auto v = detail::numbers(w, 5, "cause");
        return Mixture2Dist{v[0], v[1], v[2], v[3], v[4]};
    }
    fail(ErrorCode::InvalidConfig, "unknown cause distribution '" + w[0] + "'");
}

/// "gaussian sigma", "laplace b", "uniform a"
inline std::string to_text(const NoiseDist& d) {
    return std::visit(
        [](const auto& c) -> std::string {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, GaussianNoise>) {
                return "gaussian " + format_double(c.sigma);
            } else if constexpr (std::is_same_v<T, LaplaceNoise>) {
                return "laplace " + format_double(c.b);
            } else {
                return "uniform " + format_double(c.a);
            }
        },
        d);
}

inline NoiseDist parse_noise(std::string_view text) {
    const auto w = detail::words(text);
    require(!w.empty(), ErrorCode::InvalidConfig, "empty noise distribution");
    if (w[0] == "gaussian") return GaussianNoise{detail::numbers(w, 1, "noise")[0]};
    if (w[0] == "laplace") return LaplaceNoise{detail::numbers(w, 1, "noise")[0]};
    if (w[0] == "uniform") return UniformNoise{detail::numbers(w, 1, "noise")[0]};
    fail(ErrorCode::InvalidConfig, "unknown noise distribution '" + w[0] + "'");
}

/// "cause <dist>", "noise <dist>", "mechanism <name>"
inline std::string to_text(const Shift& s) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, CauseShift>) {
                return "cause " + to_text(v.cause);
            } else if constexpr (std::is_same_v<T, NoiseShift>) {
                return "noise " + to_text(v.noise);
            } else {
                return "mechanism " + std::string(to_string(v.mechanism));
            }
        },
        s);
}

inline Shift parse_shift(std::string_view text) {
    const std::string t = trim(text);
    const auto sp = t.find(' ');
    const std::string head = t.substr(0, sp);
    const std::string rest = sp == std::string::npos ? "" : t.substr(sp + 1);
    if (head == "cause") return CauseShift{parse_cause(rest)};
    if (head == "noise") return NoiseShift{parse_noise(rest)};
    if (head == "mechanism") {
        require(!trim(rest).empty(), ErrorCode::InvalidConfig, "mechanism shift needs a mechanism name");
        return MechanismShift{parse_mechanism(trim(rest))};
    }
    fail(ErrorCode::InvalidConfig, "shift must start with cause, noise or mechanism");
}

inline void put(Record& r, const std::string& p, const GeneratorSpec& g) {
    r.set(p + "mechanism", std::string(to_string(g.mechanism)));
    r.set(p + "cause", to_text(g.cause));
    r.set(p + "noise", to_text(g.noise));
    r.set(p + "n", static_cast<std::uint64_t>(g.n));
    r.set(p + "seed", g.seed);
}

/// Missing keys take GeneratorSpec defaults; the result is validated.
inline GeneratorSpec get_generator(const Record& r, const std::string& p = "") {
    GeneratorSpec g;
    if (r.has(p + "mechanism")) g.mechanism = parse_mechanism(trim(r.get(p + "mechanism")));
    if (r.has(p + "cause")) g.cause = parse_cause(r.get(p + "cause"));
    if (r.has(p + "noise")) g.noise = parse_noise(r.get(p + "noise"));
    g.n = static_cast<std::size_t>(r.get_uint_or(p + "n", g.n));
    g.seed = r.get_uint_or(p + "seed", g.seed);
    validate(g);
    return g;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string pairs_csv(const PairedSample& s) {
    require(s.x.size() == s.y.size(), ErrorCode::LengthMismatch, "columns differ in length");
    std::string out = "x,y\n";
    for (std::size_t i = 0; i < s.size(); ++i) out += format_double(s.x[i]) + "," + format_double(s.y[i]) + "\n";
    return out;
}

inline std::string column_csv(std::span<const double> xs, const std::string& header = "x") {
    std::string out = header + "\n";
    for (double v : xs) out += format_double(v) + "\n";
    return out;
}

namespace detail {

inline std::vector<std::vector<std::string>> csv_rows(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t a = 0;
        while (true) {
            const auto c = line.find(',', a);
            fields.push_back(trim(std::string_view(line).substr(a, c == std::string::npos ? std::string::npos : c - a)));
            if (c == std::string::npos) break;
            a = c + 1;
        }
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace detail

/// Two-column CSV with the header "x,y".
inline PairedSample parse_pairs_csv(std::string_view text) {
    const auto rows = detail::csv_rows(text);
    require(!rows.empty(), ErrorCode::MalformedCsv, "empty CSV");
    require(rows[0].size() == 2 && rows[0][0] == "x" && rows[0][1] == "y", ErrorCode::MalformedCsv,
            "expected the header 'x,y'");
    require(rows.size() > 1, ErrorCode::MalformedCsv, "CSV has no data rows");
    PairedSample s;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        double x = 0.0;
        double y = 0.0;
        require(r.size() == 2 && parse_double(r[0], x) && parse_double(r[1], y), ErrorCode::MalformedCsv,
                "row " + std::to_string(i + 1) + " is not two numbers");
        s.x.push_back(x);
        s.y.push_back(y);
    }
    return s;
}

/// Single-column CSV; a non-numeric first line is taken as the header.
inline SampleSet parse_column_csv(std::string_view text) {
    const auto rows = detail::csv_rows(text);
    SampleSet out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        double v = 0.0;
        require(r.size() == 1, ErrorCode::MalformedCsv, "row " + std::to_string(i + 1) + " has more than one column");
        if (!parse_double(r[0], v)) {
            require(i == 0, ErrorCode::MalformedCsv, "row " + std::to_string(i + 1) + " is not a number");
            continue;
        }
        out.push_back(v);
    }
    require(!out.empty(), ErrorCode::MalformedCsv, "CSV has no data rows");
    return out;
}

inline PairedSample read_pairs_csv(const std::string& path) { return parse_pairs_csv(read_file(path)); }
inline SampleSet read_column_csv(const std::string& path) { return parse_column_csv(read_file(path)); }

/// x (bin center), point_estimate, row_std per x bin.
inline std::string predictions_csv(const ConditionalPredictor& c) {
    std::string out = "x,point_estimate,row_std\n";
    for (std::size_t k = 0; k < c.x_grid.size(); ++k)
        out += format_double(c.x_grid.center(k)) + "," + format_double(c.point_estimate[k]) + "," +
               format_double(c.row_std(k)) + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// SVG

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
};

struct Plot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
};

namespace detail {

inline std::string escape_xml(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string fmt(double v, const char* spec = "%.6g") {
    char buf[32];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

}  // namespace detail

/// Fixed 640x400 viewBox; axes span the data range of all series.
inline std::string render_svg(const Plot& plot) {
    constexpr double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : plot.series)
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!(xmax > xmin)) {
        xmin = (xmin < 1e300 ? xmin : 0.0) - 0.5;
        xmax = xmin + 1.0;
    }
    if (!(ymax > ymin)) {
        ymin = (ymin < 1e300 ? ymin : 0.0) - 0.5;
        ymax = ymin + 1.0;
    }
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

    using detail::fmt;
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 400\" width=\"640\" height=\"400\">\n";
    s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    s += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
         detail::escape_xml(plot.title) + "</text>\n";
    s += "<g stroke=\"#444\" stroke-width=\"1\" fill=\"none\">";
    s += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(H - B) + "\" x2=\"" + fmt(W - R) + "\" y2=\"" + fmt(H - B) + "\"/>";
    s += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T) + "\" x2=\"" + fmt(L) + "\" y2=\"" + fmt(H - B) + "\"/></g>\n";
    s += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#222\">\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        s += "<text x=\"" + fmt(px(xv), "%.2f") + "\" y=\"" + fmt(H - B + 16) + "\" text-anchor=\"middle\">" +
             fmt(xv, "%.3g") + "</text>";
        s += "<text x=\"" + fmt(L - 6) + "\" y=\"" + fmt(py(yv) + 4, "%.2f") + "\" text-anchor=\"end\">" +
             fmt(yv, "%.3g") + "</text>\n";
    }
    s += "<text x=\"" + fmt((L + W - R) / 2) + "\" y=\"" + fmt(H - 12) + "\" text-anchor=\"middle\">" +
         detail::escape_xml(plot.x_label) + "</text>\n";
    s += "<text x=\"14\" y=\"" + fmt((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         fmt((T + H - B) / 2) + ")\">" + detail::escape_xml(plot.y_label) + "</text>\n</g>\n";
    for (std::size_t k = 0; k < plot.series.size(); ++k) {
        const auto& ser = plot.series[k];
        std::string pts;
        for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i) {
            if (!std::isfinite(ser.x[i]) || !std::isfinite(ser.y[i])) continue;
            if (!pts.empty()) pts += ' ';
            pts += fmt(px(ser.x[i]), "%.2f") + "," + fmt(py(ser.y[i]), "%.2f");
        }
        s += "<polyline fill=\"none\" stroke=\"" + ser.color + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        const double ly = T + 14.0 * static_cast<double>(k);
        s += "<line x1=\"" + fmt(W - R + 10) + "\" y1=\"" + fmt(ly) + "\" x2=\"" + fmt(W - R + 30) + "\" y2=\"" +
             fmt(ly) + "\" stroke=\"" + ser.color + "\" stroke-width=\"2\"/>";
        s += "<text x=\"" + fmt(W - R + 34) + "\" y=\"" + fmt(ly + 4) +
             "\" font-family=\"sans-serif\" font-size=\"11\">" + detail::escape_xml(ser.name) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

inline Series density_series(const GridDensity& d, std::string name, std::string color) {
    return {std::move(name), d.grid().centers(), d.values(), std::move(color)};
}

}  // namespace cem::io
