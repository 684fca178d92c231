#include <algorithm>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cem/datagen.hpp"
#include "cem/io.hpp"
#include "cem/scenarios.hpp"

namespace {

using cem::ErrorCode;
namespace io = cem::io;

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const cem::Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected cem::Error";
    return ErrorCode::InvalidArgument;
}

cem::AnmConfig fast() {
    cem::AnmConfig c;
    c.n_permutations = 99;
    return c;
}

TEST(FormatDouble, RoundTripsExactly) {
    for (double v : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0, -0.0}) {
        double back = 1.0;
        ASSERT_TRUE(io::parse_double(io::format_double(v), back));
        EXPECT_EQ(back, v);
    }
    double out = 0.0;
    EXPECT_FALSE(io::parse_double("1.5x", out));
    EXPECT_FALSE(io::parse_double("", out));
}

TEST(Record, ParsesCommentsAndRejectsDuplicates) {
    const auto r = io::Record::parse("# header\n\na = 1\n b =  two words \n");
    EXPECT_EQ(r.get_double("a"), 1.0);
    EXPECT_EQ(r.get("b"), "two words");
    EXPECT_EQ(code_of([] { io::Record::parse("a = 1\na = 2\n"); }), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([] { io::Record::parse("no equals sign\n"); }), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([&] { r.get("missing"); }), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([&] { r.get_uint("b"); }), ErrorCode::InvalidConfig);
}

TEST(TextRoundTrip, Density) {
    const auto d = cem::GridDensity::from_pdf(cem::Grid(-2, 3, 77), [](double x) { return std::exp(-x * x); });
    const auto back = io::density_from_text(io::to_text(d));
    EXPECT_EQ(back.values(), d.values());
    EXPECT_EQ(back.grid().lo(), d.grid().lo());
    EXPECT_EQ(back.grid().hi(), d.grid().hi());
    EXPECT_EQ(back.size(), d.size());
    EXPECT_EQ(code_of([&] { io::model_from_text(io::to_text(d)); }), ErrorCode::InvalidConfig);
}

TEST(TextRoundTrip, ModelAndAnmFit) {
    const auto p = cem::generate({cem::Mechanism::Tanh3, cem::UniformDist{-1, 1}, cem::GaussianNoise{0.2}, 80, 1});
    const auto fit = cem::fit_anm(p, fast());
    const auto m = io::model_from_text(io::to_text(fit.model));
    EXPECT_EQ(m.inputs, fit.model.inputs);
    EXPECT_EQ(m.coefficients, fit.model.coefficients);
    EXPECT_EQ(m.bandwidth, fit.model.bandwidth);
    EXPECT_EQ(m.ridge, fit.model.ridge);
    EXPECT_EQ(m.intercept, fit.model.intercept);

    const auto f = io::anm_fit_from_text(io::to_text(fit));
    EXPECT_EQ(f.residuals, fit.residuals);
    EXPECT_EQ(f.independence.statistic, fit.independence.statistic);
    EXPECT_EQ(f.independence.p_value, fit.independence.p_value);
    EXPECT_EQ(f.independence.n_permutations, fit.independence.n_permutations);
    EXPECT_EQ(f.noise_density.values(), fit.noise_density.values());
    EXPECT_EQ(io::to_text(f), io::to_text(fit));
}

TEST(TextRoundTrip, ConditionalFitAndPredictor) {
    const auto a = cem::generate({cem::Mechanism::Square, cem::UniformDist{-1, 1}, cem::GaussianNoise{0.2}, 60, 2});
    const auto b = cem::generate({cem::Mechanism::Square, cem::UniformDist{-1, 1}, cem::GaussianNoise{0.4}, 60, 3});
    const std::vector<cem::PairedSample> sets{a, b};
    const auto cf = cem::fit_conditional_anm(sets, fast());
    const auto back = io::conditional_fit_from_text(io::to_text(cf));
    EXPECT_EQ(io::to_text(back), io::to_text(cf));
    EXPECT_EQ(back.predict(1, 0.3), cf.predict(1, 0.3));

    cem::ScenarioConfig cfg;
    cfg.localize.anm = fast();
    cfg.x_bins = 16;
    cfg.y_bins = 32;
    auto pred = cem::baseline_predictor(a, cfg);
    pred.provenance.flag("misfit");
    const auto pb = io::predictor_from_text(io::to_text(pred));
    EXPECT_EQ(pb.density, pred.density);
    EXPECT_EQ(pb.point_estimate, pred.point_estimate);
    EXPECT_EQ(pb.provenance.route, pred.provenance.route);
    EXPECT_EQ(pb.provenance.flags, pred.provenance.flags);
    EXPECT_EQ(pb.provenance.values, pred.provenance.values);
}

TEST(PredictorText, TableMustMatchGrids) {
    cem::ConditionalPredictor c;
    c.x_grid = cem::Grid(0, 1, 8);
    c.y_grid = cem::Grid(0, 1, 8);
    c.density.assign(64, 1.0);
    c.point_estimate.assign(8, 0.5);
    std::string text = io::to_text(c);
    const auto pos = text.find("density = 1 1");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 13, "density = 1");
    EXPECT_EQ(code_of([&] { io::predictor_from_text(text); }), ErrorCode::InvalidConfig);
}

TEST(GeneratorText, RoundTripsAllFamilies) {
    const std::vector<cem::GeneratorSpec> specs{
        {cem::Mechanism::CubePlus, cem::UniformDist{-1, 2}, cem::LaplaceNoise{0.25}, 17, 99},
        {cem::Mechanism::Tanh3, cem::GaussianDist{0.5, 0.1}, cem::UniformNoise{0.3}, 5, 0},
        {cem::Mechanism::Square, cem::Mixture2Dist{-1, 0.2, 2, 0.3, 0.25}, cem::GaussianNoise{1.5}, 1000, 7},
    };
    for (const auto& g : specs) {
        io::Record r;
        io::put(r, "train.", g);
        EXPECT_EQ(io::get_generator(io::Record::parse(r.str()), "train."), g);
    }
    EXPECT_EQ(code_of([] { io::parse_cause("uniform 0"); }), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([] { io::parse_noise("cauchy 1"); }), ErrorCode::InvalidConfig);
    EXPECT_EQ(code_of([] { io::get_generator(io::Record::parse("mechanism = sine\n")); }),
              ErrorCode::UnknownMechanism);
}

TEST(ShiftText, RoundTrips) {
    for (const cem::Shift s : {cem::Shift{cem::CauseShift{cem::GaussianDist{1, 2}}},
                               cem::Shift{cem::NoiseShift{cem::LaplaceNoise{0.5}}},
                               cem::Shift{cem::MechanismShift{cem::Mechanism::Cube}}}) {
        const auto back = io::parse_shift(io::to_text(s));
        EXPECT_EQ(io::to_text(back), io::to_text(s));
        EXPECT_EQ(back.index(), s.index());
    }
}

TEST(Csv, PairsRoundTrip) {
    const auto p = cem::generate({cem::Mechanism::Cube, cem::GaussianDist{0, 1}, cem::GaussianNoise{0.1}, 50, 4});
    const auto back = io::parse_pairs_csv(io::pairs_csv(p));
    EXPECT_EQ(back.x, p.x);
    EXPECT_EQ(back.y, p.y);
    const auto col = io::parse_column_csv(io::column_csv(p.y, "y"));
    EXPECT_EQ(col, p.y);
    EXPECT_EQ(io::parse_column_csv("1\n2\n"), (cem::SampleSet{1, 2}));
}

TEST(Csv, MalformedInputs) {
    EXPECT_EQ(code_of([] { io::parse_pairs_csv(""); }), ErrorCode::MalformedCsv);
    EXPECT_EQ(code_of([] { io::parse_pairs_csv("x\n1\n2\n"); }), ErrorCode::MalformedCsv);
    EXPECT_EQ(code_of([] { io::parse_pairs_csv("x,y\n"); }), ErrorCode::MalformedCsv);
    EXPECT_EQ(code_of([] { io::parse_pairs_csv("x,y\n1,2\n3,abc\n"); }), ErrorCode::MalformedCsv);
    EXPECT_EQ(code_of([] { io::parse_column_csv("x\n"); }), ErrorCode::MalformedCsv);
    EXPECT_EQ(code_of([] { io::parse_column_csv("x\n1,2\n"); }), ErrorCode::MalformedCsv);
    EXPECT_EQ(code_of([] { io::parse_column_csv("x\n1\nfoo\n"); }), ErrorCode::MalformedCsv);
}

TEST(Csv, PredictionsHaveOneRowPerBin) {
    cem::ConditionalPredictor c;
    c.x_grid = cem::Grid(0, 1, 12);
    c.y_grid = cem::Grid(0, 1, 8);
    c.density.assign(96, 1.0);
    c.point_estimate.assign(12, 0.5);
    const std::string csv = io::predictions_csv(c);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
    EXPECT_EQ(csv.rfind("x,point_estimate,row_std\n", 0), 0u);
}

TEST(Svg, WellFormedAndEscaped) {
    io::Plot plot{"a < b & c", "x", "density", {}};
    plot.series.push_back(io::density_series(
        cem::GridDensity::from_pdf(cem::Grid(-1, 1, 32), [](double x) { return 1.0 - std::abs(x); }), "tri", "#d62728"));
    plot.series.push_back({"flat", {0.0, 0.0}, {1.0, 1.0}, "#000"});
    const std::string svg = io::render_svg(plot);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("viewBox=\"0 0 640 400\""), std::string::npos);
    EXPECT_NE(svg.find("a &lt; b &amp; c"), std::string::npos);
    EXPECT_EQ(svg.find("a < b"), std::string::npos);
    EXPECT_EQ(std::count_if(svg.begin(), svg.end(), [](char c) { return c == '<'; }),
              std::count_if(svg.begin(), svg.end(), [](char c) { return c == '>'; }));
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
    EXPECT_EQ(svg.find("nan"), std::string::npos);
}

}  // namespace
