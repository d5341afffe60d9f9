#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "turbstoch/errors.hpp"
#include "turbstoch/refcurves.hpp"

using namespace turbstoch;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
    fs::path d = fs::temp_directory_path() / "turbstoch_ref_test";
    fs::create_directories(d);
    return d;
}

std::vector<double> log_grid(double lo, double hi, int count) {
    std::vector<double> g;
    for (int i = 0; i < count; ++i)
        g.push_back(lo * std::pow(hi / lo, double(i) / double(count - 1)));
    return g;
}

}  // namespace

TEST_CASE("parameter validation") {
    ReferenceModelParams p;
    CHECK(p.zeta2() == doctest::Approx(2.0 / 3.0 + 0.025));
    p.validate();  // defaults are valid

    ReferenceModelParams bad = p;
    bad.eta = 3000.0;  // >= L
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = p;
    bad.c2 = 0.2;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
    bad = p;
    bad.sigma2 = 0.0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("reference curves have the advertised asymptotics") {
    ReferenceModelParams p;  // eta=5, L=2350, c2=0.025
    auto grid = log_grid(0.05, 40000.0, 600);
    ReferenceCurves c = synth_reference(p, grid);

    SUBCASE("dissipative slope of logS2 is 2") {
        SlopeFit fit = fit_loglog_slope(c.log_s2_curve(), 0.1 * p.eta, 0.5 * p.eta);
        CHECK(fit.slope == doctest::Approx(2.0).epsilon(0.05));
    }
    SUBCASE("inertial slope of logS2 is zeta2") {
        SlopeFit fit = fit_loglog_slope(c.log_s2_curve(), 20.0 * p.eta, p.L / 6.0);
        CHECK(std::abs(fit.slope - p.zeta2()) < 0.01);
    }
    SUBCASE("logS2 plateaus beyond the integral scale") {
        SlopeFit fit = fit_loglog_slope(c.log_s2_curve(), 8.0 * p.L, 16.0 * p.L);
        CHECK(std::abs(fit.slope) < 0.1);
        // asymptote: log sigma2 + zeta2 * log(L/eta)
        double plateau = std::log(p.sigma2) + p.zeta2() * std::log(p.L / p.eta);
        CHECK(ref_log_s2(p, 16.0 * p.L) == doctest::Approx(plateau).epsilon(0.02));
    }
    SUBCASE("inertial slope of logF3 is -4*c2") {
        SlopeFit fit = fit_loglog_slope(c.log_f3_curve(), 8.0 * p.eta, p.L / 6.0);
        CHECK(std::abs(fit.slope - (-4.0 * p.c2)) < 0.005);
    }
    SUBCASE("flatness exceeds 3 at small scales and approaches 3 at large scales") {
        CHECK(ref_log_f3(p, 1.0) > 0.1);
        CHECK(std::abs(ref_log_f3(p, 16.0 * p.L)) < 0.01);
        // monotone decreasing intermittency
        for (size_t i = 1; i < c.scales.size(); ++i) CHECK(c.logF3[i] <= c.logF3[i - 1] + 1e-12);
    }
    SUBCASE("skewness is negative everywhere and near -s0 in the inertial range") {
        for (size_t i = 0; i < c.scales.size(); ++i) CHECK(c.skew[i] < 0.0);
        double s_mid = ref_skewness(p, 100.0);
        CHECK(std::abs(s_mid - (-p.s0)) < 0.3 * p.s0);
        // decays toward zero at large scales
        CHECK(std::abs(ref_skewness(p, 50.0 * p.L)) < 0.05 * p.s0);
    }
}

TEST_CASE("csv round trip") {
    ReferenceModelParams p;
    ReferenceCurves c = synth_reference(p, log_grid(1.0, 10000.0, 64));
    fs::path path = tmpdir() / "ref.csv";
    write_reference_csv(c, path.string());
    ReferenceCurves r = load_reference_csv(path.string());
    REQUIRE(r.scales.size() == c.scales.size());
    for (size_t i = 0; i < c.scales.size(); ++i) {
        CHECK(r.scales[i] == doctest::Approx(c.scales[i]).epsilon(1e-14));
        CHECK(r.logS2[i] == doctest::Approx(c.logS2[i]).epsilon(1e-14));
        CHECK(r.skew[i] == doctest::Approx(c.skew[i]).epsilon(1e-14));
        CHECK(r.logF3[i] == doctest::Approx(c.logF3[i]).epsilon(1e-14));
    }
}

TEST_CASE("csv parse errors carry file and line") {
    fs::path dir = tmpdir();
    auto write = [&](const char* name, const std::string& content) {
        std::ofstream f(dir / name, std::ios::trunc);
        f << content;
        return (dir / name).string();
    };

    CHECK_THROWS_AS(load_reference_csv((dir / "missing.csv").string()), IoError);
    CHECK_THROWS_WITH_AS(load_reference_csv(write("hdr.csv", "wrong,header\n1,2,3,4\n")),
                         doctest::Contains(":1:"), ParseError);
    std::string nonmono = "scale,logS2,skew,logF3\n1,0,0,0\n5,0,0,0\n3,0,0,0\n";
    CHECK_THROWS_WITH_AS(load_reference_csv(write("mono.csv", nonmono)),
                         doctest::Contains(":4: scales not strictly increasing"), ParseError);
    CHECK_THROWS_WITH_AS(
        load_reference_csv(write("cols.csv", "scale,logS2,skew,logF3\n1,2,3\n2,3,4,5\n")),
        doctest::Contains("expected 4 columns"), ParseError);
    CHECK_THROWS_WITH_AS(
        load_reference_csv(write("num.csv", "scale,logS2,skew,logF3\n1,2,x,4\n")),
        doctest::Contains("bad number"), ParseError);
    CHECK_THROWS_AS(load_reference_csv(write("short.csv", "scale,logS2,skew,logF3\n1,2,3,4\n")),
                    ParseError);
}

TEST_CASE("resampling is linear in log scale") {
    ReferenceCurves c;
    c.scales = {1.0, 4.0, 16.0};
    c.logS2 = {0.0, 1.0, 3.0};
    c.skew = {-0.1, -0.2, -0.4};
    c.logF3 = {0.3, 0.2, 0.0};
    // 2.0 is the log-midpoint of [1,4]
    ReferenceCurves r = resample_to_scales(c, {2.0, 4.0, 8.0});
    CHECK(r.logS2[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.skew[0] == doctest::Approx(-0.15).epsilon(1e-12));
    CHECK(r.logF3[0] == doctest::Approx(0.25).epsilon(1e-12));
    // exact node passes through
    CHECK(r.logS2[1] == doctest::Approx(1.0).epsilon(1e-12));
    // log-midpoint of [4,16]
    CHECK(r.logS2[2] == doctest::Approx(2.0).epsilon(1e-12));

    CHECK_THROWS_AS(resample_to_scales(c, {0.5}), RangeError);
    CHECK_THROWS_AS(resample_to_scales(c, {17.0}), RangeError);
}

TEST_CASE("iid gaussian field statistics") {
    FieldSet fs;
    for (uint64_t r = 0; r < 4; ++r) fs.push_back(make_iid_gaussian_field(1 << 16, 100 + r));
    // S2(l) = 2 var = 2 for all l; flatness of a gaussian difference is 3
    for (int64_t l : {1, 4, 16, 64}) {
        CHECK(structure_function(fs, l, 2) == doctest::Approx(2.0).epsilon(0.03));
        double s2 = structure_function(fs, l, 2);
        double s4 = structure_function(fs, l, 4);
        CHECK(s4 / (s2 * s2) == doctest::Approx(3.0).epsilon(0.05));
    }
    // determinism
    CHECK(make_iid_gaussian_field(128, 7) == make_iid_gaussian_field(128, 7));
}

TEST_CASE("power-law field has the prescribed second-order exponent") {
    FieldSet fs;
    for (uint64_t r = 0; r < 8; ++r) fs.push_back(make_power_law_field(5.0 / 3.0, 1 << 17, r));
    // unit variance by construction
    double var = 0.0;
    for (double v : fs[0]) var += v * v;
    var /= double(fs[0].size());
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));

    ScaleSet scales = ScaleSet::log_spaced(8, 512, 12);
    EnsembleStats es = ensemble_statistics(fs, scales);
    StatCurve c{std::vector<double>(es.scales.begin(), es.scales.end()), es.logS2_mean,
                CurveKind::LogS2, {}};
    SlopeFit fit = fit_loglog_slope(c, 8.0, 512.0);
    CHECK(std::abs(fit.slope - 2.0 / 3.0) < 0.05);

    CHECK_THROWS_AS(make_power_law_field(5.0 / 3.0, 1000, 1), ParameterError);
    CHECK_THROWS_AS(make_power_law_field(-1.0, 1024, 1), ParameterError);
}
