#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "turbstoch/errors.hpp"
#include "turbstoch/fieldgen.hpp"
#include "turbstoch/rng.hpp"

using namespace turbstoch;
namespace fs = std::filesystem;

namespace {

fs::path tmpdir() {
    fs::path d = fs::temp_directory_path() / "turbstoch_fieldgen_test";
    fs::create_directories(d);
    return d;
}

UNetModel trained_model(uint64_t seed) {
    UNetModel m = build_model(seed);
    Tensor3 noise(2, 1, 640);
    Rng rng(seed + 1000);
    rng.fill_normal(noise);
    forward(m, constant(noise), /*train=*/true);
    return m;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(s.data(), std::streamsize(s.size()));
}

}  // namespace

TEST_CASE("generated field has the requested length and is deterministic") {
    UNetModel m = trained_model(1);
    Field a = generate_field(m, 42, 2048);
    CHECK(a.size() == 2048);
    Field b = generate_field(m, 42, 2048);
    CHECK(a == b);
    Field c = generate_field(m, 43, 2048);
    CHECK(a != c);
    for (double v : a) CHECK(std::isfinite(v));
}

TEST_CASE("the field is the running sum of the trimmed increments") {
    UNetModel m = trained_model(2);
    const int64_t n = 2048;
    Field u = generate_field(m, 5, n);

    // reproduce the pipeline by hand
    Tensor3 noise(1, 1, n + kGenerationPad);
    Rng rng(5);
    rng.fill_normal(noise);
    Tensor3 incr = forward_eval(m, noise);
    int64_t trim = kGenerationPad / 2;
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        s += incr.at(0, 0, trim + i);
        CHECK(u[size_t(i)] == doctest::Approx(s).epsilon(1e-12));
    }
    // equivalently: increments at l=1 match the eval output interior
    for (int64_t i = 1; i < 100; ++i)
        CHECK(u[size_t(i)] - u[size_t(i - 1)] ==
              doctest::Approx(incr.at(0, 0, trim + i)).epsilon(1e-12));
}

TEST_CASE("untrained model cannot generate") {
    UNetModel m = build_model(3);
    CHECK_THROWS_AS(generate_field(m, 1, 2048), StateError);
}

TEST_CASE("bad lengths are rejected") {
    UNetModel m = trained_model(4);
    CHECK_THROWS_AS(generate_field(m, 1, 2049), ShapeError);  // 2049+8192 not /16
}

TEST_CASE("ensemble realizations are individually reproducible") {
    UNetModel m = trained_model(5);
    FieldEnsemble e = generate_ensemble(m, 99, 3, 2048);
    CHECK(e.realizations() == 3);
    CHECK(e.base_seed == 99);
    for (int64_t r = 0; r < 3; ++r) {
        Field f = generate_field(m, derive_seed(99, uint64_t(r)), 2048);
        CHECK(e.data[size_t(r)] == f);
    }
    CHECK(e.data[0] != e.data[1]);
    CHECK_THROWS_AS(generate_ensemble(m, 99, 0, 2048), ContractError);
}

TEST_CASE("field file round trip") {
    UNetModel m = trained_model(6);
    FieldEnsemble e = generate_ensemble(m, 7, 2, 2048);
    e.checkpoint_hash.fill(0xab);
    fs::path path = tmpdir() / "fields.nntf";
    write_fields(e, path.string());
    FieldEnsemble r = read_fields(path.string());
    CHECK(r.n == e.n);
    CHECK(r.base_seed == e.base_seed);
    CHECK(r.checkpoint_hash == e.checkpoint_hash);
    CHECK(r.data == e.data);
}

TEST_CASE("field file corruption raises distinct errors") {
    UNetModel m = trained_model(8);
    FieldEnsemble e = generate_ensemble(m, 7, 2, 2048);
    fs::path dir = tmpdir();
    fs::path good = dir / "good.nntf";
    write_fields(e, good.string());
    std::string bytes = slurp(good);

    SUBCASE("truncated payload") {
        spit(dir / "trunc.nntf", bytes.substr(0, bytes.size() - 16));
        CHECK_THROWS_WITH_AS(read_fields((dir / "trunc.nntf").string()),
                             doctest::Contains("truncated"), IoError);
    }
    SUBCASE("foreign endianness magic") {
        std::string b = bytes;
        b[0] = 'F';
        b[1] = 'T';
        b[2] = 'N';
        b[3] = 'N';
        spit(dir / "endian.nntf", b);
        CHECK_THROWS_WITH_AS(read_fields((dir / "endian.nntf").string()),
                             doctest::Contains("endian"), IoError);
    }
    SUBCASE("bad magic") {
        std::string b = bytes;
        b[0] = 'Z';
        spit(dir / "magic.nntf", b);
        CHECK_THROWS_WITH_AS(read_fields((dir / "magic.nntf").string()),
                             doctest::Contains("magic"), IoError);
    }
    SUBCASE("version mismatch") {
        std::string b = bytes;
        b[4] = char(7);
        spit(dir / "ver.nntf", b);
        CHECK_THROWS_WITH_AS(read_fields((dir / "ver.nntf").string()),
                             doctest::Contains("version"), IoError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_fields((dir / "nope.nntf").string()), IoError);
    }
}
