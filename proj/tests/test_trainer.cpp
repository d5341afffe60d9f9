#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "turbstoch/errors.hpp"
#include "turbstoch/rng.hpp"
#include "turbstoch/trainer.hpp"

using namespace turbstoch;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.seed = 7;
    c.n_train = 512;
    c.pad = 128;  // (512+128) % 16 == 0
    c.batch = 2;
    c.epochs = 3;
    c.loss_scale_count = 10;
    c.checkpoint_every = 0;
    return c;
}

ReferenceModelParams tiny_ref_params() {
    ReferenceModelParams p;
    p.eta = 2.0;
    p.L = 128.0;
    return p;
}

ReferenceCurves tiny_reference(const TrainConfig& c) {
    return synth_reference(tiny_ref_params(), c.loss_scales());
}

Var toy_output(uint64_t seed, int64_t batch = 2, int64_t len = 640) {
    Tensor3 t(batch, 1, len);
    Rng rng(seed);
    rng.fill_normal(t);
    return constant(t);
}

}  // namespace

TEST_CASE("config validation") {
    TrainConfig c = tiny_config();
    c.validate();
    c.n_train = 513;  // 641 % 16 != 0
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = tiny_config();
    c.batch = 1;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = tiny_config();
    c.pad = 127;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = tiny_config();
    c.precision = "single";
    CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("single"), ContractError);
    c = tiny_config();
    c.loss_scale_count = 2;
    CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("learning rate schedule boundaries") {
    CHECK(lr_schedule(0) == 2e-3);
    CHECK(lr_schedule(50) == 2e-3);
    CHECK(lr_schedule(99) == 2e-3);
    CHECK(lr_schedule(100) == 1e-3);
    CHECK(lr_schedule(999) == 1e-3);
    CHECK(lr_schedule(1000) == 5e-4);
    CHECK(lr_schedule(1500) == 5e-4);
    CHECK(lr_schedule(100000) == 5e-4);
    CHECK_THROWS_AS(lr_schedule(-1), ContractError);
}

TEST_CASE("loss breakdown re-sums to the total") {
    TrainConfig c = tiny_config();
    ScaleSet scales = c.loss_scales();
    ReferenceCurves ref = tiny_reference(c);

    Var out = toy_output(1);
    for (auto [alpha, beta] : {std::pair{1.0, 0.1}, {0.0, 1.0}, {2.5, 0.0}}) {
        LossResult r = compute_loss(out, ref, scales, c.n_train, alpha, beta);
        double expect = alpha * (r.breakdown.s2 + r.breakdown.skew + r.breakdown.flat) +
                        beta * r.breakdown.kl;
        CHECK(r.breakdown.total == doctest::Approx(expect).epsilon(1e-12));
        CHECK(r.total.item() == doctest::Approx(r.breakdown.total).epsilon(1e-15));
    }
    // alpha=0, beta=1 isolates the KL term
    LossResult kl_only = compute_loss(out, ref, scales, c.n_train, 0.0, 1.0);
    CHECK(kl_only.breakdown.total == doctest::Approx(kl_only.breakdown.kl).epsilon(1e-12));
    // repeated evaluation is deterministic
    LossResult again = compute_loss(out, ref, scales, c.n_train, 0.0, 1.0);
    CHECK(again.breakdown.total == kl_only.breakdown.total);
}

TEST_CASE("loss rejects mismatched reference grids") {
    TrainConfig c = tiny_config();
    ScaleSet scales = c.loss_scales();
    ReferenceCurves ref = tiny_reference(c);
    ref.scales[0] += 1.0;
    CHECK_THROWS_AS(compute_loss(toy_output(2), ref, scales, c.n_train, 1.0, 0.1),
                    ContractError);
    ReferenceCurves short_ref = tiny_reference(c);
    short_ref.scales.pop_back();
    short_ref.logS2.pop_back();
    short_ref.skew.pop_back();
    short_ref.logF3.pop_back();
    CHECK_THROWS_AS(compute_loss(toy_output(2), short_ref, scales, c.n_train, 1.0, 0.1),
                    ContractError);
}

TEST_CASE("flatness log form changes only the flatness term") {
    TrainConfig c = tiny_config();
    ScaleSet scales = c.loss_scales();
    ReferenceCurves ref = tiny_reference(c);
    Var out = toy_output(3);
    LossResult raw = compute_loss(out, ref, scales, c.n_train, 1.0, 0.1, false);
    LossResult logf = compute_loss(out, ref, scales, c.n_train, 1.0, 0.1, true);
    CHECK(raw.breakdown.s2 == doctest::Approx(logf.breakdown.s2).epsilon(1e-12));
    CHECK(raw.breakdown.skew == doctest::Approx(logf.breakdown.skew).epsilon(1e-12));
    CHECK(raw.breakdown.kl == doctest::Approx(logf.breakdown.kl).epsilon(1e-12));
    CHECK(raw.breakdown.flat != logf.breakdown.flat);
}

TEST_CASE("zero epochs returns the initialized model and an empty log") {
    TrainConfig c = tiny_config();
    c.epochs = 0;
    TrainResult r = train(c, tiny_reference(c));
    CHECK(r.log.records.empty());
    UNetModel fresh = build_model(c.seed);
    auto pa = r.model.parameters();
    auto pb = fresh.parameters();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);
}

TEST_CASE("training is deterministic") {
    TrainConfig c = tiny_config();
    TrainResult a = train(c, tiny_reference(c));
    TrainResult b = train(c, tiny_reference(c));
    auto pa = a.model.parameters();
    auto pb = b.model.parameters();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);
    REQUIRE(a.log.records.size() == b.log.records.size());
    for (size_t i = 0; i < a.log.records.size(); ++i)
        CHECK(a.log.records[i].loss.total == b.log.records[i].loss.total);
    CHECK(a.model.trained());
}

TEST_CASE("a dense reference grid is resampled onto the loss scales") {
    TrainConfig c = tiny_config();
    c.epochs = 1;
    // 200-point dense grid covering [1, n_train/2]
    std::vector<double> grid;
    for (int i = 0; i < 200; ++i)
        grid.push_back(std::pow(double(c.n_train) / 2.0, double(i) / 199.0));
    ReferenceCurves dense = synth_reference(tiny_ref_params(), grid);
    ReferenceCurves exact = tiny_reference(c);
    TrainResult a = train(c, dense);
    TrainResult b = train(c, exact);
    // interpolation of a smooth model on a dense grid is nearly exact
    CHECK(a.log.records[0].loss.total ==
          doctest::Approx(b.log.records[0].loss.total).epsilon(1e-4));
}

TEST_CASE("short training run reduces the loss") {
    TrainConfig c = tiny_config();
    c.epochs = 40;
    TrainResult r = train(c, tiny_reference(c));
    REQUIRE(r.log.records.size() == 40);
    double first = r.log.records.front().loss.total;
    double best = first;
    for (const auto& rec : r.log.records) best = std::min(best, rec.loss.total);
    CHECK(best < 0.7 * first);
    for (const auto& rec : r.log.records) CHECK(std::isfinite(rec.loss.total));
}

TEST_CASE("checkpoint cadence writes the expected files") {
    fs::path dir = fs::temp_directory_path() / "turbstoch_trainer_test" / "ckpts";
    fs::remove_all(dir);
    TrainConfig c = tiny_config();
    c.epochs = 4;
    c.checkpoint_every = 2;
    train(c, tiny_reference(c), dir.string());
    CHECK(fs::exists(dir / "ckpt_epoch_00002.nntb"));
    CHECK(fs::exists(dir / "ckpt_epoch_00004.nntb"));
    CHECK(fs::exists(dir / "final.nntb"));
    CHECK_FALSE(fs::exists(dir / "ckpt_epoch_00001.nntb"));
    LoadedCheckpoint lc = load_checkpoint((dir / "final.nntb").string());
    REQUIRE(lc.adam.has_value());
    CHECK(lc.adam->t == 4);
}

TEST_CASE("train log csv round trips through the expected header") {
    fs::path path = fs::temp_directory_path() / "turbstoch_trainer_test" / "log.csv";
    fs::create_directories(path.parent_path());
    TrainConfig c = tiny_config();
    c.epochs = 2;
    TrainResult r = train(c, tiny_reference(c));
    r.log.write_csv(path.string());
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "epoch,lr,loss_total,loss_s2,loss_skew,loss_flat,loss_kl,wall_seconds");
    int rows = 0;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
}
