#include "turbstoch/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "turbstoch/errors.hpp"
#include "turbstoch/rng.hpp"

namespace turbstoch {

void TrainConfig::validate() const {
    if ((n_train + pad) % 16 != 0)
        throw ContractError("n_train + pad must be divisible by 16, got " +
                            std::to_string(n_train + pad));
    if (n_train < 32) throw ContractError("n_train too small");
    if (pad < 0) throw ContractError("pad must be >= 0");
    if (pad % 2 != 0) throw ContractError("pad must be even (symmetric trim)");
    if (batch < 2) throw ContractError("batch must be >= 2 (batch norm)");
    if (epochs < 0) throw ContractError("epochs must be >= 0");
    if (alpha < 0.0 || beta < 0.0) throw ContractError("alpha and beta must be >= 0");
    if (loss_scale_count < 3) throw ContractError("need >= 3 loss scales");
    if (precision != "double")
        throw ContractError("precision '" + precision + "' unsupported (this build is double)");
}

ScaleSet TrainConfig::loss_scales() const {
    return ScaleSet::log_spaced(1, n_train / 2, loss_scale_count);
}

double lr_schedule(int64_t epoch) {
    if (epoch < 0) throw ContractError("negative epoch");
    if (epoch < 100) return 2e-3;
    if (epoch < 1000) return 1e-3;
    return 5e-4;  // 1000 <= epoch < 2000 and any extended run
}

LossResult compute_loss(const Var& model_output, const ReferenceCurves& reference,
                        const ScaleSet& scales, int64_t n_train, double alpha, double beta,
                        bool flatness_log_form, const KlParams& kp) {
    const Tensor3& out = model_output.v();
    if (out.length < n_train) throw ShapeError("model output shorter than n_train");
    if (reference.scales.size() != scales.size())
        throw ContractError("reference not sampled on the loss scales");
    for (size_t i = 0; i < scales.size(); ++i)
        if (std::llround(reference.scales[i]) != scales.scales[i])
            throw ContractError("reference scale grid mismatch");

    int64_t start = (out.length - n_train) / 2;
    Var trimmed = slice_x(model_output, start, n_train);
    Var u = cumsum_x(trimmed);

    Var loss_s2 = constant(0.0), loss_skew = constant(0.0), loss_flat = constant(0.0);
    bool guarded = false;
    for (size_t i = 0; i < scales.size(); ++i) {
        int64_t l = scales.scales[i];
        Var d = increments_var(u, l);
        Var s2 = mean_all(pow_int(d, 2));
        Var s3 = mean_all(pow_int(d, 3));
        Var s4 = mean_all(pow_int(d, 4));
        if (s2.item() <= kEpsStat) guarded = true;

        Var log_s2 = log_(s2, kEpsStat);
        Var skew = div(s3, pow_real(add_scalar(s2, kEpsStat), 1.5));
        Var flat = div(s4, pow_int(add_scalar(s2, kEpsStat), 2));

        loss_s2 = add(loss_s2, pow_int(add_scalar(neg(log_s2), reference.logS2[i]), 2));
        loss_skew = add(loss_skew, pow_int(add_scalar(neg(skew), reference.skew[i]), 2));
        if (flatness_log_form) {
            Var log_f3 = log_(mul_scalar(flat, 1.0 / 3.0), kEpsStat);
            loss_flat = add(loss_flat, pow_int(add_scalar(neg(log_f3), reference.logF3[i]), 2));
        } else {
            double flat_ref = 3.0 * std::exp(reference.logF3[i]);
            loss_flat = add(loss_flat, pow_int(add_scalar(neg(flat), flat_ref), 2));
        }
    }
    Var loss_kl = kl_to_standard_gaussian_var(u, kp, /*guard=*/true);

    Var total = add(mul_scalar(add(add(loss_s2, loss_skew), loss_flat), alpha),
                    mul_scalar(loss_kl, beta));

    LossResult r;
    r.total = total;
    r.breakdown.total = total.item();
    r.breakdown.s2 = loss_s2.item();
    r.breakdown.skew = loss_skew.item();
    r.breakdown.flat = loss_flat.item();
    r.breakdown.kl = loss_kl.item();
    r.breakdown.guarded = guarded;
    return r;
}

void TrainLog::write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "epoch,lr,loss_total,loss_s2,loss_skew,loss_flat,loss_kl,wall_seconds\n";
    f.precision(12);
    for (const auto& r : records)
        f << r.epoch << ',' << r.lr << ',' << r.loss.total << ',' << r.loss.s2 << ','
          << r.loss.skew << ',' << r.loss.flat << ',' << r.loss.kl << ',' << r.wall_seconds
          << '\n';
    if (!f) throw IoError("write failure on '" + path + "'");
}

TrainResult train(const TrainConfig& config, const ReferenceCurves& reference,
                  const std::string& checkpoint_dir,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
    config.validate();
    ScaleSet scales = config.loss_scales();
    std::vector<double> target(scales.scales.begin(), scales.scales.end());

    // exact-grid references pass through; anything else is interpolated
    bool exact = reference.scales.size() == target.size();
    if (exact)
        for (size_t i = 0; i < target.size(); ++i)
            if (reference.scales[i] != target[i]) exact = false;
    ReferenceCurves ref = exact ? reference : resample_to_scales(reference, target);

    TrainResult res;
    res.model = build_model(config.seed);
    auto params = res.model.parameters();
    res.adam = AdamState(params);
    Rng noise_rng(derive_seed(config.seed, 0));

    namespace fs = std::filesystem;
    if (!checkpoint_dir.empty()) fs::create_directories(checkpoint_dir);

    int64_t in_len = config.n_train + config.pad;
    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        Tensor3 noise(config.batch, 1, in_len);
        noise_rng.fill_normal(noise);

        Tape tape;
        Var input = constant(std::move(noise));
        Var out = forward(res.model, input, /*train=*/true, &tape);
        LossResult loss = compute_loss(out, ref, scales, config.n_train, config.alpha,
                                       config.beta, config.flatness_log_form);
        if (!std::isfinite(loss.breakdown.total)) {
            if (!checkpoint_dir.empty())
                save_checkpoint(res.model, &res.adam,
                                (fs::path(checkpoint_dir) / "diagnostic.nntb").string());
            throw OptimizerError("non-finite loss at epoch " + std::to_string(epoch) +
                                 (checkpoint_dir.empty() ? "" : "; diagnostic checkpoint saved"));
        }
        for (Parameter* p : params) p->zero_grad();
        tape.backward(loss.total);
        double lr = lr_schedule(epoch);
        adam_step(params, res.adam, lr);
        tape.reset();

        auto t1 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.loss = loss.breakdown;
        rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        res.log.records.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (!checkpoint_dir.empty() && config.checkpoint_every > 0 &&
            (epoch + 1) % config.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "ckpt_epoch_%05lld.nntb",
                          static_cast<long long>(epoch + 1));
            save_checkpoint(res.model, &res.adam, (fs::path(checkpoint_dir) / name).string());
        }
    }
    // the EMA running stats lag the final weights; refresh them with frozen
    // weights so eval-mode generation matches train-mode statistics
    if (config.epochs > 0) refresh_bn_stats(res.model, config.batch, in_len, noise_rng);
    if (!checkpoint_dir.empty())
        save_checkpoint(res.model, &res.adam, (fs::path(checkpoint_dir) / "final.nntb").string());
    return res;
}

}  // namespace turbstoch
