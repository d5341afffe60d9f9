#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "turbstoch/mstats.hpp"
#include "turbstoch/refcurves.hpp"
#include "turbstoch/unet.hpp"

namespace turbstoch {

struct TrainConfig {
    uint64_t seed = 1;
    int64_t n_train = 32768;  // field length after the central trim
    int64_t pad = 8192;       // extra samples absorbed by the trim
    int64_t batch = 8;
    int64_t epochs = 2000;
    double alpha = 1.0;
    double beta = 0.1;
    int loss_scale_count = 25;      // log-spaced integer scales in [1, n_train/2]
    bool flatness_log_form = false;  // loss on log(F/3) instead of F
    int64_t checkpoint_every = 100;  // 0 disables intermediate checkpoints
    std::string precision = "double";

    void validate() const;
    ScaleSet loss_scales() const;
};

// Stepped schedule: 2e-3 below epoch 100, 1e-3 below 1000, 5e-4 afterwards.
double lr_schedule(int64_t epoch);

struct LossBreakdown {
    double total = 0.0;
    double s2 = 0.0;
    double skew = 0.0;
    double flat = 0.0;
    double kl = 0.0;
    bool guarded = false;  // an eps_stat guard activated on a degenerate batch
};

struct LossResult {
    Var total;
    LossBreakdown breakdown;
};

// Builds the training criterion from a train-mode forward output of shape
// (B, 1, n_train + pad): trims the increment field to the central n_train
// samples, integrates it, and sums squared curve mismatches plus the weighted
// KL term. reference must be sampled exactly on `scales`.
LossResult compute_loss(const Var& model_output, const ReferenceCurves& reference,
                        const ScaleSet& scales, int64_t n_train, double alpha, double beta,
                        bool flatness_log_form = false, const KlParams& kp = {});

struct EpochRecord {
    int64_t epoch = 0;
    double lr = 0.0;
    LossBreakdown loss;
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> records;
    void write_csv(const std::string& path) const;
};

struct TrainResult {
    UNetModel model;
    AdamState adam;
    TrainLog log;
};

// Full epoch loop: fresh seeded noise every epoch, train-mode forward,
// backward, Adam with the stepped schedule. reference may be on any grid
// covering [1, n_train/2]; it is resampled onto the loss scales.
// checkpoint_dir, when nonempty, receives ckpt_epoch_NNNN.nntb at the
// configured cadence plus final.nntb. on_epoch, when set, is called after
// every epoch (e.g. for progress printing).
TrainResult train(const TrainConfig& config, const ReferenceCurves& reference,
                  const std::string& checkpoint_dir = "",
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace turbstoch
