#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "turbstoch/adam.hpp"
#include "turbstoch/hash.hpp"
#include "turbstoch/ops.hpp"
#include "turbstoch/rng.hpp"
#include "turbstoch/tape.hpp"

namespace turbstoch {

struct ConvLayerSpec {
    int64_t in_ch = 0;
    int64_t out_ch = 0;
    int64_t kernel = 0;
    bool transpose = false;
};

// Architecture description: 4 encoder blocks (conv+BN+ReLU then avg-pool x2),
// a conv/transpose-conv bridge, 4 decoder blocks (upsample x2, additive skip,
// tconv+BN, ReLU except on the last block). Skips connect each encoder
// pre-pool activation to the decoder activation of identical (channels, length).
struct ModelSpec {
    std::vector<ConvLayerSpec> encoder;
    ConvLayerSpec bridge_conv;
    ConvLayerSpec bridge_tconv;
    std::vector<ConvLayerSpec> decoder;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    static ModelSpec default_spec();

    // 1,16,32,64,128,256,128,64,32,16,1
    std::vector<int64_t> channel_trace() const;
    int64_t pool_stages() const { return int64_t(encoder.size()); }
    int64_t length_divisor() const { return int64_t(1) << pool_stages(); }

    // canonical JSON used both for persistence and for the spec hash
    std::string to_json() const;
    static ModelSpec from_json(const std::string& s);
    Sha256Digest hash() const;
};

struct ConvBlock {
    ConvLayerSpec spec;
    Parameter weights;  // conv: (C_out, C_in, k); tconv: (C_in, C_out, k)
    Parameter bias;     // (1, C_out, 1)
    Parameter gamma;    // (1, C_out, 1)
    Parameter beta;     // (1, C_out, 1)
    BatchNormState bn;
    bool relu_after = true;
};

struct UNetModel {
    ModelSpec spec;
    std::vector<ConvBlock> blocks;  // enc0..3, bridge conv, bridge tconv, dec0..3
    uint64_t seed = 0;
    uint8_t precision_flag = 0;  // 0 = double

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    int64_t parameter_count() const;
    bool trained() const;  // every BN has seen at least one train-mode pass
};

// Deterministic in seed: fan-in-scaled uniform conv weights (ReLU gain),
// zero biases, BN gamma=1 beta=0, empty running stats.
UNetModel build_model(uint64_t seed, uint8_t precision_flag = 0);

// Forward pass. Input must be (B, 1, L) with L divisible by 16. When tape is
// non-null, parameters are registered as leaves and the pass is recorded.
// Train mode uses batch statistics (and updates running stats unless
// update_running is false); eval mode requires previously stored stats.
Var forward(UNetModel& model, const Var& input, bool train, Tape* tape = nullptr,
            bool update_running = true);

// Convenience wrapper: plain eval-mode forward on a raw tensor.
Tensor3 forward_eval(UNetModel& model, const Tensor3& input);

// Re-estimate BN running statistics with frozen weights: discard the stored
// stats and accumulate fresh train-mode passes on noise drawn from rng. The
// EMA kept during training lags the evolving weights and the staleness
// compounds layer by layer, so eval-mode output can drift far from train-mode
// behavior; a frozen-weight refresh restores the parity.
void refresh_bn_stats(UNetModel& model, int64_t batch, int64_t length, Rng& rng,
                      int passes = 8);

// Little-endian binary container: magic "NNTB", version, spec hash, seed,
// precision flag, parameter count, then length-prefixed named sections.
void save_checkpoint(const UNetModel& model, const AdamState* adam, const std::string& path);

struct LoadedCheckpoint {
    UNetModel model;
    std::optional<AdamState> adam;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// SHA-256 of a file's bytes (checkpoint provenance for generated ensembles).
Sha256Digest sha256_file(const std::string& path);

}  // namespace turbstoch
