#pragma once

#include <cstdint>
#include <string>

#include "turbstoch/hash.hpp"
#include "turbstoch/mstats.hpp"
#include "turbstoch/unet.hpp"

namespace turbstoch {

inline constexpr int64_t kGenerationPad = 8192;

struct FieldEnsemble {
    int64_t n = 0;
    double sampling_distance = 1.0;
    FieldSet data;
    uint64_t base_seed = 0;
    Sha256Digest checkpoint_hash{};

    int64_t realizations() const { return int64_t(data.size()); }
};

// Draws standard-normal noise of length n + 8192, runs an eval-mode forward,
// trims 4096 increments from each border, and integrates. Deterministic in
// (model parameters, seed). Requires trained batch-norm running stats.
Field generate_field(UNetModel& model, uint64_t seed, int64_t n);

// Realization r uses derive_seed(base_seed, r); entries are independent and
// reproducible individually.
FieldEnsemble generate_ensemble(UNetModel& model, uint64_t base_seed, int64_t realizations,
                                int64_t n, const Sha256Digest& checkpoint_hash = {});

// Little-endian binary: magic "NNTF", version, R, N, dtype flag, base seed,
// checkpoint hash, then R*N float64 values.
void write_fields(const FieldEnsemble& ensemble, const std::string& path);
FieldEnsemble read_fields(const std::string& path);

}  // namespace turbstoch
