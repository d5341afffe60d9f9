#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "turbstoch/refcurves.hpp"
#include "turbstoch/trainer.hpp"

namespace turbstoch {

// Resolved run configuration shared by all CLI subcommands. Mirrors the JSON
// document; unknown keys are rejected, flag overrides win over file values.
struct RunConfig {
    uint64_t seed = 1;
    int threads = 0;  // 0 = library default (single-threaded core)
    std::string out = "out";
    std::string precision = "double";

    TrainConfig trainer;

    struct Reference {
        std::string source = "synth";  // "synth" or "csv"
        std::string csv_path;
        ReferenceModelParams params;
    } reference;

    struct Generate {
        int64_t realizations = 256;
        int64_t n = 32768;
        uint64_t base_seed = 1234;
    } generate;

    struct Analyze {
        int scale_count = 40;  // log-spaced analysis scales in [1, n/2]
        std::vector<int64_t> pdf_scales = {2, 4, 8, 16, 64, 256, 1024, 4096, 10000};
        int pdf_bins = 201;
        double pdf_range = 10.0;
    } analyze;

    // Reference curves on an arbitrary positive grid, from the configured
    // source (parametric model or CSV).
    ReferenceCurves reference_curves(const std::vector<double>& scales) const;

    std::string to_json_pretty() const;
};

// Builds the config from an optional JSON file plus --set key=value overrides
// (dot-separated paths). Unknown keys, type mismatches, and invariant
// violations raise usage errors naming the key path.
RunConfig parse_config(const std::string& config_file,
                       const std::vector<std::string>& overrides);

}  // namespace turbstoch
