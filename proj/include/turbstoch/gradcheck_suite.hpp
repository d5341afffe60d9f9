#pragma once

#include <vector>

#include "turbstoch/gradcheck.hpp"

namespace turbstoch {

struct GradCheckCase {
    GradCheckReport report;
    double tolerance = 1e-4;
    bool passed() const { return report.max_rel_err < tolerance; }
};

// Runs grad_check over every differentiable primitive plus the full training
// criterion on a tiny model (n_train=256, batch 2). Tolerances: 1e-8 for
// linear ops, 1e-6 for batch norm, 1e-4 otherwise.
std::vector<GradCheckCase> run_gradcheck_suite(uint64_t seed = 42);

}  // namespace turbstoch
