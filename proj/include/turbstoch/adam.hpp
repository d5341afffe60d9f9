#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "turbstoch/errors.hpp"
#include "turbstoch/tape.hpp"

namespace turbstoch {

// Per-parameter Adam moments. Layout parallels the parameter list it was
// created for; step counter t increases by one per adam_step.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t t = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    explicit AdamState(const std::vector<Parameter*>& params, double b1 = 0.9, double b2 = 0.999,
                       double e = 1e-8)
        : beta1(b1), beta2(b2), eps(e) {
        for (const Parameter* p : params) {
            m.emplace_back(p->value.size(), 0.0);
            v.emplace_back(p->value.size(), 0.0);
        }
    }
    AdamState() = default;
};

// Standard Adam update with bias correction. Gradients are left untouched;
// the caller resets them between steps.
inline void adam_step(const std::vector<Parameter*>& params, AdamState& state, double lr) {
    if (state.m.size() != params.size())
        throw OptimizerError("AdamState does not match parameter list");
    state.t += 1;
    double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
    double bc2 = 1.0 - std::pow(state.beta2, double(state.t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        if (!p.trainable) continue;
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (size_t i = 0; i < p.value.size(); ++i) {
            double g = p.grad.data[i];
            if (!std::isfinite(g))
                throw OptimizerError("non-finite gradient in parameter '" + p.name + "'");
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace turbstoch
