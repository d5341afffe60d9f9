#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "turbstoch/rng.hpp"
#include "turbstoch/tape.hpp"

namespace turbstoch {

struct GradCheckReport {
    std::string op;
    size_t n_checked = 0;
    double max_rel_err = 0.0;
    double mean_rel_err = 0.0;
};

// Compares reverse-mode gradients of a scalar loss against central finite
// differences. loss_fn must be a pure function of the parameter values (no
// running-stat updates, no fresh randomness). When the total coordinate count
// exceeds max_coords, a deterministic random subsample (>= 200 when available)
// is checked instead.
inline GradCheckReport grad_check(const std::string& name, std::vector<Parameter*> params,
                                  const std::function<Var(Tape&)>& loss_fn, double h = 1e-5,
                                  size_t max_coords = 400, uint64_t seed = 12345) {
    // analytic gradients
    for (Parameter* p : params) p->zero_grad();
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);

    struct Coord {
        size_t param, idx;
    };
    std::vector<Coord> coords;
    size_t total = 0;
    for (size_t pi = 0; pi < params.size(); ++pi) total += params[pi]->value.size();
    if (total <= max_coords) {
        for (size_t pi = 0; pi < params.size(); ++pi)
            for (size_t i = 0; i < params[pi]->value.size(); ++i) coords.push_back({pi, i});
    } else {
        size_t want = std::max<size_t>(200, max_coords);
        Rng rng(seed);
        for (size_t s = 0; s < want; ++s) {
            size_t flat = size_t(rng.uniform01() * double(total));
            flat = std::min(flat, total - 1);
            for (size_t pi = 0; pi < params.size(); ++pi) {
                if (flat < params[pi]->value.size()) {
                    coords.push_back({pi, flat});
                    break;
                }
                flat -= params[pi]->value.size();
            }
        }
    }

    GradCheckReport rep;
    rep.op = name;
    double sum_err = 0.0;
    // central differences cannot resolve derivatives below the cancellation
    // noise of the loss evaluation; when both sides sit under that floor the
    // coordinate's true gradient is (numerically) zero and the comparison
    // carries no information
    double noise_floor =
        4.0 * std::numeric_limits<double>::epsilon() * std::abs(loss.item()) / h;
    for (const Coord& c : coords) {
        Parameter& p = *params[c.param];
        double saved = p.value.data[c.idx];
        Tape t1;
        p.value.data[c.idx] = saved + h;
        double fp = loss_fn(t1).item();
        Tape t2;
        p.value.data[c.idx] = saved - h;
        double fm = loss_fn(t2).item();
        p.value.data[c.idx] = saved;

        double fd = (fp - fm) / (2.0 * h);
        double an = p.grad.data[c.idx];
        double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
        double err = std::abs(fd - an) / denom;
        if (std::abs(fd) < noise_floor && std::abs(an) < noise_floor) err = 0.0;
        sum_err += err;
        rep.max_rel_err = std::max(rep.max_rel_err, err);
        rep.n_checked += 1;
    }
    rep.mean_rel_err = rep.n_checked ? sum_err / double(rep.n_checked) : 0.0;
    return rep;
}

}  // namespace turbstoch
