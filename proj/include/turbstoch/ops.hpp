#pragma once

#include <vector>

#include "turbstoch/tape.hpp"

namespace turbstoch {

// Per-channel running statistics of a batch-norm layer. Updated by
// batch_norm1d in train mode, consumed in eval mode.
struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    bool initialized = false;

    explicit BatchNormState(int64_t channels = 0)
        : running_mean(size_t(channels), 0.0), running_var(size_t(channels), 1.0) {}
};

// ---- pointwise / reduction ----
// Binary ops broadcast when one side is a scalar tensor (1,1,1).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
// x^p for integer p >= 1 (valid on negative values).
Var pow_int(const Var& a, int p);
// x^p for real p; requires strictly positive values.
Var pow_real(const Var& a, double p);
// Natural log. With eps > 0, computes log(max(x, eps)) (clamped coordinates get
// zero gradient); with eps == 0, values <= 0 raise a domain error.
Var log_(const Var& a, double eps = 0.0);
Var mean_all(const Var& a);
Var sum_all(const Var& a);
Var relu(const Var& a);

// ---- structural ----
Var slice_x(const Var& a, int64_t start, int64_t len);
Var cumsum_x(const Var& a);
Var avg_pool2(const Var& a);
Var upsample2(const Var& a);

// ---- convolutions ----
// weights shape (C_out, C_in, k) stored as Tensor3(C_out, C_in, k); bias (1, C_out, 1).
// Stride 1, "same" zero padding: pad_left = (k-1)/2, pad_right = k/2.
Var conv1d(const Var& x, const Var& weights, const Var& bias);
// Spatial adjoint of conv1d. weights shape (C_in, C_out, k); bias (1, C_out, 1).
Var conv_transpose1d(const Var& x, const Var& weights, const Var& bias);

// ---- batch normalization ----
// train: normalize per channel over (batch, x), update running stats unless
// update_running is false. eval: normalize with running stats.
Var batch_norm1d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                 bool train, bool update_running = true, double eps = 1e-5,
                 double momentum = 0.1);

// ---- statistical primitives ----
// Gaussian-kernel soft assignment of all values of x to nbins uniform bins on
// [-range, range], normalized to sum 1. Output shape (1, 1, nbins).
Var soft_histogram(const Var& x, int nbins, double range, double bandwidth);

// KL(p || q) with q floored at eps_floor and 0*log0 = 0; differentiable in p.
Var kl_divergence_var(const Var& p, const std::vector<double>& q, double eps_floor);

// Plain (non-differentiable) KL between two probability vectors.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     double eps_floor);

// Standard Gaussian probability mass integrated over the same uniform bins the
// soft histogram uses.
std::vector<double> gaussian_bin_masses(int nbins, double range);

}  // namespace turbstoch
