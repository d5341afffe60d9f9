#include "turbstoch/gradcheck_suite.hpp"

#include <cmath>

#include "turbstoch/mstats.hpp"
#include "turbstoch/ops.hpp"
#include "turbstoch/rng.hpp"
#include "turbstoch/trainer.hpp"
#include "turbstoch/unet.hpp"

namespace turbstoch {

namespace {

Tensor3 random_tensor(int64_t b, int64_t c, int64_t l, Rng& rng, double lo = -1.0,
                      double hi = 1.0, double away_from_zero = 0.0) {
    Tensor3 t(b, c, l);
    for (double& v : t.data) {
        do {
            v = rng.uniform(lo, hi);
        } while (std::abs(v) < away_from_zero);
    }
    return t;
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(uint64_t seed) {
    std::vector<GradCheckCase> cases;
    Rng rng(seed);

    auto check = [&](const std::string& name, std::vector<Parameter*> params,
                     const std::function<Var(Tape&)>& fn, double tol, double h = 1e-5) {
        GradCheckCase c;
        c.report = grad_check(name, std::move(params), fn, h);
        c.tolerance = tol;
        cases.push_back(c);
    };

    // pointwise chain: mean(a*b + a/b) exercises mul/div/add
    {
        auto a = Parameter("a", random_tensor(2, 1, 16, rng));
        auto b = Parameter("b", random_tensor(2, 1, 16, rng, 0.5, 2.0));
        check("pointwise_mul_div", {&a, &b}, [&](Tape& t) {
            Var va = t.leaf(a), vb = t.leaf(b);
            return mean_all(add(mul(va, vb), div(va, vb)));
        }, 1e-6);
    }
    // log
    {
        auto a = Parameter("a", random_tensor(1, 1, 32, rng, 0.2, 3.0));
        check("log", {&a}, [&](Tape& t) { return mean_all(log_(t.leaf(a))); }, 1e-6);
    }
    // powers
    {
        auto a = Parameter("a", random_tensor(1, 1, 32, rng, -2.0, 2.0, 0.05));
        check("pow_int3", {&a}, [&](Tape& t) { return mean_all(pow_int(t.leaf(a), 3)); }, 1e-6);
    }
    {
        auto a = Parameter("a", random_tensor(1, 1, 32, rng, 0.2, 3.0));
        check("pow_real1.5", {&a},
              [&](Tape& t) { return mean_all(pow_real(t.leaf(a), 1.5)); }, 1e-6);
    }
    // relu (inputs away from the kink)
    {
        auto a = Parameter("a", random_tensor(2, 2, 16, rng, -1.0, 1.0, 0.01));
        check("relu", {&a}, [&](Tape& t) { return mean_all(pow_int(relu(t.leaf(a)), 2)); },
              1e-6);
    }
    // linear ops through a quadratic readout; central differences are exact
    // for quadratics, so these must hit the tight tolerance
    {
        auto x = Parameter("x", random_tensor(2, 3, 20, rng));
        auto w = Parameter("w", random_tensor(4, 3, 4, rng));
        auto b = Parameter("b", random_tensor(1, 4, 1, rng));
        check("conv1d", {&x, &w, &b}, [&](Tape& t) {
            return mean_all(pow_int(conv1d(t.leaf(x), t.leaf(w), t.leaf(b)), 2));
        }, 1e-8, 1e-4);
    }
    {
        auto x = Parameter("x", random_tensor(2, 3, 20, rng));
        auto w = Parameter("w", random_tensor(3, 4, 4, rng));
        auto b = Parameter("b", random_tensor(1, 4, 1, rng));
        check("conv_transpose1d", {&x, &w, &b}, [&](Tape& t) {
            return mean_all(pow_int(conv_transpose1d(t.leaf(x), t.leaf(w), t.leaf(b)), 2));
        }, 1e-8, 1e-4);
    }
    {
        auto x = Parameter("x", random_tensor(2, 2, 16, rng));
        check("avg_pool1d", {&x},
              [&](Tape& t) { return mean_all(pow_int(avg_pool2(t.leaf(x)), 2)); }, 1e-8, 1e-4);
    }
    {
        auto x = Parameter("x", random_tensor(2, 2, 16, rng));
        check("upsample1d", {&x},
              [&](Tape& t) { return mean_all(pow_int(upsample2(t.leaf(x)), 2)); }, 1e-8, 1e-4);
    }
    {
        auto x = Parameter("x", random_tensor(1, 1, 16, rng));
        check("cumsum", {&x},
              [&](Tape& t) { return mean_all(pow_int(cumsum_x(t.leaf(x)), 2)); }, 1e-8, 1e-4);
    }
    // batch norm, train mode, frozen running stats
    {
        auto x = Parameter("x", random_tensor(3, 2, 12, rng));
        auto g = Parameter("gamma", random_tensor(1, 2, 1, rng, 0.5, 1.5));
        auto be = Parameter("beta", random_tensor(1, 2, 1, rng));
        BatchNormState bn(2);
        check("batch_norm1d_train", {&x, &g, &be}, [&](Tape& t) {
            return mean_all(pow_int(
                batch_norm1d(t.leaf(x), t.leaf(g), t.leaf(be), bn, true, false), 3));
        }, 1e-6);
    }
    // soft histogram + KL
    {
        auto x = Parameter("x", random_tensor(1, 1, 64, rng, -3.0, 3.0));
        auto q = gaussian_bin_masses(40, 4.0);
        check("soft_histogram_kl", {&x}, [&](Tape& t) {
            Var p = soft_histogram(t.leaf(x), 40, 4.0, 0.1);
            return kl_divergence_var(p, q, 1e-12);
        }, 1e-4);
    }
    // statistics path
    {
        auto x = Parameter("x", random_tensor(2, 1, 64, rng));
        check("structure_stats", {&x}, [&](Tape& t) {
            Var v = t.leaf(x);
            Var s = add(skewness_var(v, 3), flatness_var(v, 5));
            return add(s, log_(structure_function_var(v, 2, 2), kEpsStat));
        }, 1e-4);
    }
    {
        auto x = Parameter("x", random_tensor(2, 1, 128, rng));
        check("kl_to_standard_gaussian", {&x},
              [&](Tape& t) { return kl_to_standard_gaussian_var(t.leaf(x)); }, 1e-4);
    }

    // full training criterion on a tiny model
    {
        UNetModel model = build_model(seed + 1);
        const int64_t n_train = 256, pad = 64, batch = 2;
        Tensor3 noise(batch, 1, n_train + pad);
        Rng nrng(seed + 2);
        nrng.fill_normal(noise);
        ScaleSet scales = ScaleSet::log_spaced(1, n_train / 2, 12);
        ReferenceModelParams rp;
        rp.eta = 2.0;
        rp.L = 64.0;
        ReferenceCurves ref = synth_reference(rp, scales);

        // run one train-mode pass so eval-style stats exist, then freeze
        {
            Var warm = constant(noise);
            forward(model, warm, true);
        }
        auto params = model.parameters();
        GradCheckCase c;
        c.report = grad_check(
            "full_loss", params,
            [&](Tape& t) {
                Var in = constant(noise);
                Var out = forward(model, in, /*train=*/true, &t, /*update_running=*/false);
                return compute_loss(out, ref, scales, n_train, 1.0, 0.1).total;
            },
            // small h keeps finite differences from straddling relu kinks
            // inside the network; the roundoff guard in grad_check absorbs
            // the resulting cancellation noise on near-zero gradients
            1e-6, 400);
        c.tolerance = 1e-4;
        cases.push_back(c);
    }
    return cases;
}

}  // namespace turbstoch
