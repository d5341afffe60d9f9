// Command-line surface: synthesize reference curves, train, generate field
// ensembles, analyze them into figure-ready CSVs, and run the gradient
// validation harness.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "turbstoch/config.hpp"
#include "turbstoch/errors.hpp"
#include "turbstoch/fieldgen.hpp"
#include "turbstoch/gradcheck_suite.hpp"
#include "turbstoch/hash.hpp"
#include "turbstoch/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace turbstoch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

struct CommonArgs {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string seed;
    std::string out;
    int threads = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_file, "JSON config file");
    cmd->add_option("--set", args.overrides, "override a config key, e.g. trainer.batch=4");
    cmd->add_option("--seed", args.seed, "override the base seed");
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--threads", args.threads, "worker cap (env TURBSTOCH_THREADS as fallback)");
}

RunConfig resolve(const CommonArgs& args) {
    std::vector<std::string> overrides = args.overrides;
    if (!args.seed.empty()) overrides.push_back("seed=" + args.seed);
    if (!args.out.empty()) overrides.push_back("out=" + args.out);
    if (args.threads >= 0) {
        overrides.push_back("threads=" + std::to_string(args.threads));
    } else if (const char* env = std::getenv("TURBSTOCH_THREADS")) {
        overrides.push_back("threads=" + std::string(env));
    }
    RunConfig cfg = parse_config(args.config_file, overrides);
    fs::create_directories(cfg.out);
    std::ofstream echo(fs::path(cfg.out) / "config.resolved.json");
    echo << cfg.to_json_pretty();
    return cfg;
}

std::vector<double> dense_log_grid(double lo, double hi, int count) {
    std::vector<double> g;
    for (int i = 0; i < count; ++i) {
        double t = double(i) / double(count - 1);
        g.push_back(lo * std::pow(hi / lo, t));
    }
    return g;
}

int cmd_make_ref(const RunConfig& cfg) {
    auto grid = dense_log_grid(1.0, double(cfg.trainer.n_train) / 2.0, 200);
    ReferenceCurves curves = cfg.reference_curves(grid);
    std::string path = (fs::path(cfg.out) / "reference.csv").string();
    write_reference_csv(curves, path);
    std::cout << "wrote " << path << " (" << curves.scales.size() << " scales)\n";
    return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
    TrainConfig tc = cfg.trainer;
    tc.seed = cfg.seed;
    ScaleSet scales = tc.loss_scales();
    std::vector<double> grid(scales.scales.begin(), scales.scales.end());
    ReferenceCurves ref = cfg.reference_curves(grid);

    std::string ckpt_dir = (fs::path(cfg.out) / "checkpoints").string();
    int64_t print_every = std::max<int64_t>(1, tc.epochs / 100);
    TrainResult res = train(tc, ref, ckpt_dir, [&](const EpochRecord& r) {
        if (r.epoch % print_every == 0 || r.epoch + 1 == tc.epochs)
            std::cout << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.loss.total
                      << " (S2 " << r.loss.s2 << ", skew " << r.loss.skew << ", flat "
                      << r.loss.flat << ", KL " << r.loss.kl << ")\n";
    });
    res.log.write_csv((fs::path(cfg.out) / "trainlog.csv").string());
    std::string model_path = (fs::path(cfg.out) / "model.nntb").string();
    save_checkpoint(res.model, &res.adam, model_path);
    std::cout << "wrote " << model_path << "\n";
    return kExitOk;
}

int cmd_generate(const RunConfig& cfg, const std::string& checkpoint_arg) {
    std::string ckpt = checkpoint_arg.empty()
                           ? (fs::path(cfg.out) / "model.nntb").string()
                           : checkpoint_arg;
    LoadedCheckpoint lc = load_checkpoint(ckpt);
    Sha256Digest hash = sha256_file(ckpt);
    FieldEnsemble e = generate_ensemble(lc.model, cfg.generate.base_seed,
                                        cfg.generate.realizations, cfg.generate.n, hash);
    std::string path = (fs::path(cfg.out) / "fields.nntf").string();
    write_fields(e, path);
    std::cout << "wrote " << path << " (" << e.realizations() << " x " << e.n << ")\n";
    return kExitOk;
}

int cmd_analyze(const RunConfig& cfg, const std::string& fields_arg) {
    std::string fpath =
        fields_arg.empty() ? (fs::path(cfg.out) / "fields.nntf").string() : fields_arg;
    FieldEnsemble e = read_fields(fpath);

    ScaleSet scales = ScaleSet::log_spaced(1, e.n / 2, cfg.analyze.scale_count);
    EnsembleStats stats = ensemble_statistics(e.data, scales);

    std::string stats_path = (fs::path(cfg.out) / "stats.csv").string();
    {
        std::ofstream f(stats_path, std::ios::trunc);
        f << "scale,logS2_mean,logS2_std,skew_mean,skew_std,logF3_mean,logF3_std\n";
        f.precision(12);
        for (size_t i = 0; i < stats.scales.size(); ++i)
            f << stats.scales[i] << ',' << stats.logS2_mean[i] << ',' << stats.logS2_std[i]
              << ',' << stats.skew_mean[i] << ',' << stats.skew_std[i] << ','
              << stats.logF3_mean[i] << ',' << stats.logF3_std[i] << '\n';
    }

    std::string pdf_path = (fs::path(cfg.out) / "pdfs.csv").string();
    {
        std::ofstream f(pdf_path, std::ios::trunc);
        f << "scale,bin_center,log_density\n";
        f.precision(12);
        for (int64_t l : cfg.analyze.pdf_scales) {
            if (l >= e.n) continue;
            IncrementPdf pdf =
                increment_pdf(e.data, l, cfg.analyze.pdf_bins, cfg.analyze.pdf_range);
            for (int j = 0; j < pdf.bins; ++j)
                f << l << ',' << pdf.bin_centers[j] << ',' << pdf.log_density[j] << '\n';
        }
    }

    // slope-fit report; windows derived from the configured reference scales
    double eta = cfg.reference.params.eta, L = cfg.reference.params.L;
    StatCurve log_s2{std::vector<double>(stats.scales.begin(), stats.scales.end()),
                     stats.logS2_mean, CurveKind::LogS2, stats.logS2_std};
    StatCurve log_f3{log_s2.scales, stats.logF3_mean, CurveKind::LogF3, stats.logF3_std};

    json rep;
    rep["fields_file"] = fpath;
    rep["realizations"] = e.realizations();
    rep["n"] = e.n;
    rep["base_seed"] = e.base_seed;
    rep["checkpoint_hash"] = hex_digest(e.checkpoint_hash);
    auto try_fit = [&](const StatCurve& c, double lo, double hi, const char* key) {
        try {
            SlopeFit fit = fit_loglog_slope(c, lo, hi);
            rep[key] = {{"slope", fit.slope}, {"intercept", fit.intercept},
                        {"rms_residual", fit.rms_residual}, {"window", {lo, hi}}};
        } catch (const FitError& err) {
            rep[key] = {{"error", err.what()}, {"window", {lo, hi}}};
        }
    };
    try_fit(log_s2, 20.0 * eta, L / 6.0, "zeta2_inertial");
    try_fit(log_s2, 1.0, eta, "s2_dissipative");
    try_fit(log_f3, 8.0 * eta, L / 6.0, "flatness_inertial");
    if (2.0 * L < double(e.n) / 2.0)
        try_fit(log_s2, 2.0 * L, std::min(8.0 * L, double(e.n) / 2.0), "s2_plateau");

    {
        double mean_skew = 0.0;
        int cnt = 0;
        for (size_t i = 0; i < stats.scales.size(); ++i) {
            double l = double(stats.scales[i]);
            if (l >= 20.0 * eta && l <= L / 6.0) {
                mean_skew += stats.skew_mean[i];
                ++cnt;
            }
        }
        if (cnt > 0) rep["skewness_inertial_mean"] = mean_skew / cnt;
    }
    {
        // flatness of increments at the scale closest to 2L
        int64_t target = int64_t(std::llround(2.0 * L));
        int64_t best = stats.scales.front();
        for (int64_t l : stats.scales)
            if (std::abs(std::log(double(l) / double(target))) <
                std::abs(std::log(double(best) / double(target))))
                best = l;
        double s2 = structure_function(e.data, best, 2);
        double s4 = structure_function(e.data, best, 4);
        rep["large_scale_flatness"] = {{"scale", best}, {"value", s4 / (s2 * s2)}};
    }
    rep["kl_u"] = kl_to_standard_gaussian(e.data);

    std::string rep_path = (fs::path(cfg.out) / "report.json").string();
    std::ofstream rf(rep_path, std::ios::trunc);
    rf << rep.dump(2) << "\n";
    std::cout << "wrote " << stats_path << ", " << pdf_path << ", " << rep_path << "\n";
    return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg) {
    (void)cfg;
    auto cases = run_gradcheck_suite();
    bool ok = true;
    for (const auto& c : cases) {
        bool pass = c.passed();
        ok = ok && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << c.report.op << ": n=" << c.report.n_checked
                  << " max_rel_err=" << c.report.max_rel_err
                  << " mean_rel_err=" << c.report.mean_rel_err << " tol=" << c.tolerance
                  << "\n";
    }
    return ok ? kExitOk : kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"1-d stochastic field generator with turbulent multiscale statistics"};
    app.require_subcommand(1);

    CommonArgs make_ref_args, train_args, gen_args, analyze_args, gc_args;
    std::string checkpoint_arg, fields_arg;

    CLI::App* make_ref = app.add_subcommand("make-ref", "write reference curves CSV");
    add_common(make_ref, make_ref_args);
    CLI::App* train_cmd = app.add_subcommand("train", "train the model against the reference");
    add_common(train_cmd, train_args);
    CLI::App* gen = app.add_subcommand("generate", "generate a field ensemble");
    add_common(gen, gen_args);
    gen->add_option("--checkpoint", checkpoint_arg, "checkpoint path (default OUT/model.nntb)");
    CLI::App* analyze = app.add_subcommand("analyze", "multiscale statistics of an ensemble");
    add_common(analyze, analyze_args);
    analyze->add_option("--fields", fields_arg, "field file (default OUT/fields.nntf)");
    CLI::App* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference validation");
    add_common(gradcheck_cmd, gc_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (make_ref->parsed()) return cmd_make_ref(resolve(make_ref_args));
        if (train_cmd->parsed()) return cmd_train(resolve(train_args));
        if (gen->parsed()) return cmd_generate(resolve(gen_args), checkpoint_arg);
        if (analyze->parsed()) return cmd_analyze(resolve(analyze_args), fields_arg);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(resolve(gc_args));
    } catch (const UsageError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
