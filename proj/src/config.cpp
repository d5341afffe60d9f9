#include "turbstoch/config.hpp"

#include <fstream>

#include "json.hpp"
#include "turbstoch/errors.hpp"

namespace turbstoch {

using nlohmann::json;

namespace {

json default_json() {
    RunConfig d;
    json j;
    j["seed"] = d.seed;
    j["threads"] = d.threads;
    j["out"] = d.out;
    j["precision"] = d.precision;
    j["trainer"] = {{"n_train", d.trainer.n_train},
                    {"pad", d.trainer.pad},
                    {"batch", d.trainer.batch},
                    {"epochs", d.trainer.epochs},
                    {"alpha", d.trainer.alpha},
                    {"beta", d.trainer.beta},
                    {"loss_scale_count", d.trainer.loss_scale_count},
                    {"flatness_log_form", d.trainer.flatness_log_form},
                    {"checkpoint_every", d.trainer.checkpoint_every}};
    j["reference"] = {{"source", d.reference.source}, {"csv_path", d.reference.csv_path},
                      {"eta", d.reference.params.eta}, {"L", d.reference.params.L},
                      {"c2", d.reference.params.c2},   {"sigma2", d.reference.params.sigma2},
                      {"s0", d.reference.params.s0},   {"nu", d.reference.params.nu},
                      {"kappa", d.reference.params.kappa}};
    j["generate"] = {{"realizations", d.generate.realizations},
                     {"n", d.generate.n},
                     {"base_seed", d.generate.base_seed}};
    j["analyze"] = {{"scale_count", d.analyze.scale_count},
                    {"pdf_scales", d.analyze.pdf_scales},
                    {"pdf_bins", d.analyze.pdf_bins},
                    {"pdf_range", d.analyze.pdf_range}};
    return j;
}

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return true;
    if (a.is_boolean() && b.is_boolean()) return true;
    if (a.is_string() && b.is_string()) return true;
    if (a.is_array() && b.is_array()) return true;
    if (a.is_object() && b.is_object()) return true;
    return false;
}

// merge src into dst, rejecting keys and types absent from the schema (dst)
void merge_checked(json& dst, const json& src, const std::string& prefix) {
    for (auto it = src.begin(); it != src.end(); ++it) {
        std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!dst.contains(it.key())) throw UsageError("unknown config key '" + path + "'");
        json& slot = dst[it.key()];
        if (slot.is_object()) {
            if (!it->is_object()) throw UsageError("expected object at '" + path + "'");
            merge_checked(slot, *it, path);
        } else {
            if (!same_kind(slot, *it))
                throw UsageError("type mismatch at '" + path + "' (expected " +
                                 std::string(slot.type_name()) + ")");
            slot = *it;
        }
    }
}

void apply_override(json& dst, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    std::string valstr = kv.substr(eq + 1);

    // walk the dot path
    json* slot = &dst;
    std::string prefix;
    size_t pos = 0;
    while (true) {
        size_t dot = key.find('.', pos);
        std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (!slot->is_object() || !slot->contains(part))
            throw UsageError("unknown config key '" + key + "'");
        slot = &(*slot)[part];
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }

    json val;
    if (slot->is_string()) {
        val = valstr;
    } else {
        val = json::parse(valstr, nullptr, false);
        if (val.is_discarded() || !same_kind(*slot, val))
            throw UsageError("type mismatch at '" + key + "': cannot parse '" + valstr + "' as " +
                             std::string(slot->type_name()));
    }
    *slot = val;
}

RunConfig from_json(const json& j) {
    RunConfig c;
    c.seed = j.at("seed").get<uint64_t>();
    c.threads = j.at("threads").get<int>();
    c.out = j.at("out").get<std::string>();
    c.precision = j.at("precision").get<std::string>();

    const json& t = j.at("trainer");
    c.trainer.seed = c.seed;
    c.trainer.n_train = t.at("n_train").get<int64_t>();
    c.trainer.pad = t.at("pad").get<int64_t>();
    c.trainer.batch = t.at("batch").get<int64_t>();
    c.trainer.epochs = t.at("epochs").get<int64_t>();
    c.trainer.alpha = t.at("alpha").get<double>();
    c.trainer.beta = t.at("beta").get<double>();
    c.trainer.loss_scale_count = t.at("loss_scale_count").get<int>();
    c.trainer.flatness_log_form = t.at("flatness_log_form").get<bool>();
    c.trainer.checkpoint_every = t.at("checkpoint_every").get<int64_t>();
    c.trainer.precision = c.precision;

    const json& r = j.at("reference");
    c.reference.source = r.at("source").get<std::string>();
    c.reference.csv_path = r.at("csv_path").get<std::string>();
    c.reference.params.eta = r.at("eta").get<double>();
    c.reference.params.L = r.at("L").get<double>();
    c.reference.params.c2 = r.at("c2").get<double>();
    c.reference.params.sigma2 = r.at("sigma2").get<double>();
    c.reference.params.s0 = r.at("s0").get<double>();
    c.reference.params.nu = r.at("nu").get<double>();
    c.reference.params.kappa = r.at("kappa").get<double>();

    const json& g = j.at("generate");
    c.generate.realizations = g.at("realizations").get<int64_t>();
    c.generate.n = g.at("n").get<int64_t>();
    c.generate.base_seed = g.at("base_seed").get<uint64_t>();

    const json& a = j.at("analyze");
    c.analyze.scale_count = a.at("scale_count").get<int>();
    c.analyze.pdf_scales = a.at("pdf_scales").get<std::vector<int64_t>>();
    c.analyze.pdf_bins = a.at("pdf_bins").get<int>();
    c.analyze.pdf_range = a.at("pdf_range").get<double>();
    return c;
}

void validate(const RunConfig& c) {
    try {
        c.trainer.validate();
    } catch (const std::exception& e) {
        throw UsageError(std::string("trainer: ") + e.what());
    }
    if (c.reference.source != "synth" && c.reference.source != "csv")
        throw UsageError("reference.source must be 'synth' or 'csv'");
    if (c.reference.source == "csv" && c.reference.csv_path.empty())
        throw UsageError("reference.csv_path required when reference.source is 'csv'");
    if (c.reference.source == "synth") {
        try {
            c.reference.params.validate();
        } catch (const std::exception& e) {
            throw UsageError(std::string("reference: ") + e.what());
        }
    }
    if (c.generate.realizations < 1) throw UsageError("generate.realizations must be >= 1");
    if (c.generate.n < 16) throw UsageError("generate.n too small");
    if (c.analyze.scale_count < 3) throw UsageError("analyze.scale_count must be >= 3");
    if (c.analyze.pdf_bins < 2) throw UsageError("analyze.pdf_bins must be >= 2");
    if (c.precision != "double")
        throw UsageError("precision '" + c.precision + "' unsupported (this build is double)");
    if (c.threads < 0) throw UsageError("threads must be >= 0");
}

}  // namespace

ReferenceCurves RunConfig::reference_curves(const std::vector<double>& scales) const {
    if (reference.source == "synth") return synth_reference(reference.params, scales);
    ReferenceCurves src = load_reference_csv(reference.csv_path);
    return resample_to_scales(src, scales);
}

std::string RunConfig::to_json_pretty() const {
    json j = default_json();
    j["seed"] = seed;
    j["threads"] = threads;
    j["out"] = out;
    j["precision"] = precision;
    j["trainer"]["n_train"] = trainer.n_train;
    j["trainer"]["pad"] = trainer.pad;
    j["trainer"]["batch"] = trainer.batch;
    j["trainer"]["epochs"] = trainer.epochs;
    j["trainer"]["alpha"] = trainer.alpha;
    j["trainer"]["beta"] = trainer.beta;
    j["trainer"]["loss_scale_count"] = trainer.loss_scale_count;
    j["trainer"]["flatness_log_form"] = trainer.flatness_log_form;
    j["trainer"]["checkpoint_every"] = trainer.checkpoint_every;
    j["reference"]["source"] = reference.source;
    j["reference"]["csv_path"] = reference.csv_path;
    j["reference"]["eta"] = reference.params.eta;
    j["reference"]["L"] = reference.params.L;
    j["reference"]["c2"] = reference.params.c2;
    j["reference"]["sigma2"] = reference.params.sigma2;
    j["reference"]["s0"] = reference.params.s0;
    j["reference"]["nu"] = reference.params.nu;
    j["reference"]["kappa"] = reference.params.kappa;
    j["generate"]["realizations"] = generate.realizations;
    j["generate"]["n"] = generate.n;
    j["generate"]["base_seed"] = generate.base_seed;
    j["analyze"]["scale_count"] = analyze.scale_count;
    j["analyze"]["pdf_scales"] = analyze.pdf_scales;
    j["analyze"]["pdf_bins"] = analyze.pdf_bins;
    j["analyze"]["pdf_range"] = analyze.pdf_range;
    return j.dump(2) + "\n";
}

RunConfig parse_config(const std::string& config_file,
                       const std::vector<std::string>& overrides) {
    json resolved = default_json();
    if (!config_file.empty()) {
        std::ifstream f(config_file);
        if (!f) throw UsageError("cannot open config file '" + config_file + "'");
        json file_json = json::parse(f, nullptr, false);
        if (file_json.is_discarded())
            throw UsageError("config file '" + config_file + "' is not valid JSON");
        if (!file_json.is_object()) throw UsageError("config root must be a JSON object");
        merge_checked(resolved, file_json, "");
    }
    for (const std::string& kv : overrides) apply_override(resolved, kv);
    RunConfig c = from_json(resolved);
    validate(c);
    return c;
}

}  // namespace turbstoch
