#include "turbstoch/unet.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"
#include "turbstoch/errors.hpp"
#include "turbstoch/rng.hpp"

namespace turbstoch {

using nlohmann::json;

namespace {

json layer_to_json(const ConvLayerSpec& l) {
    return json{{"in", l.in_ch}, {"out", l.out_ch}, {"k", l.kernel}, {"transpose", l.transpose}};
}

ConvLayerSpec layer_from_json(const json& j) {
    ConvLayerSpec l;
    l.in_ch = j.at("in").get<int64_t>();
    l.out_ch = j.at("out").get<int64_t>();
    l.kernel = j.at("k").get<int64_t>();
    l.transpose = j.at("transpose").get<bool>();
    return l;
}

}  // namespace

ModelSpec ModelSpec::default_spec() {
    ModelSpec s;
    s.encoder = {{1, 16, 1, false}, {16, 32, 2, false}, {32, 64, 4, false}, {64, 128, 8, false}};
    s.bridge_conv = {128, 256, 16, false};
    s.bridge_tconv = {256, 128, 16, true};
    s.decoder = {{128, 64, 8, true}, {64, 32, 16, true}, {32, 16, 32, true}, {16, 1, 64, true}};
    return s;
}

std::vector<int64_t> ModelSpec::channel_trace() const {
    std::vector<int64_t> tr;
    tr.push_back(encoder.front().in_ch);
    for (const auto& l : encoder) tr.push_back(l.out_ch);
    tr.push_back(bridge_conv.out_ch);
    tr.push_back(bridge_tconv.out_ch);
    for (const auto& l : decoder) tr.push_back(l.out_ch);
    return tr;
}

std::string ModelSpec::to_json() const {
    json j;
    j["encoder"] = json::array();
    for (const auto& l : encoder) j["encoder"].push_back(layer_to_json(l));
    j["bridge_conv"] = layer_to_json(bridge_conv);
    j["bridge_tconv"] = layer_to_json(bridge_tconv);
    j["decoder"] = json::array();
    for (const auto& l : decoder) j["decoder"].push_back(layer_to_json(l));
    j["bn_eps"] = bn_eps;
    j["bn_momentum"] = bn_momentum;
    return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& s) {
    json j = json::parse(s);
    ModelSpec spec;
    spec.encoder.clear();
    for (const auto& l : j.at("encoder")) spec.encoder.push_back(layer_from_json(l));
    spec.bridge_conv = layer_from_json(j.at("bridge_conv"));
    spec.bridge_tconv = layer_from_json(j.at("bridge_tconv"));
    spec.decoder.clear();
    for (const auto& l : j.at("decoder")) spec.decoder.push_back(layer_from_json(l));
    spec.bn_eps = j.at("bn_eps").get<double>();
    spec.bn_momentum = j.at("bn_momentum").get<double>();
    return spec;
}

Sha256Digest ModelSpec::hash() const { return sha256(to_json()); }

std::vector<Parameter*> UNetModel::parameters() {
    std::vector<Parameter*> ps;
    for (auto& b : blocks) {
        ps.push_back(&b.weights);
        ps.push_back(&b.bias);
        ps.push_back(&b.gamma);
        ps.push_back(&b.beta);
    }
    return ps;
}

std::vector<const Parameter*> UNetModel::parameters() const {
    std::vector<const Parameter*> ps;
    for (const auto& b : blocks) {
        ps.push_back(&b.weights);
        ps.push_back(&b.bias);
        ps.push_back(&b.gamma);
        ps.push_back(&b.beta);
    }
    return ps;
}

int64_t UNetModel::parameter_count() const {
    int64_t n = 0;
    for (const Parameter* p : parameters()) n += int64_t(p->value.size());
    return n;
}

bool UNetModel::trained() const {
    for (const auto& b : blocks)
        if (!b.bn.initialized) return false;
    return true;
}

namespace {

std::vector<ConvBlock> make_blocks(const ModelSpec& spec) {
    std::vector<ConvBlock> blocks;
    auto add = [&](const ConvLayerSpec& l, const std::string& name, bool relu_after) {
        ConvBlock b;
        b.spec = l;
        int64_t wb = l.transpose ? l.in_ch : l.out_ch;
        int64_t wc = l.transpose ? l.out_ch : l.in_ch;
        b.weights = Parameter(name + ".w", Tensor3(wb, wc, l.kernel));
        b.bias = Parameter(name + ".b", Tensor3(1, l.out_ch, 1));
        b.gamma = Parameter(name + ".gamma", Tensor3(1, l.out_ch, 1, 1.0));
        b.beta = Parameter(name + ".beta", Tensor3(1, l.out_ch, 1));
        b.bn = BatchNormState(l.out_ch);
        b.relu_after = relu_after;
        blocks.push_back(std::move(b));
    };
    for (size_t i = 0; i < spec.encoder.size(); ++i)
        add(spec.encoder[i], "enc" + std::to_string(i), true);
    add(spec.bridge_conv, "bridge_conv", true);
    add(spec.bridge_tconv, "bridge_tconv", true);
    for (size_t i = 0; i < spec.decoder.size(); ++i)
        add(spec.decoder[i], "dec" + std::to_string(i), i + 1 < spec.decoder.size());
    return blocks;
}

}  // namespace

UNetModel build_model(uint64_t seed, uint8_t precision_flag) {
    UNetModel m;
    m.spec = ModelSpec::default_spec();
    m.blocks = make_blocks(m.spec);
    m.seed = seed;
    m.precision_flag = precision_flag;
    Rng rng(seed);
    for (auto& b : m.blocks) {
        int64_t fan_in = b.spec.in_ch * b.spec.kernel;
        double bound = std::sqrt(6.0 / double(fan_in));  // He-uniform, ReLU gain
        for (double& w : b.weights.value.data) w = rng.uniform(-bound, bound);
    }
    return m;
}

Var forward(UNetModel& model, const Var& input, bool train, Tape* tape, bool update_running) {
    const Tensor3& x = input.v();
    if (x.channels != 1) throw ShapeError("forward: input must have 1 channel");
    if (x.length % model.spec.length_divisor() != 0)
        throw ShapeError("forward: input length " + std::to_string(x.length) +
                         " not divisible by " + std::to_string(model.spec.length_divisor()));

    auto as_var = [&](Parameter& p) -> Var {
        if (tape) return tape->leaf(p);
        Var v;
        v.val = std::shared_ptr<const Tensor3>(&p.value, [](const Tensor3*) {});
        return v;
    };
    auto run_block = [&](ConvBlock& b, const Var& h) -> Var {
        Var w = as_var(b.weights), bias = as_var(b.bias);
        Var g = as_var(b.gamma), be = as_var(b.beta);
        Var y = b.spec.transpose ? conv_transpose1d(h, w, bias) : conv1d(h, w, bias);
        y = batch_norm1d(y, g, be, b.bn, train, update_running, model.spec.bn_eps,
                         model.spec.bn_momentum);
        if (b.relu_after) y = relu(y);
        return y;
    };

    size_t n_enc = model.spec.encoder.size();
    std::vector<Var> skips;
    Var h = input;
    for (size_t i = 0; i < n_enc; ++i) {
        h = run_block(model.blocks[i], h);
        skips.push_back(h);  // pre-pool tap
        h = avg_pool2(h);
    }
    h = run_block(model.blocks[n_enc], h);      // bridge conv
    h = run_block(model.blocks[n_enc + 1], h);  // bridge tconv
    for (size_t i = 0; i < model.spec.decoder.size(); ++i) {
        h = upsample2(h);
        h = add(h, skips[n_enc - 1 - i]);
        h = run_block(model.blocks[n_enc + 2 + i], h);
    }
    return h;
}

Tensor3 forward_eval(UNetModel& model, const Tensor3& input) {
    Var in = constant(input);
    return forward(model, in, /*train=*/false).v();
}

void refresh_bn_stats(UNetModel& model, int64_t batch, int64_t length, Rng& rng, int passes) {
    if (batch < 2) throw ContractError("refresh_bn_stats: batch must be >= 2");
    if (passes < 1) throw ContractError("refresh_bn_stats: need >= 1 pass");
    for (auto& b : model.blocks) b.bn.initialized = false;
    for (int p = 0; p < passes; ++p) {
        Tensor3 noise(batch, 1, length);
        rng.fill_normal(noise);
        Var in = constant(std::move(noise));
        forward(model, in, /*train=*/true, nullptr, /*update_running=*/true);
    }
}

// ------------------------------------------------------------- checkpoint io

namespace {

constexpr char kMagic[4] = {'N', 'N', 'T', 'B'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::string& buf, const void* p, size_t n) {
    buf.append(reinterpret_cast<const char*>(p), n);
}
template <typename T>
void put_pod(std::string& buf, T v) {
    put_bytes(buf, &v, sizeof(T));  // little-endian host assumed
}
void put_section(std::string& buf, const std::string& name, const std::string& payload) {
    put_pod<uint32_t>(buf, uint32_t(name.size()));
    put_bytes(buf, name.data(), name.size());
    put_pod<uint64_t>(buf, payload.size());
    put_bytes(buf, payload.data(), payload.size());
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    void need(size_t n) const {
        if (pos + n > buf.size()) throw IoError("truncated checkpoint");
    }
    void bytes(void* p, size_t n) {
        need(n);
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    template <typename T>
    T pod() {
        T v;
        bytes(&v, sizeof(T));
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    bool done() const { return pos == buf.size(); }
};

std::string params_payload(const UNetModel& model) {
    std::string p;
    for (const Parameter* par : model.parameters())
        put_bytes(p, par->value.data.data(), par->value.size() * sizeof(double));
    return p;
}

}  // namespace

void save_checkpoint(const UNetModel& model, const AdamState* adam, const std::string& path) {
    std::string buf;
    put_bytes(buf, kMagic, 4);
    put_pod<uint32_t>(buf, kVersion);
    Sha256Digest h = model.spec.hash();
    put_bytes(buf, h.data(), h.size());
    put_pod<uint64_t>(buf, model.seed);
    put_pod<uint8_t>(buf, model.precision_flag);
    put_pod<uint64_t>(buf, uint64_t(model.parameter_count()));

    put_section(buf, "spec", model.spec.to_json());
    put_section(buf, "params", params_payload(model));

    std::string bn;
    for (const auto& b : model.blocks) {
        put_bytes(bn, b.bn.running_mean.data(), b.bn.running_mean.size() * sizeof(double));
        put_bytes(bn, b.bn.running_var.data(), b.bn.running_var.size() * sizeof(double));
        put_pod<uint8_t>(bn, b.bn.initialized ? 1 : 0);
    }
    put_section(buf, "bnstats", bn);

    if (adam) {
        std::string a;
        put_pod<double>(a, adam->beta1);
        put_pod<double>(a, adam->beta2);
        put_pod<double>(a, adam->eps);
        put_pod<int64_t>(a, adam->t);
        put_pod<uint64_t>(a, adam->m.size());
        for (size_t i = 0; i < adam->m.size(); ++i) {
            put_pod<uint64_t>(a, adam->m[i].size());
            put_bytes(a, adam->m[i].data(), adam->m[i].size() * sizeof(double));
            put_bytes(a, adam->v[i].data(), adam->v[i].size() * sizeof(double));
        }
        put_section(buf, "adam", a);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(buf.data(), std::streamsize(buf.size()));
    if (!f) throw IoError("write failure on '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf};

    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad magic in '" + path + "'");
    uint32_t version = r.pod<uint32_t>();
    if (version != kVersion)
        throw IoError("version mismatch: file has " + std::to_string(version) + ", expected " +
                      std::to_string(kVersion));
    Sha256Digest header_hash;
    r.bytes(header_hash.data(), header_hash.size());
    uint64_t seed = r.pod<uint64_t>();
    uint8_t precision = r.pod<uint8_t>();
    uint64_t param_count = r.pod<uint64_t>();

    std::string spec_json, params, bnstats, adam_payload;
    bool have_adam = false;
    while (!r.done()) {
        uint32_t nlen = r.pod<uint32_t>();
        std::string name = r.str(nlen);
        uint64_t plen = r.pod<uint64_t>();
        std::string payload = r.str(size_t(plen));
        if (name == "spec") spec_json = payload;
        else if (name == "params") params = payload;
        else if (name == "bnstats") bnstats = payload;
        else if (name == "adam") {
            adam_payload = payload;
            have_adam = true;
        }
        // unknown sections are skipped for forward compatibility
    }
    if (spec_json.empty() || params.empty() || bnstats.empty())
        throw IoError("truncated checkpoint: missing sections");

    if (sha256(spec_json) != header_hash) throw IoError("spec hash mismatch in '" + path + "'");

    LoadedCheckpoint lc;
    lc.model.spec = ModelSpec::from_json(spec_json);
    lc.model.blocks = make_blocks(lc.model.spec);
    lc.model.seed = seed;
    lc.model.precision_flag = precision;
    if (lc.model.parameter_count() != int64_t(param_count))
        throw IoError("parameter count mismatch in '" + path + "'");

    Reader pr{params};
    for (Parameter* p : lc.model.parameters())
        pr.bytes(p->value.data.data(), p->value.size() * sizeof(double));
    if (!pr.done()) throw IoError("parameter section size mismatch");

    Reader br{bnstats};
    for (auto& b : lc.model.blocks) {
        br.bytes(b.bn.running_mean.data(), b.bn.running_mean.size() * sizeof(double));
        br.bytes(b.bn.running_var.data(), b.bn.running_var.size() * sizeof(double));
        b.bn.initialized = br.pod<uint8_t>() != 0;
    }
    if (!br.done()) throw IoError("bn stats section size mismatch");

    if (have_adam) {
        Reader ar{adam_payload};
        AdamState st;
        st.beta1 = ar.pod<double>();
        st.beta2 = ar.pod<double>();
        st.eps = ar.pod<double>();
        st.t = ar.pod<int64_t>();
        uint64_t np = ar.pod<uint64_t>();
        for (uint64_t i = 0; i < np; ++i) {
            uint64_t sz = ar.pod<uint64_t>();
            std::vector<double> m(static_cast<size_t>(sz), 0.0);
            std::vector<double> v(static_cast<size_t>(sz), 0.0);
            ar.bytes(m.data(), m.size() * sizeof(double));
            ar.bytes(v.data(), v.size() * sizeof(double));
            st.m.push_back(std::move(m));
            st.v.push_back(std::move(v));
        }
        lc.adam = std::move(st);
    }
    return lc;
}

Sha256Digest sha256_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return sha256(buf.data(), buf.size());
}

}  // namespace turbstoch
