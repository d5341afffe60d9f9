#include "turbstoch/fieldgen.hpp"

#include <cstring>
#include <fstream>

#include "turbstoch/errors.hpp"
#include "turbstoch/rng.hpp"

namespace turbstoch {

Field generate_field(UNetModel& model, uint64_t seed, int64_t n) {
    int64_t in_len = n + kGenerationPad;
    if (in_len % model.spec.length_divisor() != 0)
        throw ShapeError("input length " + std::to_string(in_len) + " not divisible by " +
                         std::to_string(model.spec.length_divisor()));
    if (!model.trained())
        throw StateError("model has no batch-norm running stats; train before generating");

    Tensor3 noise(1, 1, in_len);
    Rng rng(seed);
    rng.fill_normal(noise);
    Tensor3 incr = forward_eval(model, noise);

    int64_t trim = (in_len - n) / 2;
    Field u(static_cast<size_t>(n));
    const double* d = incr.row(0, 0) + trim;
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        s += d[i];
        u[size_t(i)] = s;
    }
    return u;
}

FieldEnsemble generate_ensemble(UNetModel& model, uint64_t base_seed, int64_t realizations,
                                int64_t n, const Sha256Digest& checkpoint_hash) {
    if (realizations < 1) throw ContractError("need >= 1 realization");
    FieldEnsemble e;
    e.n = n;
    e.base_seed = base_seed;
    e.checkpoint_hash = checkpoint_hash;
    e.data.reserve(size_t(realizations));
    for (int64_t r = 0; r < realizations; ++r)
        e.data.push_back(generate_field(model, derive_seed(base_seed, uint64_t(r)), n));
    return e;
}

namespace {
constexpr char kMagic[4] = {'N', 'N', 'T', 'F'};
constexpr uint32_t kVersion = 1;
}  // namespace

void write_fields(const FieldEnsemble& ensemble, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    auto put = [&](const void* p, size_t nbytes) {
        f.write(reinterpret_cast<const char*>(p), std::streamsize(nbytes));
    };
    put(kMagic, 4);
    put(&kVersion, 4);
    uint64_t r = uint64_t(ensemble.data.size());
    uint64_t n = uint64_t(ensemble.n);
    uint8_t dtype = 0;  // float64
    put(&r, 8);
    put(&n, 8);
    put(&dtype, 1);
    put(&ensemble.base_seed, 8);
    put(ensemble.checkpoint_hash.data(), ensemble.checkpoint_hash.size());
    for (const Field& field : ensemble.data) {
        if (int64_t(field.size()) != ensemble.n)
            throw ContractError("realization length mismatch");
        put(field.data(), field.size() * sizeof(double));
    }
    if (!f) throw IoError("write failure on '" + path + "'");
}

FieldEnsemble read_fields(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    size_t pos = 0;
    auto need = [&](size_t nbytes) {
        if (pos + nbytes > buf.size()) throw IoError("truncated field file '" + path + "'");
    };
    auto get = [&](void* p, size_t nbytes) {
        need(nbytes);
        std::memcpy(p, buf.data() + pos, nbytes);
        pos += nbytes;
    };

    char magic[4];
    get(magic, 4);
    if (std::memcmp(magic, "FTNN", 4) == 0)
        throw IoError("unsupported format: foreign endianness in '" + path + "'");
    if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad magic in '" + path + "'");
    uint32_t version;
    get(&version, 4);
    if (version != kVersion)
        throw IoError("version mismatch: file has " + std::to_string(version));
    uint64_t r, n;
    uint8_t dtype;
    FieldEnsemble e;
    get(&r, 8);
    get(&n, 8);
    get(&dtype, 1);
    if (dtype != 0) throw IoError("unsupported dtype flag " + std::to_string(dtype));
    get(&e.base_seed, 8);
    get(e.checkpoint_hash.data(), e.checkpoint_hash.size());

    size_t expect = size_t(r) * size_t(n) * sizeof(double);
    if (buf.size() - pos != expect)
        throw IoError("truncated field file '" + path + "': header promises " +
                      std::to_string(expect) + " payload bytes, found " +
                      std::to_string(buf.size() - pos));
    e.n = int64_t(n);
    e.data.resize(size_t(r));
    for (uint64_t i = 0; i < r; ++i) {
        e.data[size_t(i)].resize(size_t(n));
        get(e.data[size_t(i)].data(), size_t(n) * sizeof(double));
    }
    return e;
}

}  // namespace turbstoch
