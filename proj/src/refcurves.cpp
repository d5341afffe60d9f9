#include "turbstoch/refcurves.hpp"

#include <fftw3.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "turbstoch/errors.hpp"
#include "turbstoch/rng.hpp"

namespace turbstoch {

void ReferenceModelParams::validate() const {
    if (!(eta > 0.0 && eta < L)) throw ParameterError("require 0 < eta < L");
    if (!(c2 > 0.0 && c2 < 0.1)) throw ParameterError("require 0 < c2 < 0.1");
    if (!(sigma2 > 0.0)) throw ParameterError("require sigma2 > 0");
    if (!(s0 >= 0.0)) throw ParameterError("require s0 >= 0");
    if (!(nu >= 0.0 && kappa >= 0.0)) throw ParameterError("require nu, kappa >= 0");
}

double ref_log_s2(const ReferenceModelParams& p, double l) {
    double z2 = p.zeta2();
    double le = l / p.eta, lL = l / p.L;
    return std::log(p.sigma2) + 2.0 * std::log(le) -
           0.5 * (2.0 - z2) * std::log(1.0 + le * le) - 0.5 * z2 * std::log(1.0 + lL * lL);
}

double ref_skewness(const ReferenceModelParams& p, double l) {
    double el = p.eta / l;
    return -p.s0 / (1.0 + l / p.L) * std::pow(1.0 + el * el, 0.5 * p.nu);
}

double ref_log_f3(const ReferenceModelParams& p, double l) {
    double Ll = p.L / l, el = p.eta / l;
    return 4.0 * p.c2 * 0.5 * std::log(1.0 + Ll * Ll) * std::pow(1.0 + el * el, 0.5 * p.kappa);
}

ReferenceCurves synth_reference(const ReferenceModelParams& params,
                                const std::vector<double>& scales) {
    params.validate();
    ReferenceCurves c;
    for (double l : scales) {
        if (!(l > 0.0)) throw ParameterError("scales must be positive");
        c.scales.push_back(l);
        c.logS2.push_back(ref_log_s2(params, l));
        c.skew.push_back(ref_skewness(params, l));
        c.logF3.push_back(ref_log_f3(params, l));
    }
    return c;
}

ReferenceCurves synth_reference(const ReferenceModelParams& params, const ScaleSet& scales) {
    std::vector<double> s(scales.scales.begin(), scales.scales.end());
    return synth_reference(params, s);
}

// ------------------------------------------------------------------- csv io

void write_reference_csv(const ReferenceCurves& curves, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "scale,logS2,skew,logF3\n";
    f.precision(17);
    for (size_t i = 0; i < curves.scales.size(); ++i)
        f << curves.scales[i] << ',' << curves.logS2[i] << ',' << curves.skew[i] << ','
          << curves.logF3[i] << '\n';
    if (!f) throw IoError("write failure on '" + path + "'");
}

ReferenceCurves load_reference_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw ParseError(path + ": empty file");
    // tolerate trailing CR
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "scale,logS2,skew,logF3")
        throw ParseError(path + ":1: expected header 'scale,logS2,skew,logF3', got '" + line +
                         "'");
    ReferenceCurves c;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(ss, tok, ',')) {
            try {
                size_t used = 0;
                double v = std::stod(tok, &used);
                if (used != tok.size()) throw std::invalid_argument(tok);
                vals.push_back(v);
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(lineno) + ": bad number '" + tok +
                                 "'");
            }
        }
        if (vals.size() != 4)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 4 columns, got " +
                             std::to_string(vals.size()));
        for (double v : vals)
            if (!std::isfinite(v))
                throw ParseError(path + ":" + std::to_string(lineno) + ": non-finite value");
        if (!c.scales.empty() && vals[0] <= c.scales.back())
            throw ParseError(path + ":" + std::to_string(lineno) +
                             ": scales not strictly increasing");
        c.scales.push_back(vals[0]);
        c.logS2.push_back(vals[1]);
        c.skew.push_back(vals[2]);
        c.logF3.push_back(vals[3]);
    }
    if (c.scales.size() < 2) throw ParseError(path + ": need at least 2 data rows");
    return c;
}

ReferenceCurves resample_to_scales(const ReferenceCurves& curves,
                                   const std::vector<double>& target) {
    if (curves.scales.size() < 2) throw ContractError("resample needs >= 2 source scales");
    ReferenceCurves out;
    double lo = curves.scales.front(), hi = curves.scales.back();
    for (double l : target) {
        if (l < lo || l > hi)
            throw RangeError("target scale " + std::to_string(l) + " outside source range [" +
                             std::to_string(lo) + ", " + std::to_string(hi) + "]");
        double x = std::log(l);
        // find bracketing nodes
        size_t j = 1;
        while (j + 1 < curves.scales.size() && curves.scales[j] < l) ++j;
        double x0 = std::log(curves.scales[j - 1]), x1 = std::log(curves.scales[j]);
        double t = x1 == x0 ? 0.0 : (x - x0) / (x1 - x0);
        auto lerp = [&](const std::vector<double>& v) {
            return v[j - 1] + t * (v[j] - v[j - 1]);
        };
        out.scales.push_back(l);
        out.logS2.push_back(lerp(curves.logS2));
        out.skew.push_back(lerp(curves.skew));
        out.logF3.push_back(lerp(curves.logF3));
    }
    return out;
}

// -------------------------------------------------------------- test fields

Field make_iid_gaussian_field(int64_t n, uint64_t seed) {
    if (n < 1) throw ParameterError("field length must be >= 1");
    Field f(static_cast<size_t>(n));
    Rng rng(seed);
    for (double& v : f) v = rng.normal();
    return f;
}

Field make_power_law_field(double beta, int64_t n, uint64_t seed) {
    if (beta <= 0.0) throw ParameterError("power-law exponent beta must be > 0");
    if (n < 2 || (n & (n - 1)) != 0) throw ParameterError("n must be a power of two");
    size_t half = size_t(n) / 2;
    std::vector<fftw_complex> spec(half + 1);
    Rng rng(seed);
    spec[0][0] = 0.0;
    spec[0][1] = 0.0;
    for (size_t k = 1; k <= half; ++k) {
        double amp = std::pow(double(k), -0.5 * beta);
        double phase = 2.0 * M_PI * rng.uniform01();
        spec[k][0] = amp * std::cos(phase);
        spec[k][1] = amp * std::sin(phase);
    }
    spec[half][1] = 0.0;  // Nyquist bin must be real

    Field f(static_cast<size_t>(n));
    fftw_plan plan =
        fftw_plan_dft_c2r_1d(int(n), spec.data(), f.data(), FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
    fftw_execute(plan);
    fftw_destroy_plan(plan);

    double m = 0.0;
    for (double v : f) m += v;
    m /= double(n);
    double var = 0.0;
    for (double v : f) var += (v - m) * (v - m);
    var /= double(n);
    double invsd = 1.0 / std::sqrt(var);
    for (double& v : f) v = (v - m) * invsd;
    return f;
}

}  // namespace turbstoch
