#include "turbstoch/mstats.hpp"

#include <algorithm>
#include <cmath>

#include "turbstoch/errors.hpp"

namespace turbstoch {

ScaleSet::ScaleSet(std::vector<int64_t> s) : scales(std::move(s)) {
    if (scales.empty()) throw ScaleError("empty scale set");
    int64_t prev = 0;
    for (int64_t l : scales) {
        if (l < 1) throw ScaleError("scale must be >= 1, got " + std::to_string(l));
        if (l <= prev) throw ScaleError("scales must be strictly increasing");
        prev = l;
    }
}

ScaleSet ScaleSet::log_spaced(int64_t lmin, int64_t lmax, int count) {
    if (lmin < 1 || lmax < lmin || count < 1) throw ScaleError("invalid log_spaced arguments");
    std::vector<int64_t> s;
    double a = std::log(double(lmin)), b = std::log(double(lmax));
    for (int i = 0; i < count; ++i) {
        double t = count == 1 ? 0.0 : double(i) / double(count - 1);
        auto l = int64_t(std::llround(std::exp(a + t * (b - a))));
        l = std::clamp(l, lmin, lmax);
        if (s.empty() || l > s.back()) s.push_back(l);
    }
    return ScaleSet(std::move(s));
}

// ------------------------------------------------------------ analysis path

std::vector<double> increments(std::span<const double> field, int64_t l) {
    auto n = int64_t(field.size());
    if (l < 1 || l >= n)
        throw ScaleError("scale " + std::to_string(l) + " out of range for length " +
                         std::to_string(n));
    std::vector<double> out(size_t(n - l));
    for (int64_t x = 0; x < n - l; ++x) out[size_t(x)] = field[size_t(x + l)] - field[size_t(x)];
    return out;
}

double structure_function(std::span<const double> field, int64_t l, int p) {
    auto n = int64_t(field.size());
    if (l < 1 || l >= n) throw ScaleError("scale out of range");
    if (p < 1) throw ContractError("structure_function requires p >= 1");
    double s = 0.0;
    for (int64_t x = 0; x < n - l; ++x) {
        double d = field[size_t(x + l)] - field[size_t(x)];
        double r = d;
        for (int q = 1; q < p; ++q) r *= d;
        s += r;
    }
    return s / double(n - l);
}

double structure_function(const FieldSet& fields, int64_t l, int p) {
    if (fields.empty()) throw ContractError("empty field set");
    double s = 0.0;
    int64_t cnt = 0;
    for (const Field& f : fields) {
        auto n = int64_t(f.size());
        if (l < 1 || l >= n) throw ScaleError("scale out of range");
        for (int64_t x = 0; x < n - l; ++x) {
            double d = f[size_t(x + l)] - f[size_t(x)];
            double r = d;
            for (int q = 1; q < p; ++q) r *= d;
            s += r;
        }
        cnt += n - l;
    }
    return s / double(cnt);
}

StatCurve skewness_curve(const FieldSet& fields, const ScaleSet& scales) {
    StatCurve c;
    c.kind = CurveKind::Skewness;
    for (int64_t l : scales.scales) {
        double s2 = structure_function(fields, l, 2);
        double s3 = structure_function(fields, l, 3);
        if (s2 <= kEpsStat)
            throw DegenerateStatsError("S2(" + std::to_string(l) + ") is degenerate");
        c.scales.push_back(double(l));
        c.values.push_back(s3 / std::pow(s2, 1.5));
    }
    return c;
}

StatCurve flatness_curve(const FieldSet& fields, const ScaleSet& scales) {
    StatCurve c;
    c.kind = CurveKind::Flatness;
    for (int64_t l : scales.scales) {
        double s2 = structure_function(fields, l, 2);
        double s4 = structure_function(fields, l, 4);
        if (s2 <= kEpsStat)
            throw DegenerateStatsError("S2(" + std::to_string(l) + ") is degenerate");
        c.scales.push_back(double(l));
        c.values.push_back(s4 / (s2 * s2));
    }
    return c;
}

EnsembleStats ensemble_statistics(const FieldSet& fields, const ScaleSet& scales) {
    if (fields.empty()) throw ContractError("empty field set");
    EnsembleStats es;
    es.scales = scales.scales;
    size_t R = fields.size();
    for (int64_t l : scales.scales) {
        std::vector<double> ls2, sk, lf3;
        ls2.reserve(R);
        sk.reserve(R);
        lf3.reserve(R);
        for (const Field& f : fields) {
            double s2 = structure_function(std::span<const double>(f), l, 2);
            double s3 = structure_function(std::span<const double>(f), l, 3);
            double s4 = structure_function(std::span<const double>(f), l, 4);
            if (s2 <= kEpsStat)
                throw DegenerateStatsError("S2(" + std::to_string(l) + ") is degenerate");
            ls2.push_back(std::log(s2));
            sk.push_back(s3 / std::pow(s2, 1.5));
            lf3.push_back(std::log(s4 / (s2 * s2) / 3.0));
        }
        auto mean_std = [R](const std::vector<double>& v) {
            double m = 0.0;
            for (double x : v) m += x;
            m /= double(R);
            double s = 0.0;
            for (double x : v) s += (x - m) * (x - m);
            double sd = R > 1 ? std::sqrt(s / double(R - 1)) : 0.0;
            return std::pair<double, double>(m, sd);
        };
        auto [m2, d2] = mean_std(ls2);
        auto [ms, ds] = mean_std(sk);
        auto [mf, df] = mean_std(lf3);
        es.logS2_mean.push_back(m2);
        es.logS2_std.push_back(d2);
        es.skew_mean.push_back(ms);
        es.skew_std.push_back(ds);
        es.logF3_mean.push_back(mf);
        es.logF3_std.push_back(df);
    }
    return es;
}

double kl_to_standard_gaussian(const FieldSet& fields, const KlParams& kp) {
    if (fields.empty()) throw ContractError("empty field set");
    size_t n = 0;
    for (const Field& f : fields) n += f.size();
    Tensor3 pooled(1, 1, int64_t(n));
    size_t i = 0;
    for (const Field& f : fields)
        for (double v : f) pooled.data[i++] = v;
    return kl_to_standard_gaussian_var(constant(std::move(pooled)), kp).item();
}

IncrementPdf increment_pdf(const FieldSet& fields, int64_t l, int bins, double range) {
    std::vector<double> incr;
    for (const Field& f : fields) {
        auto d = increments(std::span<const double>(f), l);
        incr.insert(incr.end(), d.begin(), d.end());
    }
    if (int64_t(incr.size()) < int64_t(10) * bins)
        throw ContractError("increment_pdf: need >= " + std::to_string(10 * bins) +
                            " pooled increments, got " + std::to_string(incr.size()));
    double m = 0.0;
    for (double v : incr) m += v;
    m /= double(incr.size());
    double var = 0.0;
    for (double v : incr) var += (v - m) * (v - m);
    var /= double(incr.size());
    if (var <= kEpsStat) throw DegenerateStatsError("increment variance is degenerate");
    double invsd = 1.0 / std::sqrt(var);

    IncrementPdf pdf;
    pdf.scale = l;
    pdf.range = range;
    pdf.bins = bins;
    double binw = 2.0 * range / double(bins);
    std::vector<int64_t> counts(size_t(bins), 0);
    int64_t inside = 0;
    for (double v : incr) {
        double z = (v - m) * invsd;
        if (z < -range || z >= range) continue;
        auto j = int64_t((z + range) / binw);
        j = std::clamp<int64_t>(j, 0, bins - 1);
        counts[size_t(j)] += 1;
        inside += 1;
    }
    for (int j = 0; j < bins; ++j) {
        pdf.bin_centers.push_back(-range + (j + 0.5) * binw);
        if (counts[size_t(j)] == 0) {
            pdf.log_density.push_back(kSentinelLogDensity);
        } else {
            double dens = double(counts[size_t(j)]) / (double(incr.size()) * binw);
            pdf.log_density.push_back(std::log(dens));
        }
    }
    (void)inside;
    return pdf;
}

SlopeFit fit_loglog_slope(const StatCurve& curve, double lmin, double lmax) {
    if (curve.kind == CurveKind::Skewness || curve.kind == CurveKind::Flatness)
        throw ContractError("fit_loglog_slope is defined only for log-valued curves");
    std::vector<double> xs, ys;
    for (size_t i = 0; i < curve.scales.size(); ++i) {
        double l = curve.scales[i];
        if (l >= lmin && l <= lmax) {
            xs.push_back(std::log(l));
            ys.push_back(curve.values[i]);
        }
    }
    if (xs.size() < 3)
        throw FitError("need >= 3 scales in window [" + std::to_string(lmin) + ", " +
                       std::to_string(lmax) + "], got " + std::to_string(xs.size()));
    double n = double(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-30) throw FitError("degenerate scale window");
    SlopeFit fit;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    double rss = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        double r = ys[i] - (fit.slope * xs[i] + fit.intercept);
        rss += r * r;
    }
    fit.rms_residual = std::sqrt(rss / n);
    return fit;
}

// ------------------------------------------------------- differentiable path

Var increments_var(const Var& fields, int64_t l) {
    int64_t n = fields.v().length;
    if (l < 1 || l >= n) throw ScaleError("scale out of range");
    return sub(slice_x(fields, l, n - l), slice_x(fields, 0, n - l));
}

Var structure_function_var(const Var& fields, int64_t l, int p) {
    if (p < 1) throw ContractError("structure_function requires p >= 1");
    return mean_all(pow_int(increments_var(fields, l), p));
}

Var skewness_var(const Var& fields, int64_t l, double eps_stat) {
    Var d = increments_var(fields, l);
    Var s2 = mean_all(pow_int(d, 2));
    Var s3 = mean_all(pow_int(d, 3));
    Var denom = pow_real(add_scalar(s2, eps_stat), 1.5);
    return div(s3, denom);
}

Var flatness_var(const Var& fields, int64_t l, double eps_stat) {
    Var d = increments_var(fields, l);
    Var s2 = mean_all(pow_int(d, 2));
    Var s4 = mean_all(pow_int(d, 4));
    Var denom = pow_int(add_scalar(s2, eps_stat), 2);
    return div(s4, denom);
}

Var kl_to_standard_gaussian_var(const Var& fields, const KlParams& kp, bool guard) {
    Var m = mean_all(fields);
    Var centered = sub(fields, m);
    Var var = mean_all(pow_int(centered, 2));
    if (!guard && var.item() <= kEpsStat)
        throw DegenerateStatsError("zero variance in pooled values");
    Var sd = pow_real(guard ? add_scalar(var, kEpsStat) : var, 0.5);
    Var z = div(centered, sd);
    Var p = soft_histogram(z, kp.bins, kp.range, kp.bandwidth);
    return kl_divergence_var(p, gaussian_bin_masses(kp.bins, kp.range), kp.eps_floor);
}

}  // namespace turbstoch
