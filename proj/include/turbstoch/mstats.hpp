#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "turbstoch/ops.hpp"
#include "turbstoch/tape.hpp"

namespace turbstoch {

// Ordered set of integer analysis scales (units of the sampling distance).
struct ScaleSet {
    std::vector<int64_t> scales;

    ScaleSet() = default;
    explicit ScaleSet(std::vector<int64_t> s);

    // ~count log-spaced integer scales in [lmin, lmax], deduplicated
    static ScaleSet log_spaced(int64_t lmin, int64_t lmax, int count);

    size_t size() const { return scales.size(); }
};

enum class CurveKind { LogS2, Skewness, LogF3, Flatness };

struct StatCurve {
    std::vector<double> scales;
    std::vector<double> values;
    CurveKind kind = CurveKind::LogS2;
    std::vector<double> stddev;  // optional ensemble spread
};

struct IncrementPdf {
    int64_t scale = 0;
    double range = 10.0;
    int bins = 201;
    std::vector<double> bin_centers;
    std::vector<double> log_density;  // kSentinelLogDensity marks empty bins
};

inline constexpr double kSentinelLogDensity = -999.0;
inline constexpr double kEpsStat = 1e-12;

// Soft-histogram KL surrogate parameters (bins on [-range, range]).
struct KlParams {
    int bins = 100;
    double range = 6.0;
    double bandwidth = 0.06;  // half a bin width
    double eps_floor = 1e-12;
};

using Field = std::vector<double>;
using FieldSet = std::vector<Field>;

// ---- analysis path (plain) ----

std::vector<double> increments(std::span<const double> field, int64_t l);

// Mean over all positions of all fields of (increment)^p.
double structure_function(const FieldSet& fields, int64_t l, int p);
double structure_function(std::span<const double> field, int64_t l, int p);

StatCurve skewness_curve(const FieldSet& fields, const ScaleSet& scales);
StatCurve flatness_curve(const FieldSet& fields, const ScaleSet& scales);

// Per-realization curves reduced to mean and standard deviation across the
// ensemble. Rows align with `scales`.
struct EnsembleStats {
    std::vector<int64_t> scales;
    std::vector<double> logS2_mean, logS2_std;
    std::vector<double> skew_mean, skew_std;
    std::vector<double> logF3_mean, logF3_std;
};
EnsembleStats ensemble_statistics(const FieldSet& fields, const ScaleSet& scales);

double kl_to_standard_gaussian(const FieldSet& fields, const KlParams& kp = {});

IncrementPdf increment_pdf(const FieldSet& fields, int64_t l, int bins = 201,
                           double range = 10.0);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double rms_residual = 0.0;
};
// OLS of curve value vs log(l) over scales in [lmin, lmax]. Only valid for
// curves whose value is already a log (LogS2, LogF3).
SlopeFit fit_loglog_slope(const StatCurve& curve, double lmin, double lmax);

// ---- differentiable path ----

// fields: (B, 1, N). Pools over batch and position jointly.
Var increments_var(const Var& fields, int64_t l);
Var structure_function_var(const Var& fields, int64_t l, int p);
// S3 / S2^{3/2} with the denominator guarded at eps_stat.
Var skewness_var(const Var& fields, int64_t l, double eps_stat = kEpsStat);
// S4 / S2^2, same guard.
Var flatness_var(const Var& fields, int64_t l, double eps_stat = kEpsStat);
// Centers and standardizes pooled values, soft-histograms them, and returns
// the KL against the standard Gaussian binned on the same grid. With
// guard=false a zero-variance input raises a degenerate-statistics error;
// with guard=true the variance is floored at eps_stat instead (training path).
Var kl_to_standard_gaussian_var(const Var& fields, const KlParams& kp = {}, bool guard = false);

}  // namespace turbstoch
