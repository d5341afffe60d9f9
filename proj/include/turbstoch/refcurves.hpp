#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "turbstoch/mstats.hpp"

namespace turbstoch {

// Parametric K41/KO62-style reference model: Batchelor-type crossovers for S2
// (slopes 2 -> zeta2 -> 0 across the dissipative/inertial/integral domains),
// a negative near-constant inertial skewness with dissipative steepening, and
// lognormal-intermittency flatness with inertial slope -4*c2.
struct ReferenceModelParams {
    double eta = 5.0;     // dissipative scale, units of the sampling distance
    double L = 2350.0;    // integral scale
    double c2 = 0.025;    // intermittency coefficient
    double sigma2 = 1.0;  // large-scale variance
    double s0 = 0.25;     // inertial skewness magnitude
    double nu = 0.3;      // dissipative skewness steepening
    double kappa = 0.5;   // dissipative flatness steepening

    double zeta2() const { return 2.0 / 3.0 + c2; }
    void validate() const;
};

struct ReferenceCurves {
    std::vector<double> scales;
    std::vector<double> logS2;
    std::vector<double> skew;
    std::vector<double> logF3;  // log(F/3)

    StatCurve log_s2_curve() const { return {scales, logS2, CurveKind::LogS2, {}}; }
    StatCurve log_f3_curve() const { return {scales, logF3, CurveKind::LogF3, {}}; }
};

// Pointwise model evaluation (any real scale > 0).
double ref_log_s2(const ReferenceModelParams& p, double l);
double ref_skewness(const ReferenceModelParams& p, double l);
double ref_log_f3(const ReferenceModelParams& p, double l);

ReferenceCurves synth_reference(const ReferenceModelParams& params,
                                const std::vector<double>& scales);
ReferenceCurves synth_reference(const ReferenceModelParams& params, const ScaleSet& scales);

// CSV with header "scale,logS2,skew,logF3", scales strictly increasing.
ReferenceCurves load_reference_csv(const std::string& path);
void write_reference_csv(const ReferenceCurves& curves, const std::string& path);

// Piecewise-linear interpolation of each curve in log(l). Targets outside the
// source range raise a range error.
ReferenceCurves resample_to_scales(const ReferenceCurves& curves,
                                   const std::vector<double>& target);

// Synthetic test fields (acceptance oracles).
Field make_iid_gaussian_field(int64_t n, uint64_t seed);
// Real field with amplitude spectrum |k|^(-beta/2), random phases, unit
// variance; n must be a power of two. beta = 5/3 gives a self-similar field
// with fitted zeta2 = 2/3.
Field make_power_law_field(double beta, int64_t n, uint64_t seed);

}  // namespace turbstoch
