#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chronon/correlator.hpp"

namespace chronon {

/// Parameters of the cascade correlation-peak model
///   f(t) = A (1 - e^{-(t-t0)/tau_rise}) e^{-(t-t0)/tau_decay}
///            (1 + B cos(omega (t-t0) + phi)) + C         for t >= t0,
///   f(t) = C                                             for t <  t0.
struct CascadeParams {
    double amplitude = 0.0;        // A
    double osc_amplitude = 0.0;    // B
    double tau_rise_ps = 0.0;
    double tau_decay_ps = 0.0;
    double omega_rad_per_ps = 0.0;
    double phase_rad = 0.0;
    double background = 0.0;       // C
    double t0_ps = 0.0;

    static constexpr int count = 8;
    std::array<double, count> to_array() const;
    static CascadeParams from_array(const std::array<double, count>& a);
};

double cascade_model(const CascadeParams& p, double t_ps);

/// Simpson-rule mean of the model over one bin. Histogram counts are bin
/// integrals, so the fit compares against this rather than point samples;
/// with steep rise edges the difference is a whole bin.
double cascade_model_bin_mean(const CascadeParams& p, double t_lo_ps, double t_hi_ps);

/// Analytic partial derivatives of the model at one point, in the order of
/// CascadeParams::to_array.
std::array<double, CascadeParams::count> cascade_model_gradient(const CascadeParams& p,
                                                                double t_ps);

struct CascadeFit {
    CascadeParams value;
    CascadeParams stderr_;               // one-sigma per parameter
    double tau_max_ps = 0.0;             // argmax of the fitted model
    double tau_max_err_ps = 0.0;
    double rss = 0.0;
    double chi2_reduced = 0.0;
    int iterations = 0;
    bool converged = false;
    std::array<bool, CascadeParams::count> at_bound{};
};

struct CascadeFitOptions {
    /// omega used for the initial guess when no init is given (default:
    /// the 878 ps fine-structure beat of the reference source).
    double init_omega_rad_per_ps = 2.0 * 3.14159265358979323846 / 878.06;
    int max_iterations = 1200;
};

/// Weighted (Poisson, sigma^2 = max(counts, 1)) least-squares fit of the
/// cascade model to a histogram that contains a located peak.
CascadeFit fit_cascade(const CorrelationHistogram& h,
                       const std::optional<CascadeParams>& init = std::nullopt,
                       const CascadeFitOptions& options = {});

/// g2 pulse-train fit: a comb of two-sided exponential peaks at multiples of
/// the repetition period, side peaks modulated by a bunching envelope
/// 1 + b e^{-|t|/tau_b}, all convolved with a Gaussian instrument response.
struct G2Fit {
    std::vector<int> peak_indices;        // pulse index k per amplitude
    std::vector<double> peak_amplitudes;  // model a_k
    double center_amplitude = 0.0;        // a_0
    double side_amplitude = 0.0;          // asymptotic side-peak amplitude
    double tau_decay_ps = 0.0;
    double tau_decay_err_ps = 0.0;
    double blinking_amplitude = 0.0;
    double blinking_time_ps = 0.0;
    double baseline = 0.0;
    double irf_sigma_ps = 0.0;
    /// Center/side area ratio over one pulse period: the center window
    /// (fitted a_0 peak + uncorrelated floor) against the mean far side-peak
    /// window (|k| >= 5, outside the blinking envelope).
    double g2_zero = 0.0;
    double g2_zero_err = 0.0;
    double rss = 0.0;
    double chi2_reduced = 0.0;
    bool converged = false;
};

enum class IrfWidthConvention { Sigma, Fwhm };

struct G2FitOptions {
    double irf_width_ps = 50.0;
    IrfWidthConvention irf_convention = IrfWidthConvention::Sigma;
    int far_peak_min_index = 5;
    int max_iterations = 400;
};

G2Fit fit_g2(const CorrelationHistogram& h, double rep_period_ps,
             const G2FitOptions& options = {});

/// Per-bin residuals and reduced chi-square (Poisson weights on the model).
std::string residual_report(const CascadeFit& fit, const CorrelationHistogram& h);
std::string residual_report(const G2Fit& fit, const CorrelationHistogram& h,
                            double rep_period_ps);

/// Model value of the fitted g2 comb at time t (exposed for the report and
/// the tests).
double g2_model(const G2Fit& fit, double rep_period_ps, double t_ps);

}  // namespace chronon
