#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "chronon/timetags.hpp"

namespace chronon::qdsim {

/// Polarization tokens. Conventions used throughout the toolkit:
///   D = (H+V)/sqrt2, A = (H-V)/sqrt2, R = (H-iV)/sqrt2, L = (H+iV)/sqrt2.
enum class Pol { H, V, D, A, R, L };

Pol pol_from_char(char c);
char pol_to_char(Pol p);

/// Jones vector of a token in the (H, V) basis.
Eigen::Vector2cd pol_vector(Pol p);

/// Waveplate-style single-qubit unitary R(theta) diag(1, e^{i phi}) R(-theta),
/// with R a real rotation by theta. Its inverse is the same rotation with
/// phi negated.
Eigen::Matrix2cd waveplate_unitary(double theta_rad, double phi_rad);

/// Two-photon polarization state over the product basis
/// (HH, HV, VH, VV) with the exciton as the first letter / tensor factor
/// and the biexciton as the second.
struct PolarizationState {
    Eigen::Vector4cd amplitudes;

    static PolarizationState phi_plus();
    /// (|HH> + e^{i phase} |VV>) / sqrt2
    static PolarizationState phased_bell(double phase_rad);
};

/// Cascade source: 80 MHz pulsed excitation, biexciton then exciton decay,
/// fine-structure phase accrued during the exciton delay.
struct SourceParams {
    double rep_period_ps = 12500.0;
    double pair_prob = 1e-4;         // per excitation pulse
    double tau_xx_ps = 1380.0;       // biexciton lifetime
    double tau_x_ps = 1140.0;        // exciton lifetime (cross-correlation value)
    double fss_omega_rad_per_ps = 0.0;
    double blink_on_ms = 0.0;        // 0 disables blinking
    double blink_off_ms = 0.0;
    double background_rate_hz = 0.0; // uncorrelated counts, per channel
};

/// Fiber link, in-line partial reflector and detection-path constants.
struct LinkParams {
    double one_way_delay_ps = 0.0;
    double inserted_delay_ps = 0.0;  // extra common-path fiber
    double reflectance = 0.70;
    double transmit_loss_db = 0.0;
    double return_loss_db = 0.0;
    double group_index = 1.468;
    double xx_path_delay_ps = 0.0;        // biexciton detection path at the master
    double b_arm_extra_delay_ps = 0.0;    // subscriber detection arm only
    double forward_extra_delay_ps = 0.0;  // forward fiber direction only
    double return_extra_delay_ps = 0.0;   // return fiber direction only
    /// Static link birefringence acting on the transmitted exciton qubit,
    /// parameterized like the virtual waveplate (theta, phi); 0 disables.
    double birefringence_theta_rad = 0.0;
    double birefringence_phi_rad = 0.0;
};

/// Subscriber clock model and per-channel detection jitter.
struct ClockParams {
    double offset_s = 0.0;    // subscriber minus master, coarse part
    double offset_ps = 0.0;   // fine part
    double drift_ppb = 0.0;   // fractional frequency offset
    std::array<double, 3> jitter_sigma_ps = {100.0, 100.0, 100.0};

    void set_uniform_jitter(double sigma_ps) {
        jitter_sigma_ps = {sigma_ps, sigma_ps, sigma_ps};
    }
    double offset_total_ps() const { return offset_s * 1e12 + offset_ps; }
};

/// One projective setting: which polarization each arm's analyzer selects.
/// Labels are two tokens, exciton first ("DV" = exciton D, biexciton V).
/// The unpolarized config removes both analyzers (clock-sync runs).
struct MeasurementConfig {
    Pol projection_x = Pol::H;
    Pol projection_xx = Pol::H;
    std::string label = "HH";
    bool enabled = true;

    static MeasurementConfig unpolarized();
    static MeasurementConfig from_label(const std::string& label);
};

/// The 16-setting tomography default set.
std::vector<MeasurementConfig> default_tomography_settings();

/// Everything the simulator injected, for closed-loop verification.
struct GroundTruth {
    std::uint64_t seed = 0;
    double duration_s = 0.0;
    double offset_total_ps = 0.0;
    double drift_ppb = 0.0;
    double one_way_delay_ps = 0.0;
    double inserted_delay_ps = 0.0;
    double round_trip_delay_ps = 0.0;  // as applied to channel 2, both inserted passes
    /// Cascade onset on the (ch1 - ch0) delay axis, i.e. the t0 a perfect
    /// one-way fit should find.
    double expected_one_way_t0_ps = 0.0;
    /// Same for the (ch2 - ch0) axis.
    double expected_round_trip_t0_ps = 0.0;
    std::uint64_t pulses = 0;
    std::uint64_t pairs_emitted = 0;
    std::array<std::uint64_t, 3> signal_counts = {0, 0, 0};
    std::array<std::uint64_t, 3> background_counts = {0, 0, 0};
};

std::string ground_truth_report(const GroundTruth& gt);

/// Simulates one acquisition. Channels of the returned stream:
///   0 = biexciton at the master, 1 = transmitted exciton at the subscriber
///   (subscriber clock), 2 = reflected exciton back at the master.
std::pair<TagStream, GroundTruth> simulate_run(const SourceParams& src,
                                               const LinkParams& link,
                                               const ClockParams& clk,
                                               const MeasurementConfig& meas,
                                               double duration_s, std::uint64_t seed);

struct TomographyRun {
    MeasurementConfig setting;
    TagStream stream;
    GroundTruth truth;
};

/// One stream per default tomography setting, independent seeds per setting.
std::vector<TomographyRun> simulate_tomography_set(const SourceParams& src,
                                                   const LinkParams& link,
                                                   const ClockParams& clk,
                                                   double duration_s,
                                                   std::uint64_t seed);

}  // namespace chronon::qdsim
