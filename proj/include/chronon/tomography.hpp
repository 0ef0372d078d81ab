#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "chronon/correlator.hpp"
#include "chronon/qdsim.hpp"
#include "chronon/timetags.hpp"

namespace chronon::tomo {

using qdsim::MeasurementConfig;
using qdsim::Pol;

/// 4x4 complex density matrix over the (HH, HV, VH, VV) product basis,
/// exciton first. Hermitian, unit trace, positive semidefinite.
using DensityMatrix = Eigen::Matrix4cd;

/// |Phi+> = (|HH> + |VV>)/sqrt2 as a basis vector.
Eigen::Vector4cd phi_plus();

struct ProjectionCounts {
    Pol x = Pol::H;
    Pol xx = Pol::H;
    std::uint64_t coincidences = 0;
    double accidental_estimate = 0.0;
};

using SettingCounts = std::array<ProjectionCounts, 16>;

/// Coincidence counts per time bin for each of the 16 settings. The window
/// starts at `window_start_tau_ps` on the (X channel - XX channel) delay
/// axis and spans `window_bins` bins of `bin_width_ps`.
std::vector<SettingCounts> project_coincidences(
    const std::vector<std::pair<MeasurementConfig, const TagStream*>>& streams,
    std::int64_t window_start_tau_ps, std::int64_t bin_width_ps, int window_bins,
    std::uint16_t channel_x = 1, std::uint16_t channel_xx = 0, int threads = 0);

struct MleOptions {
    int restarts = 5;          // random restarts beyond the deterministic init
    double cost_tol = 1e-10;   // relative cost tolerance of the optimizer
    int max_iterations = 400;
    std::uint64_t seed = 2;
    /// Optional warm start (16 T parameters) tried before anything else.
    std::optional<std::array<double, 16>> warm_start;
};

/// Maximum-likelihood reconstruction: rho = T^dagger T / tr(T^dagger T) with
/// T lower-triangular (16 real parameters), minimizing the Poissonian cost
/// sum_nu (N p_nu - n_nu)^2 / (2 N p_nu) with the flux N profiled out
/// analytically. The output satisfies the density-matrix invariants by
/// construction.
DensityMatrix mle_reconstruct(const SettingCounts& counts, const MleOptions& options = {});

/// Same, additionally returning the optimal T parameters for warm starts.
DensityMatrix mle_reconstruct_t(const SettingCounts& counts, const MleOptions& options,
                                std::array<double, 16>& t_out);

struct WaveplateCorrection {
    double theta_rad = 0.0;
    double phi_rad = 0.0;
    enum class Target { Exciton, Biexciton, Both };
    Target target = Target::Exciton;
};

/// Virtual waveplate: rho' = (U x I) rho (U x I)^dagger for the exciton
/// target (first qubit), (I x U) for the biexciton, (U x U) for both.
DensityMatrix apply_waveplate(const DensityMatrix& rho, const WaveplateCorrection& corr);

/// <target| rho |target>, clamped to [0, 1].
double fidelity(const DensityMatrix& rho, const Eigen::Vector4cd& target);

/// Wootters concurrence: max(0, l1 - l2 - l3 - l4) with l_i the descending
/// square roots of the eigenvalues of rho (sy x sy) rho* (sy x sy).
double concurrence(const DensityMatrix& rho);

struct TimeBin {
    int index = 0;
    std::int64_t tau_ps = 0;  // bin start on the delay axis
    SettingCounts counts{};
    std::uint64_t total_counts = 0;
    DensityMatrix rho = DensityMatrix::Zero();
    double fidelity = 0.0;
    double fidelity_err = 0.0;
    double concurrence = 0.0;
    double concurrence_err = 0.0;
    bool valid = false;
};

struct TimeBinSeries {
    std::int64_t bin_width_ps = 16;
    std::vector<TimeBin> bins;
};

struct TomoConfig {
    std::int64_t bin_width_ps = 16;
    int window_bins = 192;
    /// Start of the analysis window on the delay axis; when absent the
    /// summed coincidence peak is located automatically.
    std::optional<std::int64_t> window_start_tau_ps;
    int mc_resamples = 100;  // Poisson resamples for the per-bin error bars
    std::uint64_t min_counts = 16;  // below this a bin is marked invalid
    MleOptions mle;
    int threads = 0;
    std::uint64_t seed = 7;
    std::uint16_t channel_x = 1;
    std::uint16_t channel_xx = 0;
};

/// Per-time-bin reconstruction -> waveplate correction -> fidelity and
/// concurrence with Monte-Carlo error bars.
TimeBinSeries tomo_timeseries(
    const std::vector<std::pair<MeasurementConfig, const TagStream*>>& streams,
    const WaveplateCorrection& corr, const TomoConfig& config);

/// Expected Born probability of one projective setting on rho.
double setting_probability(const DensityMatrix& rho, Pol x, Pol xx);

}  // namespace chronon::tomo
