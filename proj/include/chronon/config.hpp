#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "chronon/correlator.hpp"
#include "chronon/peakfit.hpp"
#include "chronon/qdsim.hpp"
#include "chronon/tomography.hpp"

namespace chronon {

/// Full run configuration, loaded from a sectioned key=value text file.
/// Unknown sections or keys are rejected. `chronon --help-config` prints
/// every key with its default.
struct RunConfig {
    qdsim::SourceParams source;
    qdsim::LinkParams link;
    qdsim::ClockParams clock;
    std::string measurement_label = "none";

    // [run]
    double duration_s = 60.0;
    std::uint64_t seed = 1;
    int threads = 0;

    // [correlator]
    std::int64_t bin_width_ps = 16;
    std::int64_t oneway_window_lo_ps = -200'000'000'000;  // +-0.2 s coarse search
    std::int64_t oneway_window_hi_ps = 200'000'000'000;
    std::int64_t roundtrip_window_lo_ps = -1'000'000'000;
    std::int64_t roundtrip_window_hi_ps = 1'000'000'000;
    FindPeakOptions peak;
    int fit_halfwidth_bins = 600;  // histogram half width around each peak

    // [sync]
    std::int64_t coarse_offset_s = 0;
    /// Absent -> self-calibrated from the round-trip cascade shape.
    std::optional<double> kappa_ps;
    double delay_ratio_tolerance = 0.1;

    // [g2]
    bool g2_enabled = false;
    int g2_channel = 0;
    double g2_rep_period_ps = 12500.0;
    int g2_periods = 10;
    std::int64_t g2_bin_width_ps = 100;
    G2FitOptions g2_fit;

    // [tomography]
    bool tomo_enabled = false;
    double tomo_duration_s = 5.0;
    tomo::TomoConfig tomo;
    tomo::WaveplateCorrection waveplate;
};

RunConfig load_config(const std::filesystem::path& path);

/// The full key reference with defaults, printed by `--help-config`.
std::string config_reference();

}  // namespace chronon
