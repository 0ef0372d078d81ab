#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "chronon/peakfit.hpp"
#include "chronon/timetags.hpp"

namespace chronon {

/// Combined result of the one-way and round-trip peak measurements.
/// Sign convention: the one-way correlation is (X at the subscriber) minus
/// (XX at the master), so its peak sits at propagation + clock offset where
/// offset = subscriber clock minus master clock.
struct SyncReport {
    double tau_one_way_ps = 0.0;
    double tau_one_way_err_ps = 0.0;
    double tau_round_trip_ps = 0.0;
    double tau_round_trip_err_ps = 0.0;
    std::int64_t coarse_offset_s = 0;   // a-priori integer seconds
    double kappa_ps = 0.0;              // path-asymmetry calibration constant

    double raw_offset_s = 0.0;          // coarse + tau_one_way
    double compensated_offset_s = 0.0;  // raw - tau_round_trip/2 - kappa
    /// Picosecond-exact fine parts (the seconds fields above lose
    /// sub-nanosecond resolution once coarse_offset_s is large).
    double raw_fine_ps = 0.0;
    double compensated_fine_ps = 0.0;
    double offset_err_ps = 0.0;         // quadrature of the two tau errors

    std::optional<double> inserted_delay_estimate_ps;
};

/// Builds the report from the two cascade fits. The peak position of each
/// correlation is the fitted model maximum (tau_max).
///
/// kappa folds every residual path asymmetry (circulator, cables, cascade
/// shape bookkeeping) into one constant. compute_sync uses it as given;
/// cascade_shape_kappa_ps() provides the self-calibrated value the pipeline
/// uses by default.
SyncReport compute_sync(const CascadeFit& fit_oneway, const CascadeFit& fit_roundtrip,
                        std::int64_t coarse_offset_s, double kappa_ps);

/// Self-calibrated kappa from the fitted cascade shapes:
///   (tau_max_1 - t0_1) - (tau_max_rt - t0_rt) / 2.
/// With this value, raw - rt/2 - kappa collapses to t0_1 - t0_rt/2, i.e.
/// the rise onsets carry the timing and the shape offsets cancel exactly,
/// whatever their statistical or model bias.
double cascade_shape_kappa_ps(const CascadeFit& fit_oneway,
                              const CascadeFit& fit_roundtrip);

struct DelayVerification {
    double one_way_shift_ps = 0.0;
    double one_way_shift_err_ps = 0.0;
    double round_trip_shift_ps = 0.0;
    double round_trip_shift_err_ps = 0.0;
    double ratio = 0.0;
    double ratio_err = 0.0;
    double tolerance = 0.1;
    bool pass = false;
};

/// Compares two reports from configurations differing only by an inserted
/// delay. ratio -> 2 is the signature of a common-path delay; -> 1 of a
/// delay in the subscriber detection arm only.
DelayVerification verify_delay_insertion(const SyncReport& before,
                                         const SyncReport& after,
                                         double tolerance = 0.1);

/// One-way path length from a round-trip time: tau * c / (2 * group_index).
double path_length_from_roundtrip_m(double tau_rt_ps, double group_index);

struct ApplyOffsetSummary {
    std::uint64_t clamped = 0;  // tags that would have gone negative
};

/// Subtracts the compensated offset (coarse + fine) from every timestamp,
/// saturating at zero. Re-correlating the corrected stream against the
/// master peaks at the pure propagation delay.
TagStream apply_offset(const TagStream& stream, const SyncReport& report,
                       ApplyOffsetSummary* summary = nullptr);

}  // namespace chronon
