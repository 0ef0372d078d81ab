#include "chronon/syncproto.hpp"

#include <cmath>

namespace chronon {

namespace {
constexpr double kSpeedOfLight = 299792458.0;  // m/s, exact
}

SyncReport compute_sync(const CascadeFit& fit_oneway, const CascadeFit& fit_roundtrip,
                        std::int64_t coarse_offset_s, double kappa_ps) {
    if (!fit_oneway.converged || !fit_roundtrip.converged)
        throw ArgumentError("compute_sync: both fits must have converged");
    const double tau1 = fit_oneway.tau_max_ps;
    const double taurt = fit_roundtrip.tau_max_ps;
    if (!std::isfinite(tau1) || !std::isfinite(taurt))
        throw ArgumentError("compute_sync: non-finite peak positions");
    if (std::fabs(tau1) >= 0.5e12)
        throw ProtocolError(
            "compute_sync: one-way peak exceeds 0.5 s; coarse offset inconsistent "
            "with the located peak");

    SyncReport r;
    r.tau_one_way_ps = tau1;
    r.tau_one_way_err_ps = fit_oneway.tau_max_err_ps;
    r.tau_round_trip_ps = taurt;
    r.tau_round_trip_err_ps = fit_roundtrip.tau_max_err_ps;
    r.coarse_offset_s = coarse_offset_s;
    r.kappa_ps = kappa_ps;
    r.raw_fine_ps = tau1;
    r.compensated_fine_ps = tau1 - taurt / 2.0 - kappa_ps;
    r.raw_offset_s = static_cast<double>(coarse_offset_s) + tau1 * 1e-12;
    r.compensated_offset_s = r.raw_offset_s - (taurt / 2.0) * 1e-12 - kappa_ps * 1e-12;
    r.offset_err_ps = std::sqrt(fit_oneway.tau_max_err_ps * fit_oneway.tau_max_err_ps +
                                0.25 * fit_roundtrip.tau_max_err_ps *
                                    fit_roundtrip.tau_max_err_ps);
    return r;
}

double cascade_shape_kappa_ps(const CascadeFit& fit_oneway,
                              const CascadeFit& fit_roundtrip) {
    const double shape_oneway = fit_oneway.tau_max_ps - fit_oneway.value.t0_ps;
    const double shape_roundtrip = fit_roundtrip.tau_max_ps - fit_roundtrip.value.t0_ps;
    return shape_oneway - shape_roundtrip / 2.0;
}

DelayVerification verify_delay_insertion(const SyncReport& before,
                                         const SyncReport& after, double tolerance) {
    for (const SyncReport* r : {&before, &after})
        if (!std::isfinite(r->tau_one_way_ps) || !std::isfinite(r->tau_round_trip_ps))
            throw ArgumentError("verify_delay_insertion: report is missing a fit");

    DelayVerification v;
    v.tolerance = tolerance;
    v.one_way_shift_ps = after.tau_one_way_ps - before.tau_one_way_ps;
    v.one_way_shift_err_ps =
        std::hypot(after.tau_one_way_err_ps, before.tau_one_way_err_ps);
    v.round_trip_shift_ps = after.tau_round_trip_ps - before.tau_round_trip_ps;
    v.round_trip_shift_err_ps =
        std::hypot(after.tau_round_trip_err_ps, before.tau_round_trip_err_ps);
    if (v.one_way_shift_ps == 0.0)
        throw ArgumentError("verify_delay_insertion: zero one-way shift, nothing inserted?");
    v.ratio = v.round_trip_shift_ps / v.one_way_shift_ps;
    const double rel1 = v.one_way_shift_err_ps / std::fabs(v.one_way_shift_ps);
    const double rel2 = v.round_trip_shift_err_ps /
                        std::max(std::fabs(v.round_trip_shift_ps), 1e-300);
    v.ratio_err = std::fabs(v.ratio) * std::hypot(rel1, rel2);
    v.pass = std::fabs(v.ratio - 2.0) < tolerance;
    return v;
}

double path_length_from_roundtrip_m(double tau_rt_ps, double group_index) {
    if (tau_rt_ps < 0.0) throw ArgumentError("path length: negative round-trip time");
    if (group_index < 1.0) throw ArgumentError("path length: group index must be >= 1");
    return tau_rt_ps * 1e-12 * kSpeedOfLight / (2.0 * group_index);
}

TagStream apply_offset(const TagStream& stream, const SyncReport& report,
                       ApplyOffsetSummary* summary) {
    if (!std::isfinite(report.compensated_fine_ps))
        throw ArgumentError("apply_offset: non-finite offset");
    const __int128 offset =
        static_cast<__int128>(report.coarse_offset_s) * 1000000000000LL +
        static_cast<__int128>(std::llround(report.compensated_fine_ps));

    std::vector<TimeTag> tags = stream.tags();
    std::uint64_t clamped = 0;
    for (TimeTag& t : tags) {
        const __int128 shifted = static_cast<__int128>(t.time_ps) - offset;
        if (shifted < 0) {
            t.time_ps = 0;
            ++clamped;
        } else {
            t.time_ps = static_cast<std::uint64_t>(shifted);
        }
    }
    if (summary) summary->clamped = clamped;
    return TagStream(std::move(tags), stream.channel_count(), stream.label(),
                     stream.nominal_duration_s());
}

}  // namespace chronon
