#pragma once

#include <filesystem>
#include <optional>

#include "chronon/config.hpp"
#include "chronon/qdsim.hpp"
#include "chronon/reports.hpp"
#include "chronon/syncproto.hpp"

namespace chronon {

/// Everything the closed loop produced: located peaks, fits, sync report and
/// the comparison against the simulator ground truth.
struct PipelineResult {
    qdsim::GroundTruth truth;
    PeakSearchResult oneway_peak;
    PeakSearchResult roundtrip_peak;
    CorrelationHistogram oneway_hist;
    CorrelationHistogram roundtrip_hist;
    CascadeFit oneway_fit;
    CascadeFit roundtrip_fit;
    SyncReport sync;

    double truth_offset_ps = 0.0;      // injected subscriber-minus-master
    double recovered_offset_ps = 0.0;  // coarse*1e12 + compensated fine
    double offset_error_ps = 0.0;      // |recovered - truth|
    double offset_tolerance_ps = 0.0;  // max(3 sigma_fit, 20 ps)
    bool offset_pass = false;

    std::optional<G2Fit> g2;
    std::optional<tomo::TimeBinSeries> tomo_series;
};

/// Runs simulate -> find peaks -> correlate -> fit -> sync (and optionally
/// g2 / tomography) on one config. When out_dir is non-empty, writes the
/// tag stream, histograms, fit/sync JSONs, ground truth and a consolidated
/// report there.
PipelineResult run_pipeline(const RunConfig& config,
                            const std::filesystem::path& out_dir = {});

/// Sync analysis (peaks, histograms, fits, report) of an existing stream.
/// Fills the peak/hist/fit/sync members of the result; the ground-truth
/// comparison members are left zero unless `truth` is given.
PipelineResult analyze_sync(const TagStream& stream, const RunConfig& config,
                            const qdsim::GroundTruth* truth = nullptr);

nlohmann::json pipeline_report_json(const PipelineResult& r);

}  // namespace chronon
