#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>

#include "chronon/correlator.hpp"
#include "chronon/peakfit.hpp"
#include "chronon/syncproto.hpp"
#include "chronon/tomography.hpp"

namespace chronon {

/// CSV with columns (tau_ps, counts, g2) plus a JSON sidecar carrying
/// n_a, n_b and the binning parameters.
void write_histogram_csv(const CorrelationHistogram& h,
                         const std::filesystem::path& csv_path);

/// Reads a histogram written by write_histogram_csv (sidecar required).
CorrelationHistogram read_histogram_csv(const std::filesystem::path& csv_path);

nlohmann::json to_json(const CascadeFit& fit);
CascadeFit cascade_fit_from_json(const nlohmann::json& j);

nlohmann::json to_json(const G2Fit& fit);

nlohmann::json to_json(const SyncReport& report);
SyncReport sync_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DelayVerification& v);

nlohmann::json to_json(const PeakSearchResult& r);

std::string sync_summary_text(const SyncReport& report);

/// Per-bin CSV (bin, tau_ps, F, dF, C, dC, valid, counts).
void write_tomo_series_csv(const tomo::TimeBinSeries& series,
                           const std::filesystem::path& path);

/// Density matrices as JSON: one entry per valid bin with 4x4 real/imag
/// arrays.
nlohmann::json tomo_series_to_json(const tomo::TimeBinSeries& series);

void write_text_file(const std::filesystem::path& path, const std::string& content);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace chronon
