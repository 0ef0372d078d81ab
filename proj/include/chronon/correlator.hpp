#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "chronon/errors.hpp"

namespace chronon {

/// Binned coincidence counts C(tau) over [tau_start, tau_start + nbins*w).
/// The bin width doubles as the width Delta of the rectangular coincidence
/// kernel: bins tile the axis, so every pair lands in exactly one bin.
struct CorrelationHistogram {
    std::int64_t tau_start_ps = 0;
    std::int64_t bin_width_ps = 1;
    std::vector<std::uint64_t> counts;
    std::uint64_t n_a = 0;  // tag counts the histogram was built from
    std::uint64_t n_b = 0;
    std::int64_t window_delta_ps = 1;  // == bin_width_ps

    std::size_t size() const { return counts.size(); }
    std::int64_t tau_end_ps() const {
        return tau_start_ps + static_cast<std::int64_t>(counts.size()) * bin_width_ps;
    }
    double bin_center_ps(std::size_t k) const {
        return static_cast<double>(tau_start_ps) +
               (static_cast<double>(k) + 0.5) * static_cast<double>(bin_width_ps);
    }
    std::uint64_t total_counts() const;
};

/// Cross-correlation of two sorted timestamp channels: counts[k] is the
/// number of pairs (i, j) with t_a[i] - t_b[j] in bin k. Exactly equal to
/// the brute-force double loop; computed by a linear two-pointer sweep
/// (or an equivalent per-bin merge when that is cheaper).
///
/// `threads` <= 0 means use all hardware threads. Results are independent
/// of the thread count.
CorrelationHistogram correlate(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> b,
                               std::int64_t tau_start_ps, std::int64_t tau_end_ps,
                               std::int64_t bin_width_ps, int threads = 0);

/// counts / sqrt(n_a * n_b), elementwise.
std::vector<double> g2_normalize(const CorrelationHistogram& h);

/// Correlation of a channel with itself, excluding the i == j self-pairs.
/// The two-detector split-signal measurement is just correlate() on the two
/// split channels.
CorrelationHistogram autocorrelate(std::span<const std::uint64_t> a,
                                   std::int64_t tau_start_ps, std::int64_t tau_end_ps,
                                   std::int64_t bin_width_ps, int threads = 0);

struct PeakSearchStage {
    std::int64_t bin_width_ps = 0;
    std::int64_t tau_ps = 0;       // center of the maximum bin
    double significance = 0.0;
    std::uint64_t peak_counts = 0;
    std::int64_t thinning = 1;     // stride applied to both channels
};

struct PeakSearchResult {
    std::int64_t tau_peak_ps = 0;
    double significance = 0.0;
    std::vector<PeakSearchStage> refined_stages;  // coarse to fine
};

struct FindPeakOptions {
    std::int64_t initial_bin_ps = 1'000'000'000;  // 1 ms
    std::int64_t refine_factor = 100;
    int recenter_halfwidth_bins = 50;
    double significance_threshold = 5.0;
    /// Rough per-stage operation budget; coarse stages stride-thin both
    /// channels to stay under it. The final stage never thins.
    double stage_work_budget = 8e7;
    /// How far the correlation signal can extend past its maximum; sets the
    /// exclusion zone of the local background estimate at fine bin widths.
    std::int64_t signal_extent_ps = 8000;
    int threads = 0;
};

/// Locates a correlation peak inside a wide search window by correlating at
/// successively finer bin widths, re-centering around the running maximum.
/// Throws NoPeakError (with per-stage diagnostics) if any stage fails the
/// significance threshold.
PeakSearchResult find_peak(std::span<const std::uint64_t> a,
                           std::span<const std::uint64_t> b,
                           std::int64_t window_lo_ps, std::int64_t window_hi_ps,
                           std::int64_t target_bin_ps,
                           const FindPeakOptions& options = {});

/// Robust background estimate of a histogram: median and scaled MAD of the
/// bins excluding +-exclude_halfwidth around the maximum. Used for the peak
/// significance. Returned as (median, sigma).
std::pair<double, double> histogram_background(const CorrelationHistogram& h,
                                               int exclude_halfwidth = 3);

}  // namespace chronon
