#include "chronon/correlator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <numeric>
#include <sstream>
#include <thread>

namespace chronon {

namespace {

using i128 = __int128;

int resolve_threads(int threads) {
    if (threads > 0) return threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

struct BinRange {
    i128 lo;   // pairs with d = t_a - t_b in [lo, hi) are kept
    i128 hi;
    std::int64_t width;
    std::size_t nbins;
};

// Pair-sweep: enumerate every pair inside the window. Cost ~ number of pairs.
void accumulate_pairsweep(std::span<const std::uint64_t> a,
                          std::span<const std::uint64_t> b, bool exclude_self,
                          const BinRange& r, std::size_t a_begin, std::size_t a_end,
                          std::vector<std::uint64_t>& counts) {
    // d in [lo, hi)  <=>  t_b in (t_a - hi, t_a - lo]
    std::size_t lo_j = 0, hi_j = 0;
    for (std::size_t i = a_begin; i < a_end; ++i) {
        const i128 ta = a[i];
        while (lo_j < b.size() && static_cast<i128>(b[lo_j]) <= ta - r.hi) ++lo_j;
        if (hi_j < lo_j) hi_j = lo_j;
        while (hi_j < b.size() && static_cast<i128>(b[hi_j]) <= ta - r.lo) ++hi_j;
        for (std::size_t j = lo_j; j < hi_j; ++j) {
            if (exclude_self && j == i) continue;
            const i128 d = ta - static_cast<i128>(b[j]);
            const std::size_t k = static_cast<std::size_t>((d - r.lo) / r.width);
            ++counts[k];
        }
    }
}

// Per-bin merge: for each bin, count pairs with a monotone window over b.
// Cost ~ nbins * (len(a) + len(b)); wins when the window holds many pairs.
void accumulate_binned(std::span<const std::uint64_t> a,
                       std::span<const std::uint64_t> b, bool exclude_self,
                       const BinRange& r, std::size_t k_begin, std::size_t k_end,
                       std::vector<std::uint64_t>& counts) {
    for (std::size_t k = k_begin; k < k_end; ++k) {
        const i128 lo = r.lo + static_cast<i128>(k) * r.width;
        const i128 hi = lo + r.width;
        std::uint64_t c = 0;
        std::size_t lo_j = 0, hi_j = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const i128 ta = a[i];
            while (lo_j < b.size() && static_cast<i128>(b[lo_j]) <= ta - hi) ++lo_j;
            if (hi_j < lo_j) hi_j = lo_j;
            while (hi_j < b.size() && static_cast<i128>(b[hi_j]) <= ta - lo) ++hi_j;
            c += hi_j - lo_j;
        }
        // Each self-pair has d = 0, so it was counted iff this bin spans 0.
        if (exclude_self && lo <= 0 && 0 < hi) c -= a.size();
        counts[k] = c;
    }
}

// Exact number of pairs with d in [lo, hi); linear merge.
std::uint64_t count_pairs_in_window(std::span<const std::uint64_t> a,
                                    std::span<const std::uint64_t> b,
                                    i128 lo, i128 hi) {
    std::uint64_t total = 0;
    std::size_t lo_j = 0, hi_j = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const i128 ta = a[i];
        while (lo_j < b.size() && static_cast<i128>(b[lo_j]) <= ta - hi) ++lo_j;
        if (hi_j < lo_j) hi_j = lo_j;
        while (hi_j < b.size() && static_cast<i128>(b[hi_j]) <= ta - lo) ++hi_j;
        total += hi_j - lo_j;
    }
    return total;
}

CorrelationHistogram correlate_impl(std::span<const std::uint64_t> a,
                                    std::span<const std::uint64_t> b,
                                    bool exclude_self, std::int64_t tau_start_ps,
                                    std::int64_t tau_end_ps, std::int64_t bin_width_ps,
                                    int threads) {
    if (bin_width_ps < 1) throw ArgumentError("correlate: bin width must be >= 1 ps");
    if (tau_end_ps <= tau_start_ps)
        throw ArgumentError("correlate: tau_end must exceed tau_start");

    const i128 span = static_cast<i128>(tau_end_ps) - tau_start_ps;
    const std::size_t nbins =
        static_cast<std::size_t>((span + bin_width_ps - 1) / bin_width_ps);
    if (nbins > (std::size_t{1} << 31))
        throw ArgumentError("correlate: more than 2^31 bins requested");

    CorrelationHistogram h;
    h.tau_start_ps = tau_start_ps;
    h.bin_width_ps = bin_width_ps;
    h.window_delta_ps = bin_width_ps;
    h.counts.assign(nbins, 0);
    h.n_a = a.size();
    h.n_b = b.size();
    if (a.empty() || b.empty()) return h;

    BinRange r;
    r.lo = tau_start_ps;
    r.width = bin_width_ps;
    r.nbins = nbins;
    r.hi = r.lo + static_cast<i128>(nbins) * bin_width_ps;

    const std::uint64_t pairs = count_pairs_in_window(a, b, r.lo, r.hi);
    const double sweep_cost = static_cast<double>(pairs) + static_cast<double>(a.size());
    const double binned_cost =
        static_cast<double>(nbins) * static_cast<double>(a.size() + b.size());
    const bool use_sweep = sweep_cost <= binned_cost;

    const int nthreads = resolve_threads(threads);
    // Fixed chunking independent of thread count keeps results and their
    // summation order deterministic.
    const std::size_t nchunks = 64;

    if (use_sweep) {
        const std::size_t chunk = (a.size() + nchunks - 1) / nchunks;
        std::vector<std::vector<std::uint64_t>> partial(nchunks);
        std::vector<std::future<void>> futures;
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t c = next.fetch_add(1);
                if (c >= nchunks) return;
                const std::size_t beg = c * chunk;
                const std::size_t end = std::min(a.size(), beg + chunk);
                if (beg >= end) continue;
                partial[c].assign(nbins, 0);
                accumulate_pairsweep(a, b, exclude_self, r, beg, end, partial[c]);
            }
        };
        if (nthreads == 1 || a.size() < 4096) {
            accumulate_pairsweep(a, b, exclude_self, r, 0, a.size(), h.counts);
            return h;
        }
        for (int t = 0; t < nthreads; ++t)
            futures.push_back(std::async(std::launch::async, worker));
        for (auto& f : futures) f.get();
        for (const auto& p : partial) {
            if (p.empty()) continue;
            for (std::size_t k = 0; k < nbins; ++k) h.counts[k] += p[k];
        }
    } else {
        const std::size_t chunk = (nbins + nchunks - 1) / nchunks;
        std::vector<std::future<void>> futures;
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t c = next.fetch_add(1);
                if (c >= nchunks) return;
                const std::size_t beg = c * chunk;
                const std::size_t end = std::min(nbins, beg + chunk);
                if (beg < end) accumulate_binned(a, b, exclude_self, r, beg, end, h.counts);
            }
        };
        if (nthreads == 1) {
            accumulate_binned(a, b, exclude_self, r, 0, nbins, h.counts);
            return h;
        }
        for (int t = 0; t < nthreads; ++t)
            futures.push_back(std::async(std::launch::async, worker));
        for (auto& f : futures) f.get();
    }
    return h;
}

}  // namespace

std::uint64_t CorrelationHistogram::total_counts() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

CorrelationHistogram correlate(std::span<const std::uint64_t> a,
                               std::span<const std::uint64_t> b,
                               std::int64_t tau_start_ps, std::int64_t tau_end_ps,
                               std::int64_t bin_width_ps, int threads) {
    return correlate_impl(a, b, false, tau_start_ps, tau_end_ps, bin_width_ps, threads);
}

CorrelationHistogram autocorrelate(std::span<const std::uint64_t> a,
                                   std::int64_t tau_start_ps, std::int64_t tau_end_ps,
                                   std::int64_t bin_width_ps, int threads) {
    return correlate_impl(a, a, true, tau_start_ps, tau_end_ps, bin_width_ps, threads);
}

std::vector<double> g2_normalize(const CorrelationHistogram& h) {
    if (h.n_a == 0 || h.n_b == 0)
        throw ArgumentError("g2_normalize: undefined for zero tag counts");
    const double norm = std::sqrt(static_cast<double>(h.n_a) * static_cast<double>(h.n_b));
    std::vector<double> g2(h.counts.size());
    for (std::size_t k = 0; k < h.counts.size(); ++k)
        g2[k] = static_cast<double>(h.counts[k]) / norm;
    return g2;
}

std::pair<double, double> histogram_background(const CorrelationHistogram& h,
                                               int exclude_halfwidth) {
    if (h.counts.empty()) return {0.0, 0.0};
    const std::size_t kmax =
        std::max_element(h.counts.begin(), h.counts.end()) - h.counts.begin();
    std::vector<double> bg;
    bg.reserve(h.counts.size());
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        const auto dist = static_cast<std::int64_t>(k) - static_cast<std::int64_t>(kmax);
        if (std::llabs(dist) <= exclude_halfwidth) continue;
        bg.push_back(static_cast<double>(h.counts[k]));
    }
    if (bg.empty()) return {0.0, 1.0};

    auto median_of = [](std::vector<double>& v) {
        const std::size_t mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + mid, v.end());
        return v[mid];
    };
    const double med = median_of(bg);
    for (double& x : bg) x = std::fabs(x - med);
    const double mad = median_of(bg);
    // Poisson floor keeps the estimate sane when most bins are empty.
    const double sigma = std::max({1.4826 * mad, std::sqrt(std::max(med, 0.0)), 1.0});
    return {med, sigma};
}

namespace {

// Peak location and significance against a locally detrended background.
// The raw accidental floor of a correlation histogram is not flat (finite
// acquisitions give it a triangular shape), so each bin is compared to the
// median of its neighbourhood, excluding +-exclude bins where the signal
// itself may sit.
struct DetrendedPeak {
    std::size_t index = 0;
    double excess = 0.0;
    double sigma = 1.0;
    double significance() const { return excess / sigma; }
};

DetrendedPeak detrended_peak(const std::vector<std::uint64_t>& counts,
                             std::size_t exclude, std::size_t window) {
    const std::size_t n = counts.size();
    DetrendedPeak result;
    if (n == 0) return result;

    // Local medians on a stride grid; each bin uses its nearest grid value.
    const std::size_t stride = std::max<std::size_t>(1, exclude / 2);
    std::vector<double> grid_bg((n + stride - 1) / stride, 0.0);
    std::vector<double> scratch;
    for (std::size_t gi = 0; gi < grid_bg.size(); ++gi) {
        const std::size_t k = gi * stride;
        const std::size_t lo = k > window ? k - window : 0;
        const std::size_t hi = std::min(n, k + window + 1);
        scratch.clear();
        for (std::size_t j = lo; j < hi; ++j) {
            const std::size_t dist = j > k ? j - k : k - j;
            if (dist > exclude) scratch.push_back(static_cast<double>(counts[j]));
        }
        if (scratch.empty())
            for (std::size_t j = lo; j < hi; ++j)
                scratch.push_back(static_cast<double>(counts[j]));
        const std::size_t mid = scratch.size() / 2;
        std::nth_element(scratch.begin(), scratch.begin() + mid, scratch.end());
        grid_bg[gi] = scratch[mid];
    }
    auto local_bg = [&](std::size_t k) {
        return grid_bg[std::min(k / stride, grid_bg.size() - 1)];
    };

    std::vector<double> resid(n);
    for (std::size_t k = 0; k < n; ++k)
        resid[k] = static_cast<double>(counts[k]) - local_bg(k);
    result.index = static_cast<std::size_t>(
        std::max_element(resid.begin(), resid.end()) - resid.begin());
    result.excess = resid[result.index];

    scratch.clear();
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t dist =
            k > result.index ? k - result.index : result.index - k;
        if (dist > exclude) scratch.push_back(std::fabs(resid[k]));
    }
    double mad = 0.0;
    if (!scratch.empty()) {
        const std::size_t mid = scratch.size() / 2;
        std::nth_element(scratch.begin(), scratch.begin() + mid, scratch.end());
        mad = scratch[mid];
    }
    result.sigma = std::max(
        {1.4826 * mad, std::sqrt(std::max(local_bg(result.index), 0.0)), 1.0});
    return result;
}

}  // namespace

PeakSearchResult find_peak(std::span<const std::uint64_t> a,
                           std::span<const std::uint64_t> b,
                           std::int64_t window_lo_ps, std::int64_t window_hi_ps,
                           std::int64_t target_bin_ps, const FindPeakOptions& options) {
    if (target_bin_ps < 1) throw ArgumentError("find_peak: target bin must be >= 1 ps");
    if (window_hi_ps <= window_lo_ps)
        throw ArgumentError("find_peak: empty search window");
    if (options.refine_factor < 2)
        throw ArgumentError("find_peak: refine factor must be >= 2");

    // Stage plan: shrink the bin width by refine_factor until it reaches the
    // target. The first width is capped so the initial window has bins.
    std::vector<std::int64_t> widths;
    std::int64_t w = options.initial_bin_ps;
    const std::int64_t window_span = window_hi_ps - window_lo_ps;
    while (w > window_span / 4 && w > target_bin_ps) w /= options.refine_factor;
    w = std::max(w, target_bin_ps);
    for (;;) {
        widths.push_back(w);
        if (w == target_bin_ps) break;
        w = std::max(target_bin_ps, w / options.refine_factor);
    }

    PeakSearchResult result;
    std::int64_t lo = window_lo_ps;
    std::int64_t hi = window_hi_ps;
    std::ostringstream diag;

    for (std::size_t s = 0; s < widths.size(); ++s) {
        const std::int64_t bw = widths[s];
        const bool final_stage = (s + 1 == widths.size());

        // Align the window to whole bins.
        const std::size_t nbins =
            static_cast<std::size_t>((hi - lo + bw - 1) / bw);
        hi = lo + static_cast<std::int64_t>(nbins) * bw;

        // Stride-thin both channels when a full-resolution pass would blow
        // the work budget. Thinning keeps 1/k of each channel, so 1/k^2 of
        // the coincident pairs; the significance check still applies.
        std::int64_t thin = 1;
        if (!final_stage && !a.empty() && !b.empty()) {
            const double pairs = static_cast<double>(count_pairs_in_window(
                a, b, static_cast<i128>(lo), static_cast<i128>(hi)));
            const double per_tag = static_cast<double>(a.size() + b.size());
            // Pair enumeration scales as 1/thin^2, the per-bin merge as
            // 1/thin; grow the stride until either fits the budget.
            auto work_at = [&](double k) {
                return std::min(pairs / (k * k),
                                static_cast<double>(nbins) * per_tag / k);
            };
            while (work_at(static_cast<double>(thin)) > options.stage_work_budget &&
                   thin < static_cast<std::int64_t>(a.size()))
                ++thin;
        }

        std::vector<std::uint64_t> a_thin, b_thin;
        std::span<const std::uint64_t> av = a, bv = b;
        if (thin > 1) {
            a_thin.reserve(a.size() / thin + 1);
            for (std::size_t i = 0; i < a.size(); i += thin) a_thin.push_back(a[i]);
            b_thin.reserve(b.size() / thin + 1);
            for (std::size_t i = 0; i < b.size(); i += thin) b_thin.push_back(b[i]);
            av = a_thin;
            bv = b_thin;
        }

        const CorrelationHistogram h =
            correlate(av, bv, lo, hi, bw, options.threads);
        const std::size_t exclude = std::max<std::size_t>(
            3, static_cast<std::size_t>(options.signal_extent_ps / bw));
        const std::size_t med_window = std::max<std::size_t>(4 * exclude, 25);
        const DetrendedPeak peak = detrended_peak(h.counts, exclude, med_window);
        const std::size_t kmax = peak.index;
        const double significance = peak.significance();
        const std::int64_t tau = lo + static_cast<std::int64_t>(kmax) * bw + bw / 2;

        PeakSearchStage stage;
        stage.bin_width_ps = bw;
        stage.tau_ps = tau;
        stage.significance = significance;
        stage.peak_counts = h.counts[kmax];
        stage.thinning = thin;
        result.refined_stages.push_back(stage);
        diag << "stage " << s << ": bin=" << bw << " ps window=[" << lo << "," << hi
             << ") thin=" << thin << " peak=" << h.counts[kmax] << "@" << tau
             << " significance=" << significance << "\n";

        if (significance < options.significance_threshold)
            throw NoPeakError("find_peak: significance " + std::to_string(significance) +
                                  " below threshold at stage " + std::to_string(s),
                              diag.str());

        if (final_stage) {
            result.tau_peak_ps = tau;
            result.significance = significance;
            break;
        }
        const std::int64_t half =
            static_cast<std::int64_t>(options.recenter_halfwidth_bins) * bw;
        lo = tau - half;
        hi = tau + half;
    }
    return result;
}

}  // namespace chronon
