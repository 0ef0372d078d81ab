#include "chronon/pipeline.hpp"

#include <cmath>

namespace chronon {

namespace {

CorrelationHistogram peak_histogram(std::span<const std::uint64_t> a,
                                    std::span<const std::uint64_t> b,
                                    std::int64_t tau_peak_ps, const RunConfig& cfg) {
    const std::int64_t half =
        static_cast<std::int64_t>(cfg.fit_halfwidth_bins) * cfg.bin_width_ps;
    return correlate(a, b, tau_peak_ps - half, tau_peak_ps + half, cfg.bin_width_ps,
                     cfg.threads);
}

}  // namespace

PipelineResult analyze_sync(const TagStream& stream, const RunConfig& config,
                            const qdsim::GroundTruth* truth) {
    PipelineResult r;
    const auto t_xx = channel_times(stream, 0);
    const auto t_sub = channel_times(stream, 1);
    const auto t_ret = channel_times(stream, 2);

    FindPeakOptions peak_opts = config.peak;
    peak_opts.threads = config.threads;

    // The a-priori integer seconds shift the one-way search window; histogram
    // and fit run on the residual axis so the peak position is the sub-second
    // part the sync arithmetic expects.
    const std::int64_t coarse_ps = config.coarse_offset_s * 1'000'000'000'000LL;

    r.oneway_peak =
        find_peak(t_sub, t_xx, coarse_ps + config.oneway_window_lo_ps,
                  coarse_ps + config.oneway_window_hi_ps, config.bin_width_ps, peak_opts);
    r.roundtrip_peak =
        find_peak(t_ret, t_xx, config.roundtrip_window_lo_ps,
                  config.roundtrip_window_hi_ps, config.bin_width_ps, peak_opts);

    r.oneway_hist = peak_histogram(t_sub, t_xx, r.oneway_peak.tau_peak_ps, config);
    r.oneway_hist.tau_start_ps -= coarse_ps;
    r.oneway_peak.tau_peak_ps -= coarse_ps;
    for (auto& stage : r.oneway_peak.refined_stages) stage.tau_ps -= coarse_ps;
    r.roundtrip_hist = peak_histogram(t_ret, t_xx, r.roundtrip_peak.tau_peak_ps, config);

    CascadeFitOptions fit_opts;
    if (config.source.fss_omega_rad_per_ps > 0.0)
        fit_opts.init_omega_rad_per_ps = config.source.fss_omega_rad_per_ps;
    r.oneway_fit = fit_cascade(r.oneway_hist, std::nullopt, fit_opts);
    r.roundtrip_fit = fit_cascade(r.roundtrip_hist, std::nullopt, fit_opts);

    const double kappa = config.kappa_ps ? *config.kappa_ps
                                         : cascade_shape_kappa_ps(r.oneway_fit, r.roundtrip_fit);
    r.sync = compute_sync(r.oneway_fit, r.roundtrip_fit, config.coarse_offset_s, kappa);

    if (truth) {
        r.truth = *truth;
        r.truth_offset_ps = truth->offset_total_ps;
        r.recovered_offset_ps = static_cast<double>(r.sync.coarse_offset_s) * 1e12 +
                                r.sync.compensated_fine_ps;
        r.offset_error_ps = std::fabs(r.recovered_offset_ps - r.truth_offset_ps);
        r.offset_tolerance_ps = std::max(3.0 * r.sync.offset_err_ps, 20.0);
        r.offset_pass = r.offset_error_ps < r.offset_tolerance_ps;
    }
    return r;
}

PipelineResult run_pipeline(const RunConfig& config,
                            const std::filesystem::path& out_dir) {
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    const auto meas = qdsim::MeasurementConfig::from_label(config.measurement_label);
    auto [stream, truth] = qdsim::simulate_run(config.source, config.link, config.clock,
                                               meas, config.duration_s, config.seed);

    PipelineResult r = analyze_sync(stream, config, &truth);

    if (config.g2_enabled) {
        const auto times =
            channel_times(stream, static_cast<std::uint16_t>(config.g2_channel));
        const std::int64_t span = static_cast<std::int64_t>(
            config.g2_periods * config.g2_rep_period_ps);
        const CorrelationHistogram h =
            autocorrelate(times, -span, span, config.g2_bin_width_ps, config.threads);
        r.g2 = fit_g2(h, config.g2_rep_period_ps, config.g2_fit);
        if (!out_dir.empty()) write_histogram_csv(h, out_dir / "g2_histogram.csv");
    }

    if (config.tomo_enabled) {
        const auto runs = qdsim::simulate_tomography_set(
            config.source, config.link, config.clock, config.tomo_duration_s,
            config.seed + 0x7000);
        std::vector<std::pair<qdsim::MeasurementConfig, const TagStream*>> inputs;
        inputs.reserve(runs.size());
        for (const auto& run : runs) inputs.emplace_back(run.setting, &run.stream);
        tomo::TomoConfig tcfg = config.tomo;
        tcfg.threads = config.threads;
        r.tomo_series = tomo::tomo_timeseries(inputs, config.waveplate, tcfg);
        if (!out_dir.empty()) {
            write_tomo_series_csv(*r.tomo_series, out_dir / "tomo_bins.csv");
            write_json_file(out_dir / "tomo_rho.json",
                            tomo_series_to_json(*r.tomo_series));
        }
    }

    if (!out_dir.empty()) {
        write_stream(stream, out_dir / "tags.qtt");
        write_text_file(out_dir / "ground_truth.txt", qdsim::ground_truth_report(truth));
        write_histogram_csv(r.oneway_hist, out_dir / "oneway_histogram.csv");
        write_histogram_csv(r.roundtrip_hist, out_dir / "roundtrip_histogram.csv");
        write_json_file(out_dir / "oneway_fit.json", to_json(r.oneway_fit));
        write_json_file(out_dir / "roundtrip_fit.json", to_json(r.roundtrip_fit));
        write_json_file(out_dir / "sync.json", to_json(r.sync));
        write_text_file(out_dir / "sync_summary.txt", sync_summary_text(r.sync));
        write_json_file(out_dir / "report.json", pipeline_report_json(r));
    }
    return r;
}

nlohmann::json pipeline_report_json(const PipelineResult& r) {
    nlohmann::json j{{"oneway_peak", to_json(r.oneway_peak)},
                     {"roundtrip_peak", to_json(r.roundtrip_peak)},
                     {"oneway_fit", to_json(r.oneway_fit)},
                     {"roundtrip_fit", to_json(r.roundtrip_fit)},
                     {"sync", to_json(r.sync)},
                     {"truth_offset_ps", r.truth_offset_ps},
                     {"recovered_offset_ps", r.recovered_offset_ps},
                     {"offset_error_ps", r.offset_error_ps},
                     {"offset_tolerance_ps", r.offset_tolerance_ps},
                     {"offset_pass", r.offset_pass}};
    if (r.g2) j["g2"] = to_json(*r.g2);
    if (r.tomo_series) {
        double fmax = 0.0, cmax = 0.0;
        for (const auto& b : r.tomo_series->bins) {
            if (!b.valid) continue;
            fmax = std::max(fmax, b.fidelity);
            cmax = std::max(cmax, b.concurrence);
        }
        j["tomo_max_fidelity"] = fmax;
        j["tomo_max_concurrence"] = cmax;
    }
    return j;
}

}  // namespace chronon
