#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "chronon/config.hpp"
#include "chronon/pipeline.hpp"
#include "chronon/qdsim.hpp"
#include "chronon/reports.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chronon;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::optional<std::int64_t> bin_width_ps;
    int threads = 0;
    bool json_errors = false;
};

RunConfig effective_config(const GlobalOpts& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg = load_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (g.bin_width_ps) cfg.bin_width_ps = *g.bin_width_ps;
    if (g.threads > 0) cfg.threads = g.threads;
    return cfg;
}

int fail(const GlobalOpts& g, const std::string& kind, const std::string& what,
         int code) {
    if (g.json_errors)
        std::cerr << json{{"error", kind}, {"message", what}}.dump() << "\n";
    else
        std::cerr << "chronon: " << kind << ": " << what << "\n";
    return code;
}

void write_tomo_manifest(const fs::path& dir,
                         const std::vector<qdsim::TomographyRun>& runs) {
    std::ostringstream manifest;
    manifest << "# label = tag-file [channel_x channel_xx]\n";
    for (const auto& run : runs) {
        const std::string name = "tomo_" + run.setting.label + ".qtt";
        write_stream(run.stream, dir / name);
        manifest << run.setting.label << " = " << name << " 1 0\n";
    }
    write_text_file(dir / "tomo_manifest.txt", manifest.str());
}

struct ManifestEntry {
    std::string label;
    fs::path path;
    std::uint16_t ch_x = 1;
    std::uint16_t ch_xx = 0;
};

std::vector<ManifestEntry> read_tomo_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        std::string label, eq, file;
        if (!(ls >> label >> eq >> file)) continue;
        if (eq != "=") throw FormatError("manifest: expected 'label = file'");
        ManifestEntry e;
        e.label = label;
        e.path = path.parent_path() / file;
        int cx, cxx;
        if (ls >> cx >> cxx) {
            e.ch_x = static_cast<std::uint16_t>(cx);
            e.ch_xx = static_cast<std::uint16_t>(cxx);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chronon - entanglement-based two-way clock synchronization toolkit"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "run configuration file");
    app.add_option("--seed", g.seed, "override the config RNG seed");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--bin-width-ps", g.bin_width_ps, "override histogram bin width");
    app.add_option("--threads", g.threads, "worker threads (0 = all cores)");
    app.add_flag("--json-errors", g.json_errors, "machine-parsable errors on stderr");
    bool help_config = false;
    app.add_flag("--help-config", help_config, "print the config key reference");

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a synthetic tag stream");
    bool sim_tomo = false;
    sim->add_flag("--tomo", sim_tomo, "also write the 16 tomography streams");

    // correlate
    auto* corr = app.add_subcommand("correlate", "cross-correlation histogram");
    std::string corr_input, corr_csv = "histogram.csv";
    int corr_cha = 1, corr_chb = 0;
    std::int64_t corr_lo = 0, corr_hi = 0;
    corr->add_option("--input", corr_input, "tag file")->required();
    corr->add_option("--ch-a", corr_cha, "first channel (t_a)");
    corr->add_option("--ch-b", corr_chb, "second channel (t_b)");
    corr->add_option("--tau-start-ps", corr_lo, "histogram start")->required();
    corr->add_option("--tau-end-ps", corr_hi, "histogram end")->required();
    corr->add_option("--csv", corr_csv, "output CSV name (under --out)");
    bool corr_auto = false;
    corr->add_flag("--auto", corr_auto, "autocorrelate --ch-a with itself");

    // find-peak
    auto* fp = app.add_subcommand("find-peak", "multi-resolution peak search");
    std::string fp_input, fp_out = "peak.json";
    int fp_cha = 1, fp_chb = 0;
    std::int64_t fp_lo = 0, fp_hi = 0;
    fp->add_option("--input", fp_input)->required();
    fp->add_option("--ch-a", fp_cha);
    fp->add_option("--ch-b", fp_chb);
    fp->add_option("--window-lo-ps", fp_lo)->required();
    fp->add_option("--window-hi-ps", fp_hi)->required();
    fp->add_option("--json", fp_out, "output JSON name (under --out)");

    // fit
    auto* fit = app.add_subcommand("fit", "cascade model fit of a histogram CSV");
    std::string fit_hist, fit_out = "fit.json", fit_residuals;
    fit->add_option("--histogram", fit_hist, "histogram CSV (with sidecar)")->required();
    fit->add_option("--json", fit_out, "output JSON name (under --out)");
    fit->add_option("--residuals", fit_residuals,
                    "also write a per-bin residual report (under --out)");

    // g2
    auto* g2 = app.add_subcommand("g2", "autocorrelation and g2(0) extraction");
    std::string g2_input, g2_out = "g2.json", g2_csv;
    int g2_channel = 0;
    g2->add_option("--input", g2_input)->required();
    g2->add_option("--channel", g2_channel);
    g2->add_option("--json", g2_out, "output JSON name (under --out)");
    g2->add_option("--csv", g2_csv, "also write the histogram CSV");

    // sync
    auto* sync = app.add_subcommand("sync", "combine two fits into a sync report");
    std::string sync_oneway, sync_roundtrip, sync_out = "sync.json";
    std::string sync_kappa = "auto";
    sync->add_option("--oneway", sync_oneway, "one-way fit JSON")->required();
    sync->add_option("--roundtrip", sync_roundtrip, "round-trip fit JSON")->required();
    sync->add_option("--kappa-ps", sync_kappa, "calibration constant or 'auto'");
    sync->add_option("--json", sync_out, "output JSON name (under --out)");

    // verify-delay
    auto* vd = app.add_subcommand("verify-delay", "check an inserted-delay pair");
    std::string vd_before, vd_after, vd_out = "delay_verification.json";
    double vd_tol = 0.1;
    vd->add_option("--before", vd_before)->required();
    vd->add_option("--after", vd_after)->required();
    vd->add_option("--tolerance", vd_tol);
    vd->add_option("--json", vd_out, "output JSON name (under --out)");

    // tomo
    auto* tm = app.add_subcommand("tomo", "time-binned tomography from tag files");
    std::string tm_manifest;
    tm->add_option("--manifest", tm_manifest, "label = file manifest")->required();

    // pipeline
    auto* pl = app.add_subcommand("pipeline", "simulate + full closed-loop analysis");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (help_config) {
            std::cout << config_reference();
            return 0;
        }
        const RunConfig cfg = effective_config(g);
        const fs::path out_dir =
            app.get_subcommands().empty() ? fs::path(".") : fs::path(g.out_dir);

        if (sim->parsed()) {
            fs::create_directories(out_dir);
            const auto meas = qdsim::MeasurementConfig::from_label(cfg.measurement_label);
            auto [stream, truth] = qdsim::simulate_run(cfg.source, cfg.link, cfg.clock,
                                                       meas, cfg.duration_s, cfg.seed);
            write_stream(stream, out_dir / "tags.qtt");
            write_text_file(out_dir / "ground_truth.txt",
                            qdsim::ground_truth_report(truth));
            if (sim_tomo) {
                const auto runs = qdsim::simulate_tomography_set(
                    cfg.source, cfg.link, cfg.clock, cfg.tomo_duration_s,
                    cfg.seed + 0x7000);
                write_tomo_manifest(out_dir, runs);
            }
            std::cout << "wrote " << (out_dir / "tags.qtt").string() << " ("
                      << stream.size() << " tags)\n";
        } else if (corr->parsed()) {
            fs::create_directories(out_dir);
            const TagStream stream = read_stream(corr_input);
            const auto a = channel_times(stream, static_cast<std::uint16_t>(corr_cha));
            CorrelationHistogram h;
            if (corr_auto) {
                h = autocorrelate(a, corr_lo, corr_hi, cfg.bin_width_ps, cfg.threads);
            } else {
                const auto b =
                    channel_times(stream, static_cast<std::uint16_t>(corr_chb));
                h = correlate(a, b, corr_lo, corr_hi, cfg.bin_width_ps, cfg.threads);
            }
            write_histogram_csv(h, out_dir / corr_csv);
            std::cout << "wrote " << (out_dir / corr_csv).string() << " ("
                      << h.total_counts() << " coincidences)\n";
        } else if (fp->parsed()) {
            fs::create_directories(out_dir);
            const TagStream stream = read_stream(fp_input);
            const auto a = channel_times(stream, static_cast<std::uint16_t>(fp_cha));
            const auto b = channel_times(stream, static_cast<std::uint16_t>(fp_chb));
            FindPeakOptions opts = cfg.peak;
            opts.threads = cfg.threads;
            const auto peak = find_peak(a, b, fp_lo, fp_hi, cfg.bin_width_ps, opts);
            write_json_file(out_dir / fp_out, to_json(peak));
            std::cout << "peak at " << peak.tau_peak_ps << " ps (significance "
                      << peak.significance << ")\n";
        } else if (fit->parsed()) {
            fs::create_directories(out_dir);
            const CorrelationHistogram h = read_histogram_csv(fit_hist);
            CascadeFitOptions fo;
            if (cfg.source.fss_omega_rad_per_ps > 0.0)
                fo.init_omega_rad_per_ps = cfg.source.fss_omega_rad_per_ps;
            const CascadeFit cf = fit_cascade(h, std::nullopt, fo);
            write_json_file(out_dir / fit_out, to_json(cf));
            if (!fit_residuals.empty())
                write_text_file(out_dir / fit_residuals, residual_report(cf, h));
            std::cout << "tau_max = " << cf.tau_max_ps << " +- " << cf.tau_max_err_ps
                      << " ps, chi2_red = " << cf.chi2_reduced << "\n";
        } else if (g2->parsed()) {
            fs::create_directories(out_dir);
            const TagStream stream = read_stream(g2_input);
            const auto a = channel_times(stream, static_cast<std::uint16_t>(g2_channel));
            const std::int64_t span =
                static_cast<std::int64_t>(cfg.g2_periods * cfg.g2_rep_period_ps);
            const CorrelationHistogram h =
                autocorrelate(a, -span, span, cfg.g2_bin_width_ps, cfg.threads);
            if (!g2_csv.empty()) write_histogram_csv(h, out_dir / g2_csv);
            const G2Fit gf = fit_g2(h, cfg.g2_rep_period_ps, cfg.g2_fit);
            write_json_file(out_dir / g2_out, to_json(gf));
            std::cout << "g2(0) = " << gf.g2_zero << " +- " << gf.g2_zero_err << "\n";
        } else if (sync->parsed()) {
            fs::create_directories(out_dir);
            std::ifstream f1(sync_oneway), f2(sync_roundtrip);
            if (!f1 || !f2) throw IoError("cannot open fit JSON inputs");
            const CascadeFit oneway = cascade_fit_from_json(json::parse(f1));
            const CascadeFit roundtrip = cascade_fit_from_json(json::parse(f2));
            const double kappa = sync_kappa == "auto"
                                     ? cascade_shape_kappa_ps(oneway, roundtrip)
                                     : std::stod(sync_kappa);
            const SyncReport report =
                compute_sync(oneway, roundtrip, cfg.coarse_offset_s, kappa);
            write_json_file(out_dir / sync_out, to_json(report));
            std::cout << sync_summary_text(report);
        } else if (vd->parsed()) {
            fs::create_directories(out_dir);
            std::ifstream f1(vd_before), f2(vd_after);
            if (!f1 || !f2) throw IoError("cannot open sync report inputs");
            const SyncReport before = sync_report_from_json(json::parse(f1));
            const SyncReport after = sync_report_from_json(json::parse(f2));
            const DelayVerification v = verify_delay_insertion(before, after, vd_tol);
            write_json_file(out_dir / vd_out, to_json(v));
            std::cout << "one-way shift " << v.one_way_shift_ps << " ps, round-trip shift "
                      << v.round_trip_shift_ps << " ps, ratio " << v.ratio
                      << (v.pass ? " [pass]\n" : " [FAIL]\n");
            if (!v.pass) return 1;
        } else if (tm->parsed()) {
            fs::create_directories(out_dir);
            const auto entries = read_tomo_manifest(tm_manifest);
            std::vector<TagStream> streams;
            streams.reserve(entries.size());
            std::vector<std::pair<qdsim::MeasurementConfig, const TagStream*>> inputs;
            for (const auto& e : entries) streams.push_back(read_stream(e.path));
            for (std::size_t i = 0; i < entries.size(); ++i)
                inputs.emplace_back(qdsim::MeasurementConfig::from_label(entries[i].label),
                                    &streams[i]);
            tomo::TomoConfig tcfg = cfg.tomo;
            tcfg.threads = cfg.threads;
            if (!entries.empty()) {
                tcfg.channel_x = entries.front().ch_x;
                tcfg.channel_xx = entries.front().ch_xx;
            }
            const auto series = tomo::tomo_timeseries(inputs, cfg.waveplate, tcfg);
            write_tomo_series_csv(series, out_dir / "tomo_bins.csv");
            write_json_file(out_dir / "tomo_rho.json", tomo_series_to_json(series));
            double fmax = 0.0;
            for (const auto& b : series.bins)
                if (b.valid) fmax = std::max(fmax, b.fidelity);
            std::cout << "wrote " << (out_dir / "tomo_bins.csv").string()
                      << " (max fidelity " << fmax << ")\n";
        } else if (pl->parsed()) {
            const PipelineResult r = run_pipeline(cfg, out_dir);
            std::cout << sync_summary_text(r.sync);
            std::cout << "offset error vs truth: " << r.offset_error_ps
                      << " ps (tolerance " << r.offset_tolerance_ps << " ps) "
                      << (r.offset_pass ? "[pass]\n" : "[FAIL]\n");
            if (!r.offset_pass) return 1;
        } else {
            std::cout << app.help();
            return 0;
        }
    } catch (const ConfigError& e) {
        return fail(g, "config", e.what(), 2);
    } catch (const ArgumentError& e) {
        return fail(g, "usage", e.what(), 2);
    } catch (const FormatError& e) {
        return fail(g, "format", e.what(), 2);
    } catch (const TruncationError& e) {
        return fail(g, "truncated", e.what(), 2);
    } catch (const IoError& e) {
        return fail(g, "io", e.what(), 2);
    } catch (const NoPeakError& e) {
        return fail(g, "no-peak", std::string(e.what()) + "\n" + e.diagnostics(), 1);
    } catch (const Error& e) {
        return fail(g, "analysis", e.what(), 1);
    } catch (const std::exception& e) {
        return fail(g, "internal", e.what(), 1);
    }
    return 0;
}
