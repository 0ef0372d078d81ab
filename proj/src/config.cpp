#include "chronon/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace chronon {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct KeySpec {
    std::function<void(RunConfig&, const std::string&)> apply;
    std::string default_text;
    std::string help;
};

double parse_double(const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse number '" + v + "'");
    }
}

std::int64_t parse_int(const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse integer '" + v + "'");
    }
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("cannot parse boolean '" + v + "'");
}

// One registry drives both parsing and --help-config.
const std::map<std::string, KeySpec>& key_registry() {
    static const std::map<std::string, KeySpec> reg = [] {
        std::map<std::string, KeySpec> m;
        auto reg_key = [&m](const std::string& key,
                            std::function<void(RunConfig&, const std::string&)> fn,
                            const std::string& def, const std::string& help) {
            m[key] = KeySpec{std::move(fn), def, help};
        };

        // [source]
        reg_key("source.rep_period_ps",
                [](RunConfig& c, const std::string& v) { c.source.rep_period_ps = parse_double(v); },
                "12500", "excitation pulse period (80 MHz)");
        reg_key("source.pair_prob",
                [](RunConfig& c, const std::string& v) { c.source.pair_prob = parse_double(v); },
                "1e-4", "pair emission probability per pulse");
        reg_key("source.tau_xx_ps",
                [](RunConfig& c, const std::string& v) { c.source.tau_xx_ps = parse_double(v); },
                "1380", "biexciton lifetime");
        reg_key("source.tau_x_ps",
                [](RunConfig& c, const std::string& v) { c.source.tau_x_ps = parse_double(v); },
                "1140", "exciton lifetime");
        reg_key("source.fss_omega_rad_per_ps",
                [](RunConfig& c, const std::string& v) {
                    c.source.fss_omega_rad_per_ps = parse_double(v);
                },
                "0", "fine-structure precession frequency");
        reg_key("source.blink_on_ms",
                [](RunConfig& c, const std::string& v) { c.source.blink_on_ms = parse_double(v); },
                "0", "mean telegraph on-time (0 disables)");
        reg_key("source.blink_off_ms",
                [](RunConfig& c, const std::string& v) { c.source.blink_off_ms = parse_double(v); },
                "0", "mean telegraph off-time");
        reg_key("source.background_rate_hz",
                [](RunConfig& c, const std::string& v) {
                    c.source.background_rate_hz = parse_double(v);
                },
                "0", "uncorrelated background rate per channel");

        // [link]
        reg_key("link.one_way_delay_ps",
                [](RunConfig& c, const std::string& v) { c.link.one_way_delay_ps = parse_double(v); },
                "0", "fiber one-way propagation delay");
        reg_key("link.inserted_delay_ps",
                [](RunConfig& c, const std::string& v) { c.link.inserted_delay_ps = parse_double(v); },
                "0", "extra common-path delay (verification runs)");
        reg_key("link.reflectance",
                [](RunConfig& c, const std::string& v) { c.link.reflectance = parse_double(v); },
                "0.70", "in-line partial reflector");
        reg_key("link.transmit_loss_db",
                [](RunConfig& c, const std::string& v) { c.link.transmit_loss_db = parse_double(v); },
                "0", "loss of the transmitted arm");
        reg_key("link.return_loss_db",
                [](RunConfig& c, const std::string& v) { c.link.return_loss_db = parse_double(v); },
                "0", "loss of the return arm");
        reg_key("link.group_index",
                [](RunConfig& c, const std::string& v) { c.link.group_index = parse_double(v); },
                "1.468", "fiber group index for path-length conversion");
        reg_key("link.xx_path_delay_ps",
                [](RunConfig& c, const std::string& v) { c.link.xx_path_delay_ps = parse_double(v); },
                "0", "biexciton detection path delay at the master");
        reg_key("link.b_arm_extra_delay_ps",
                [](RunConfig& c, const std::string& v) {
                    c.link.b_arm_extra_delay_ps = parse_double(v);
                },
                "0", "delay in the subscriber detection arm only");
        reg_key("link.forward_extra_delay_ps",
                [](RunConfig& c, const std::string& v) {
                    c.link.forward_extra_delay_ps = parse_double(v);
                },
                "0", "forward fiber direction only (asymmetric-delay scenario)");
        reg_key("link.return_extra_delay_ps",
                [](RunConfig& c, const std::string& v) {
                    c.link.return_extra_delay_ps = parse_double(v);
                },
                "0", "return fiber direction only");
        reg_key("link.birefringence_theta_rad",
                [](RunConfig& c, const std::string& v) {
                    c.link.birefringence_theta_rad = parse_double(v);
                },
                "0", "static link rotation on the exciton qubit");
        reg_key("link.birefringence_phi_rad",
                [](RunConfig& c, const std::string& v) {
                    c.link.birefringence_phi_rad = parse_double(v);
                },
                "0", "static link retardance on the exciton qubit");

        // [clock]
        reg_key("clock.offset_s",
                [](RunConfig& c, const std::string& v) { c.clock.offset_s = parse_double(v); },
                "0", "subscriber-minus-master offset, coarse part");
        reg_key("clock.offset_ps",
                [](RunConfig& c, const std::string& v) { c.clock.offset_ps = parse_double(v); },
                "0", "subscriber-minus-master offset, fine part");
        reg_key("clock.drift_ppb",
                [](RunConfig& c, const std::string& v) { c.clock.drift_ppb = parse_double(v); },
                "0", "fractional frequency offset");
        reg_key("clock.jitter_sigma_ps",
                [](RunConfig& c, const std::string& v) {
                    c.clock.set_uniform_jitter(parse_double(v));
                },
                "100", "detection jitter, all channels");
        for (int ch = 0; ch < 3; ++ch)
            reg_key("clock.jitter_sigma_ps_ch" + std::to_string(ch),
                    [ch](RunConfig& c, const std::string& v) {
                        c.clock.jitter_sigma_ps[static_cast<std::size_t>(ch)] =
                            parse_double(v);
                    },
                    "100", "detection jitter of channel " + std::to_string(ch));

        // [measurement]
        reg_key("measurement.label",
                [](RunConfig& c, const std::string& v) {
                    qdsim::MeasurementConfig::from_label(v);  // validates
                    c.measurement_label = v;
                },
                "none", "projection pair, exciton first, or 'none'");

        // [run]
        reg_key("run.duration_s",
                [](RunConfig& c, const std::string& v) { c.duration_s = parse_double(v); },
                "60", "simulated acquisition time");
        reg_key("run.seed",
                [](RunConfig& c, const std::string& v) {
                    c.seed = static_cast<std::uint64_t>(parse_int(v));
                },
                "1", "RNG seed");
        reg_key("run.threads",
                [](RunConfig& c, const std::string& v) {
                    c.threads = static_cast<int>(parse_int(v));
                },
                "0", "worker threads (0 = all cores)");

        // [correlator]
        reg_key("correlator.bin_width_ps",
                [](RunConfig& c, const std::string& v) { c.bin_width_ps = parse_int(v); },
                "16", "histogram bin width / coincidence window");
        reg_key("correlator.oneway_window_lo_ps",
                [](RunConfig& c, const std::string& v) { c.oneway_window_lo_ps = parse_int(v); },
                "-200000000000", "one-way coarse search window start");
        reg_key("correlator.oneway_window_hi_ps",
                [](RunConfig& c, const std::string& v) { c.oneway_window_hi_ps = parse_int(v); },
                "200000000000", "one-way coarse search window end");
        reg_key("correlator.roundtrip_window_lo_ps",
                [](RunConfig& c, const std::string& v) {
                    c.roundtrip_window_lo_ps = parse_int(v);
                },
                "-1000000000", "round-trip search window start");
        reg_key("correlator.roundtrip_window_hi_ps",
                [](RunConfig& c, const std::string& v) {
                    c.roundtrip_window_hi_ps = parse_int(v);
                },
                "1000000000", "round-trip search window end");
        reg_key("correlator.initial_bin_ps",
                [](RunConfig& c, const std::string& v) { c.peak.initial_bin_ps = parse_int(v); },
                "1000000000", "first peak-search bin width");
        reg_key("correlator.refine_factor",
                [](RunConfig& c, const std::string& v) { c.peak.refine_factor = parse_int(v); },
                "100", "bin-width shrink factor per stage");
        reg_key("correlator.recenter_halfwidth_bins",
                [](RunConfig& c, const std::string& v) {
                    c.peak.recenter_halfwidth_bins = static_cast<int>(parse_int(v));
                },
                "50", "window half width after each stage");
        reg_key("correlator.significance_threshold",
                [](RunConfig& c, const std::string& v) {
                    c.peak.significance_threshold = parse_double(v);
                },
                "5", "minimum peak significance per stage");
        reg_key("correlator.fit_halfwidth_bins",
                [](RunConfig& c, const std::string& v) {
                    c.fit_halfwidth_bins = static_cast<int>(parse_int(v));
                },
                "600", "half width of the fit histogram around a peak");

        // [sync]
        reg_key("sync.coarse_offset_s",
                [](RunConfig& c, const std::string& v) { c.coarse_offset_s = parse_int(v); },
                "0", "a-priori integer-seconds offset");
        reg_key("sync.kappa_ps",
                [](RunConfig& c, const std::string& v) {
                    if (v == "auto")
                        c.kappa_ps.reset();
                    else
                        c.kappa_ps = parse_double(v);
                },
                "auto", "path-asymmetry constant, or 'auto' for self-calibration");
        reg_key("sync.delay_ratio_tolerance",
                [](RunConfig& c, const std::string& v) {
                    c.delay_ratio_tolerance = parse_double(v);
                },
                "0.1", "verify-delay |ratio-2| tolerance");

        // [g2]
        reg_key("g2.enabled",
                [](RunConfig& c, const std::string& v) { c.g2_enabled = parse_bool(v); },
                "false", "run the autocorrelation analysis in the pipeline");
        reg_key("g2.channel",
                [](RunConfig& c, const std::string& v) {
                    c.g2_channel = static_cast<int>(parse_int(v));
                },
                "0", "channel to autocorrelate");
        reg_key("g2.rep_period_ps",
                [](RunConfig& c, const std::string& v) { c.g2_rep_period_ps = parse_double(v); },
                "12500", "pulse period of the comb fit");
        reg_key("g2.periods",
                [](RunConfig& c, const std::string& v) {
                    c.g2_periods = static_cast<int>(parse_int(v));
                },
                "10", "pulse periods per side of the histogram");
        reg_key("g2.bin_width_ps",
                [](RunConfig& c, const std::string& v) { c.g2_bin_width_ps = parse_int(v); },
                "100", "autocorrelation bin width");
        reg_key("g2.irf_width_ps",
                [](RunConfig& c, const std::string& v) {
                    c.g2_fit.irf_width_ps = parse_double(v);
                },
                "50", "Gaussian IRF width");
        reg_key("g2.irf_convention",
                [](RunConfig& c, const std::string& v) {
                    if (v == "sigma")
                        c.g2_fit.irf_convention = IrfWidthConvention::Sigma;
                    else if (v == "fwhm")
                        c.g2_fit.irf_convention = IrfWidthConvention::Fwhm;
                    else
                        throw ConfigError("g2.irf_convention must be sigma or fwhm");
                },
                "sigma", "interpret irf_width_ps as sigma or FWHM");

        // [tomography]
        reg_key("tomography.enabled",
                [](RunConfig& c, const std::string& v) { c.tomo_enabled = parse_bool(v); },
                "false", "run tomography in the pipeline");
        reg_key("tomography.duration_s",
                [](RunConfig& c, const std::string& v) { c.tomo_duration_s = parse_double(v); },
                "5", "acquisition per setting in the pipeline");
        reg_key("tomography.bin_width_ps",
                [](RunConfig& c, const std::string& v) { c.tomo.bin_width_ps = parse_int(v); },
                "16", "time-bin width of the reconstruction");
        reg_key("tomography.window_bins",
                [](RunConfig& c, const std::string& v) {
                    c.tomo.window_bins = static_cast<int>(parse_int(v));
                },
                "192", "number of time bins");
        reg_key("tomography.window_start_tau_ps",
                [](RunConfig& c, const std::string& v) {
                    if (v == "auto")
                        c.tomo.window_start_tau_ps.reset();
                    else
                        c.tomo.window_start_tau_ps = parse_int(v);
                },
                "auto", "delay-axis start of the window, or 'auto'");
        reg_key("tomography.mc_resamples",
                [](RunConfig& c, const std::string& v) {
                    c.tomo.mc_resamples = static_cast<int>(parse_int(v));
                },
                "100", "Poisson resamples for error bars");
        reg_key("tomography.min_counts",
                [](RunConfig& c, const std::string& v) {
                    c.tomo.min_counts = static_cast<std::uint64_t>(parse_int(v));
                },
                "16", "bins below this total are marked invalid");
        reg_key("tomography.mle_restarts",
                [](RunConfig& c, const std::string& v) {
                    c.tomo.mle.restarts = static_cast<int>(parse_int(v));
                },
                "5", "random restarts of the MLE optimizer");
        reg_key("tomography.waveplate_theta_rad",
                [](RunConfig& c, const std::string& v) {
                    c.waveplate.theta_rad = parse_double(v);
                },
                "0", "virtual waveplate rotation");
        reg_key("tomography.waveplate_phi_rad",
                [](RunConfig& c, const std::string& v) {
                    c.waveplate.phi_rad = parse_double(v);
                },
                "0", "virtual waveplate retardance");
        reg_key("tomography.waveplate_target",
                [](RunConfig& c, const std::string& v) {
                    using T = tomo::WaveplateCorrection::Target;
                    if (v == "exciton") c.waveplate.target = T::Exciton;
                    else if (v == "biexciton") c.waveplate.target = T::Biexciton;
                    else if (v == "both") c.waveplate.target = T::Both;
                    else throw ConfigError("waveplate_target must be exciton|biexciton|both");
                },
                "exciton", "which qubit the correction acts on");
        return m;
    }();
    return reg;
}

}  // namespace

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());

    RunConfig cfg;
    const auto& reg = key_registry();
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                                  ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string full = section.empty() ? key : section + "." + key;
        const auto it = reg.find(full);
        if (it == reg.end())
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": unknown key '" + full + "'");
        try {
            it->second.apply(cfg, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " +
                              e.what());
        }
    }
    return cfg;
}

std::string config_reference() {
    std::ostringstream out;
    out << "Configuration keys (sectioned key=value file):\n";
    std::string last_section;
    for (const auto& [key, spec] : key_registry()) {
        const std::string section = key.substr(0, key.find('.'));
        if (section != last_section) {
            out << "\n[" << section << "]\n";
            last_section = section;
        }
        out << "  " << key.substr(key.find('.') + 1) << " = " << spec.default_text
            << "\n      " << spec.help << "\n";
    }
    return out.str();
}

}  // namespace chronon
