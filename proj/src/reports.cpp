#include "chronon/reports.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace chronon {

using nlohmann::json;

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
    std::filesystem::path p = csv_path;
    p += ".json";
    return p;
}

json params_to_json(const CascadeParams& p) {
    return json{{"amplitude", p.amplitude},
                {"osc_amplitude", p.osc_amplitude},
                {"tau_rise_ps", p.tau_rise_ps},
                {"tau_decay_ps", p.tau_decay_ps},
                {"omega_rad_per_ps", p.omega_rad_per_ps},
                {"phase_rad", p.phase_rad},
                {"background", p.background},
                {"t0_ps", p.t0_ps}};
}

CascadeParams params_from_json(const json& j) {
    CascadeParams p;
    p.amplitude = j.at("amplitude");
    p.osc_amplitude = j.at("osc_amplitude");
    p.tau_rise_ps = j.at("tau_rise_ps");
    p.tau_decay_ps = j.at("tau_decay_ps");
    p.omega_rad_per_ps = j.at("omega_rad_per_ps");
    p.phase_rad = j.at("phase_rad");
    p.background = j.at("background");
    p.t0_ps = j.at("t0_ps");
    return p;
}

}  // namespace

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

void write_histogram_csv(const CorrelationHistogram& h,
                         const std::filesystem::path& csv_path) {
    std::ostringstream out;
    out << "tau_ps,counts,g2\n";
    const double norm =
        h.n_a > 0 && h.n_b > 0
            ? std::sqrt(static_cast<double>(h.n_a) * static_cast<double>(h.n_b))
            : 0.0;
    char line[96];
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        const double g2 = norm > 0.0 ? static_cast<double>(h.counts[k]) / norm : 0.0;
        std::snprintf(line, sizeof line, "%.1f,%" PRIu64 ",%.9g\n", h.bin_center_ps(k),
                      h.counts[k], g2);
        out << line;
    }
    write_text_file(csv_path, out.str());

    write_json_file(sidecar_path(csv_path),
                    json{{"tau_start_ps", h.tau_start_ps},
                         {"bin_width_ps", h.bin_width_ps},
                         {"window_delta_ps", h.window_delta_ps},
                         {"n_bins", h.counts.size()},
                         {"n_a", h.n_a},
                         {"n_b", h.n_b}});
}

CorrelationHistogram read_histogram_csv(const std::filesystem::path& csv_path) {
    std::ifstream side(sidecar_path(csv_path));
    if (!side)
        throw IoError("missing histogram sidecar " + sidecar_path(csv_path).string());
    json meta = json::parse(side);

    CorrelationHistogram h;
    h.tau_start_ps = meta.at("tau_start_ps");
    h.bin_width_ps = meta.at("bin_width_ps");
    h.window_delta_ps = meta.at("window_delta_ps");
    h.n_a = meta.at("n_a");
    h.n_b = meta.at("n_b");

    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open " + csv_path.string());
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw FormatError(csv_path.string() + ": malformed CSV line");
        h.counts.push_back(std::stoull(line.substr(c1 + 1, c2 - c1 - 1)));
    }
    const std::size_t expected = meta.at("n_bins");
    if (h.counts.size() != expected)
        throw FormatError(csv_path.string() + ": bin count mismatch with sidecar");
    return h;
}

json to_json(const CascadeFit& fit) {
    return json{{"params", params_to_json(fit.value)},
                {"stderr", params_to_json(fit.stderr_)},
                {"tau_max_ps", fit.tau_max_ps},
                {"tau_max_err_ps", fit.tau_max_err_ps},
                {"rss", fit.rss},
                {"chi2_reduced", fit.chi2_reduced},
                {"iterations", fit.iterations},
                {"converged", fit.converged},
                {"at_bound", fit.at_bound}};
}

CascadeFit cascade_fit_from_json(const json& j) {
    CascadeFit fit;
    fit.value = params_from_json(j.at("params"));
    fit.stderr_ = params_from_json(j.at("stderr"));
    fit.tau_max_ps = j.at("tau_max_ps");
    fit.tau_max_err_ps = j.at("tau_max_err_ps");
    fit.rss = j.at("rss");
    fit.chi2_reduced = j.at("chi2_reduced");
    fit.iterations = j.at("iterations");
    fit.converged = j.at("converged");
    const auto& ab = j.at("at_bound");
    for (std::size_t k = 0; k < fit.at_bound.size() && k < ab.size(); ++k)
        fit.at_bound[k] = ab[k];
    return fit;
}

json to_json(const G2Fit& fit) {
    return json{{"peak_indices", fit.peak_indices},
                {"peak_amplitudes", fit.peak_amplitudes},
                {"center_amplitude", fit.center_amplitude},
                {"side_amplitude", fit.side_amplitude},
                {"tau_decay_ps", fit.tau_decay_ps},
                {"tau_decay_err_ps", fit.tau_decay_err_ps},
                {"blinking_amplitude", fit.blinking_amplitude},
                {"blinking_time_ps", fit.blinking_time_ps},
                {"baseline", fit.baseline},
                {"irf_sigma_ps", fit.irf_sigma_ps},
                {"g2_zero", fit.g2_zero},
                {"g2_zero_err", fit.g2_zero_err},
                {"rss", fit.rss},
                {"chi2_reduced", fit.chi2_reduced},
                {"converged", fit.converged}};
}

json to_json(const SyncReport& r) {
    json j{{"tau_one_way_ps", r.tau_one_way_ps},
           {"tau_one_way_err_ps", r.tau_one_way_err_ps},
           {"tau_round_trip_ps", r.tau_round_trip_ps},
           {"tau_round_trip_err_ps", r.tau_round_trip_err_ps},
           {"coarse_offset_s", r.coarse_offset_s},
           {"kappa_ps", r.kappa_ps},
           {"raw_offset_s", r.raw_offset_s},
           {"compensated_offset_s", r.compensated_offset_s},
           {"raw_fine_ps", r.raw_fine_ps},
           {"compensated_fine_ps", r.compensated_fine_ps},
           {"offset_err_ps", r.offset_err_ps}};
    if (r.inserted_delay_estimate_ps)
        j["inserted_delay_estimate_ps"] = *r.inserted_delay_estimate_ps;
    return j;
}

SyncReport sync_report_from_json(const json& j) {
    SyncReport r;
    r.tau_one_way_ps = j.at("tau_one_way_ps");
    r.tau_one_way_err_ps = j.at("tau_one_way_err_ps");
    r.tau_round_trip_ps = j.at("tau_round_trip_ps");
    r.tau_round_trip_err_ps = j.at("tau_round_trip_err_ps");
    r.coarse_offset_s = j.at("coarse_offset_s");
    r.kappa_ps = j.at("kappa_ps");
    r.raw_offset_s = j.at("raw_offset_s");
    r.compensated_offset_s = j.at("compensated_offset_s");
    r.raw_fine_ps = j.at("raw_fine_ps");
    r.compensated_fine_ps = j.at("compensated_fine_ps");
    r.offset_err_ps = j.at("offset_err_ps");
    if (j.contains("inserted_delay_estimate_ps"))
        r.inserted_delay_estimate_ps = j.at("inserted_delay_estimate_ps").get<double>();
    return r;
}

json to_json(const DelayVerification& v) {
    return json{{"one_way_shift_ps", v.one_way_shift_ps},
                {"one_way_shift_err_ps", v.one_way_shift_err_ps},
                {"round_trip_shift_ps", v.round_trip_shift_ps},
                {"round_trip_shift_err_ps", v.round_trip_shift_err_ps},
                {"ratio", v.ratio},
                {"ratio_err", v.ratio_err},
                {"tolerance", v.tolerance},
                {"pass", v.pass}};
}

json to_json(const PeakSearchResult& r) {
    json stages = json::array();
    for (const auto& s : r.refined_stages)
        stages.push_back(json{{"bin_width_ps", s.bin_width_ps},
                              {"tau_ps", s.tau_ps},
                              {"significance", s.significance},
                              {"peak_counts", s.peak_counts},
                              {"thinning", s.thinning}});
    return json{{"tau_peak_ps", r.tau_peak_ps},
                {"significance", r.significance},
                {"stages", stages}};
}

std::string sync_summary_text(const SyncReport& r) {
    std::ostringstream out;
    out.precision(15);
    out << "one-way peak:        " << r.tau_one_way_ps << " +- " << r.tau_one_way_err_ps
        << " ps\n"
        << "round-trip peak:     " << r.tau_round_trip_ps << " +- "
        << r.tau_round_trip_err_ps << " ps\n"
        << "coarse offset:       " << r.coarse_offset_s << " s\n"
        << "kappa:               " << r.kappa_ps << " ps\n"
        << "raw offset:          " << r.raw_offset_s << " s\n"
        << "compensated offset:  " << r.compensated_offset_s << " s ("
        << r.compensated_fine_ps << " ps fine part, +- " << r.offset_err_ps << " ps)\n";
    if (r.inserted_delay_estimate_ps)
        out << "inserted delay est.: " << *r.inserted_delay_estimate_ps << " ps\n";
    return out.str();
}

void write_tomo_series_csv(const tomo::TimeBinSeries& series,
                           const std::filesystem::path& path) {
    std::ostringstream out;
    out << "bin,tau_ps,fidelity,fidelity_err,concurrence,concurrence_err,valid,counts\n";
    char line[160];
    for (const auto& b : series.bins) {
        std::snprintf(line, sizeof line, "%d,%lld,%.6f,%.6f,%.6f,%.6f,%d,%" PRIu64 "\n",
                      b.index, static_cast<long long>(b.tau_ps), b.fidelity,
                      b.fidelity_err, b.concurrence, b.concurrence_err,
                      b.valid ? 1 : 0, b.total_counts);
        out << line;
    }
    write_text_file(path, out.str());
}

json tomo_series_to_json(const tomo::TimeBinSeries& series) {
    json bins = json::array();
    for (const auto& b : series.bins) {
        if (!b.valid) continue;
        json re = json::array(), im = json::array();
        for (int i = 0; i < 4; ++i) {
            json re_row = json::array(), im_row = json::array();
            for (int j = 0; j < 4; ++j) {
                re_row.push_back(b.rho(i, j).real());
                im_row.push_back(b.rho(i, j).imag());
            }
            re.push_back(re_row);
            im.push_back(im_row);
        }
        bins.push_back(json{{"bin", b.index},
                            {"tau_ps", b.tau_ps},
                            {"fidelity", b.fidelity},
                            {"fidelity_err", b.fidelity_err},
                            {"concurrence", b.concurrence},
                            {"concurrence_err", b.concurrence_err},
                            {"counts", b.total_counts},
                            {"rho_real", re},
                            {"rho_imag", im}});
    }
    return json{{"bin_width_ps", series.bin_width_ps}, {"bins", bins}};
}

}  // namespace chronon
