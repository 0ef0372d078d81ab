#include "chronon/qdsim.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace chronon::qdsim {

namespace {

using cd = std::complex<double>;
constexpr double kInvSqrt2 = 0.70710678118654752440;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 over (seed, stream) for independent per-setting sequences
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double db_to_transmission(double loss_db) { return std::pow(10.0, -loss_db / 10.0); }

struct Telegraph {
    bool enabled = false;
    bool on = true;
    double seg_end_ps = 0.0;
    double on_mean_ps = 0.0;
    double off_mean_ps = 0.0;

    bool state_at(double t_ps, std::mt19937_64& rng) {
        if (!enabled) return true;
        while (t_ps >= seg_end_ps) {
            on = !on;
            std::exponential_distribution<double> seg(1.0 / (on ? on_mean_ps : off_mean_ps));
            seg_end_ps += seg(rng);
        }
        return on;
    }
};

}  // namespace

Pol pol_from_char(char c) {
    switch (c) {
        case 'H': return Pol::H;
        case 'V': return Pol::V;
        case 'D': return Pol::D;
        case 'A': return Pol::A;
        case 'R': return Pol::R;
        case 'L': return Pol::L;
        default: throw ArgumentError(std::string("unknown polarization token '") + c + "'");
    }
}

char pol_to_char(Pol p) {
    switch (p) {
        case Pol::H: return 'H';
        case Pol::V: return 'V';
        case Pol::D: return 'D';
        case Pol::A: return 'A';
        case Pol::R: return 'R';
        case Pol::L: return 'L';
    }
    return '?';
}

Eigen::Vector2cd pol_vector(Pol p) {
    switch (p) {
        case Pol::H: return {cd(1, 0), cd(0, 0)};
        case Pol::V: return {cd(0, 0), cd(1, 0)};
        case Pol::D: return {cd(kInvSqrt2, 0), cd(kInvSqrt2, 0)};
        case Pol::A: return {cd(kInvSqrt2, 0), cd(-kInvSqrt2, 0)};
        case Pol::R: return {cd(kInvSqrt2, 0), cd(0, -kInvSqrt2)};
        case Pol::L: return {cd(kInvSqrt2, 0), cd(0, kInvSqrt2)};
    }
    return {cd(0, 0), cd(0, 0)};
}

Eigen::Matrix2cd waveplate_unitary(double theta_rad, double phi_rad) {
    Eigen::Matrix2cd rot, retard;
    const double c = std::cos(theta_rad), s = std::sin(theta_rad);
    rot << cd(c, 0), cd(-s, 0), cd(s, 0), cd(c, 0);
    retard << cd(1, 0), cd(0, 0), cd(0, 0), std::polar(1.0, phi_rad);
    return rot * retard * rot.transpose();
}

PolarizationState PolarizationState::phi_plus() { return phased_bell(0.0); }

PolarizationState PolarizationState::phased_bell(double phase_rad) {
    PolarizationState s;
    s.amplitudes.setZero();
    s.amplitudes[0] = cd(kInvSqrt2, 0);                                   // HH
    s.amplitudes[3] = std::polar(kInvSqrt2, phase_rad);                   // VV
    return s;
}

MeasurementConfig MeasurementConfig::unpolarized() {
    MeasurementConfig m;
    m.enabled = false;
    m.label = "none";
    return m;
}

MeasurementConfig MeasurementConfig::from_label(const std::string& label) {
    if (label == "none") return unpolarized();
    if (label.size() != 2)
        throw ArgumentError("measurement label must be two tokens (exciton first), got '" +
                            label + "'");
    MeasurementConfig m;
    m.projection_x = pol_from_char(label[0]);
    m.projection_xx = pol_from_char(label[1]);
    m.label = label;
    return m;
}

std::vector<MeasurementConfig> default_tomography_settings() {
    static const char* kLabels[16] = {"HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
                                      "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL"};
    std::vector<MeasurementConfig> out;
    out.reserve(16);
    for (const char* l : kLabels) out.push_back(MeasurementConfig::from_label(l));
    return out;
}

std::string ground_truth_report(const GroundTruth& gt) {
    std::ostringstream out;
    out.precision(15);
    out << "seed = " << gt.seed << "\n"
        << "duration_s = " << gt.duration_s << "\n"
        << "offset_total_ps = " << gt.offset_total_ps << "\n"
        << "drift_ppb = " << gt.drift_ppb << "\n"
        << "one_way_delay_ps = " << gt.one_way_delay_ps << "\n"
        << "inserted_delay_ps = " << gt.inserted_delay_ps << "\n"
        << "round_trip_delay_ps = " << gt.round_trip_delay_ps << "\n"
        << "expected_one_way_t0_ps = " << gt.expected_one_way_t0_ps << "\n"
        << "expected_round_trip_t0_ps = " << gt.expected_round_trip_t0_ps << "\n"
        << "pulses = " << gt.pulses << "\n"
        << "pairs_emitted = " << gt.pairs_emitted << "\n";
    for (int c = 0; c < 3; ++c)
        out << "signal_counts_ch" << c << " = " << gt.signal_counts[c] << "\n";
    for (int c = 0; c < 3; ++c)
        out << "background_counts_ch" << c << " = " << gt.background_counts[c] << "\n";
    return out.str();
}

namespace {

void validate(const SourceParams& src, const LinkParams& link, const ClockParams& clk,
              double duration_s) {
    if (duration_s <= 0.0) throw ArgumentError("simulate_run: duration must be > 0");
    if (src.pair_prob < 0.0 || src.pair_prob > 1.0)
        throw ArgumentError("simulate_run: pair_prob must be in [0, 1]");
    if (src.rep_period_ps <= 0.0 || src.tau_xx_ps < 0.0 || src.tau_x_ps < 0.0 ||
        src.background_rate_hz < 0.0)
        throw ArgumentError("simulate_run: source rates/lifetimes must be >= 0");
    if (link.reflectance < 0.0 || link.reflectance > 1.0)
        throw ArgumentError("simulate_run: reflectance must be in [0, 1]");
    if (link.transmit_loss_db < 0.0 || link.return_loss_db < 0.0)
        throw ArgumentError("simulate_run: losses must be >= 0 dB");
    for (double j : clk.jitter_sigma_ps)
        if (j < 0.0) throw ArgumentError("simulate_run: jitter must be >= 0");
}

}  // namespace

std::pair<TagStream, GroundTruth> simulate_run(const SourceParams& src,
                                               const LinkParams& link,
                                               const ClockParams& clk,
                                               const MeasurementConfig& meas,
                                               double duration_s, std::uint64_t seed) {
    validate(src, link, clk, duration_s);

    const double duration_ps = duration_s * 1e12;
    const std::uint64_t n_pulses =
        static_cast<std::uint64_t>(duration_ps / src.rep_period_ps);
    const double offset_ps = clk.offset_total_ps();
    const double drift = clk.drift_ppb * 1e-9;
    const double p_transmit_det = db_to_transmission(link.transmit_loss_db);
    const double p_return_det = db_to_transmission(link.return_loss_db);
    const double round_trip_ps =
        2.0 * link.one_way_delay_ps + 2.0 * link.inserted_delay_ps +
        link.forward_extra_delay_ps + link.return_extra_delay_ps;

    std::mt19937_64 rng(mix_seed(seed, 0));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::exponential_distribution<double> exp_xx(
        src.tau_xx_ps > 0.0 ? 1.0 / src.tau_xx_ps : 1e300);
    std::exponential_distribution<double> exp_x(
        src.tau_x_ps > 0.0 ? 1.0 / src.tau_x_ps : 1e300);

    Telegraph blink;
    if (src.blink_on_ms > 0.0 && src.blink_off_ms > 0.0) {
        blink.enabled = true;
        blink.on_mean_ps = src.blink_on_ms * 1e9;
        blink.off_mean_ps = src.blink_off_ms * 1e9;
        std::exponential_distribution<double> seg(1.0 / blink.on_mean_ps);
        blink.seg_end_ps = seg(rng);
    }

    const bool has_link_rotation =
        link.birefringence_theta_rad != 0.0 || link.birefringence_phi_rad != 0.0;
    const Eigen::Matrix2cd u_link =
        has_link_rotation
            ? waveplate_unitary(link.birefringence_theta_rad, link.birefringence_phi_rad)
            : Eigen::Matrix2cd::Identity();

    Eigen::Vector2cd vx, vx_perp, vxx, vxx_perp;
    if (meas.enabled) {
        vx = pol_vector(meas.projection_x);
        vxx = pol_vector(meas.projection_xx);
        vx_perp = {-std::conj(vx[1]), std::conj(vx[0])};
        vxx_perp = {-std::conj(vxx[1]), std::conj(vxx[0])};
    }

    std::vector<TimeTag> tags;
    GroundTruth gt;
    gt.seed = seed;
    gt.duration_s = duration_s;
    gt.offset_total_ps = offset_ps;
    gt.drift_ppb = clk.drift_ppb;
    gt.one_way_delay_ps = link.one_way_delay_ps;
    gt.inserted_delay_ps = link.inserted_delay_ps;
    gt.round_trip_delay_ps = round_trip_ps;
    gt.expected_one_way_t0_ps = link.one_way_delay_ps + link.inserted_delay_ps +
                                link.forward_extra_delay_ps +
                                link.b_arm_extra_delay_ps + offset_ps -
                                link.xx_path_delay_ps;
    gt.expected_round_trip_t0_ps = round_trip_ps - link.xx_path_delay_ps;
    gt.pulses = n_pulses;

    auto emit = [&](int channel, double t_ps) {
        const double sigma = clk.jitter_sigma_ps[static_cast<std::size_t>(channel)];
        double t = t_ps;
        if (sigma > 0.0) t += sigma * gauss(rng);
        if (t < 0.0) t = 0.0;
        tags.push_back(TimeTag{static_cast<std::uint64_t>(std::llround(t)),
                               static_cast<std::uint16_t>(channel)});
    };
    auto subscriber_clock = [&](double t_true_ps) {
        return (1.0 + drift) * t_true_ps + offset_ps;
    };

    if (src.pair_prob > 0.0) {
        std::geometric_distribution<std::uint64_t> gap(
            src.pair_prob < 1.0 ? src.pair_prob : 0.5);
        std::uint64_t k = src.pair_prob < 1.0 ? gap(rng) : 0;
        while (k < n_pulses) {
            const double t_pulse = static_cast<double>(k) * src.rep_period_ps;
            if (blink.state_at(t_pulse, rng)) {
                ++gt.pairs_emitted;
                const double d_xx = src.tau_xx_ps > 0.0 ? exp_xx(rng) : 0.0;
                const double d_x = src.tau_x_ps > 0.0 ? exp_x(rng) : 0.0;
                const double t_xx = t_pulse + d_xx;
                const double t_x = t_xx + d_x;

                bool xx_detected = true;
                double p_x_given = 1.0;
                if (meas.enabled) {
                    const PolarizationState st =
                        PolarizationState::phased_bell(src.fss_omega_rad_per_ps * d_x);
                    Eigen::Vector4cd psi = st.amplitudes;
                    if (has_link_rotation) {
                        // link unitary on the exciton (first) qubit
                        Eigen::Vector4cd rotated;
                        for (int i = 0; i < 2; ++i)
                            for (int j = 0; j < 2; ++j)
                                rotated[2 * i + j] = u_link(i, 0) * psi[j] +
                                                     u_link(i, 1) * psi[2 + j];
                        psi = rotated;
                    }
                    auto joint = [&](const Eigen::Vector2cd& a, const Eigen::Vector2cd& b) {
                        cd amp = 0.0;
                        for (int i = 0; i < 2; ++i)
                            for (int j = 0; j < 2; ++j)
                                amp += std::conj(a[i]) * std::conj(b[j]) * psi[2 * i + j];
                        return std::norm(amp);
                    };
                    const double p_pp = joint(vx, vxx);
                    const double p_fp = joint(vx_perp, vxx);
                    const double p_pf = joint(vx, vxx_perp);
                    const double p_xx_pass = p_pp + p_fp;
                    xx_detected = uni(rng) < p_xx_pass;
                    const double denom = xx_detected ? p_xx_pass : 1.0 - p_xx_pass;
                    const double num = xx_detected ? p_pp : p_pf;
                    p_x_given = denom > 1e-15 ? num / denom : 0.0;
                }
                if (xx_detected) {
                    ++gt.signal_counts[0];
                    emit(0, t_xx + link.xx_path_delay_ps);
                }
                if (uni(rng) < link.reflectance) {
                    if (uni(rng) < p_return_det) {
                        ++gt.signal_counts[2];
                        emit(2, t_x + round_trip_ps);
                    }
                } else if (uni(rng) < p_transmit_det) {
                    if (!meas.enabled || uni(rng) < p_x_given) {
                        ++gt.signal_counts[1];
                        const double t_true = t_x + link.one_way_delay_ps +
                                              link.inserted_delay_ps +
                                              link.forward_extra_delay_ps +
                                              link.b_arm_extra_delay_ps;
                        emit(1, subscriber_clock(t_true));
                    }
                }
            }
            if (src.pair_prob >= 1.0)
                ++k;
            else
                k += 1 + gap(rng);
        }
    }

    if (src.background_rate_hz > 0.0) {
        std::poisson_distribution<std::uint64_t> n_bg(src.background_rate_hz * duration_s);
        for (int ch = 0; ch < 3; ++ch) {
            const std::uint64_t n = n_bg(rng);
            gt.background_counts[static_cast<std::size_t>(ch)] = n;
            for (std::uint64_t i = 0; i < n; ++i) {
                const double t_true = uni(rng) * duration_ps;
                const double t = ch == 1 ? subscriber_clock(t_true) : t_true;
                tags.push_back(TimeTag{static_cast<std::uint64_t>(std::llround(t)),
                                       static_cast<std::uint16_t>(ch)});
            }
        }
    }

    TagStream stream(std::move(tags), 3, meas.label, duration_s);
    return {std::move(stream), gt};
}

std::vector<TomographyRun> simulate_tomography_set(const SourceParams& src,
                                                   const LinkParams& link,
                                                   const ClockParams& clk,
                                                   double duration_s,
                                                   std::uint64_t seed) {
    std::vector<TomographyRun> out;
    const auto settings = default_tomography_settings();
    out.reserve(settings.size());
    for (std::size_t i = 0; i < settings.size(); ++i) {
        auto [stream, truth] =
            simulate_run(src, link, clk, settings[i], duration_s, mix_seed(seed, i + 1));
        out.push_back(TomographyRun{settings[i], std::move(stream), truth});
    }
    return out;
}

}  // namespace chronon::qdsim
