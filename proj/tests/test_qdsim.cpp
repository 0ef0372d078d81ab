#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "chronon/correlator.hpp"
#include "chronon/qdsim.hpp"

using namespace chronon;
using namespace chronon::qdsim;

namespace {

SourceParams ideal_source(double pair_prob = 1.0) {
    SourceParams src;
    src.pair_prob = pair_prob;
    return src;
}

ClockParams quiet_clock() {
    ClockParams clk;
    clk.set_uniform_jitter(0.0);
    return clk;
}

// For jitter-free runs: the largest ch0 time <= t is the pair's ancestor.
// Returns -1 when no ancestor exists (e.g. the projection absorbed it).
double matched_delay(const std::vector<std::uint64_t>& parents, std::uint64_t t) {
    auto it = std::upper_bound(parents.begin(), parents.end(), t);
    if (it == parents.begin()) return -1.0;
    return static_cast<double>(t) - static_cast<double>(*(it - 1));
}

}  // namespace

TEST_CASE("ideal run: every pulse gives ch0 and exactly one exciton branch") {
    LinkParams link;
    link.reflectance = 0.4;
    const double duration_s = 12'500.0e-12 * 1e6;  // ~1e6 pulses
    const auto [stream, truth] = simulate_run(ideal_source(), link, quiet_clock(),
                                              MeasurementConfig::unpolarized(),
                                              duration_s, 17);
    CHECK(truth.pulses >= 999'999);
    CHECK(truth.pairs_emitted == truth.pulses);
    CHECK(truth.signal_counts[0] == truth.pulses);
    CHECK(truth.signal_counts[1] + truth.signal_counts[2] == truth.pulses);

    // (t_ch1 - t_ch0) is the exciton delay: exponential, mean 1140 ps
    const auto t0 = channel_times(stream, 0);
    const auto t1 = channel_times(stream, 1);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto t : t1) {
        const double d = matched_delay(t0, t);
        if (d >= 0.0) {
            sum += d;
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    CHECK(std::fabs(mean - 1140.0) / 1140.0 < 0.01);
}

TEST_CASE("reflectance routes 70% of excitons to the return channel") {
    LinkParams link;
    link.reflectance = 0.70;
    const double duration_s = 12'500.0e-12 * 2e5;
    const auto [stream, truth] = simulate_run(ideal_source(), link, quiet_clock(),
                                              MeasurementConfig::unpolarized(),
                                              duration_s, 18);
    const double n1 = static_cast<double>(truth.signal_counts[1]);
    const double n2 = static_cast<double>(truth.signal_counts[2]);
    const double ratio = n2 / (n1 + n2);
    const double sigma = std::sqrt(0.7 * 0.3 / (n1 + n2));
    CHECK(std::fabs(ratio - 0.70) < 3.0 * sigma);
}

TEST_CASE("inserted delay shifts ch1 by d and ch2 by 2d, exactly") {
    LinkParams base;
    base.one_way_delay_ps = 96'393'880;
    LinkParams inserted = base;
    inserted.inserted_delay_ps = 4480;

    const double duration_s = 12'500.0e-12 * 2e4;
    const auto [s0, t0] = simulate_run(ideal_source(0.5), base, quiet_clock(),
                                       MeasurementConfig::unpolarized(), duration_s, 19);
    const auto [s1, t1] = simulate_run(ideal_source(0.5), inserted, quiet_clock(),
                                       MeasurementConfig::unpolarized(), duration_s, 19);

    for (std::uint16_t ch : {std::uint16_t{1}, std::uint16_t{2}}) {
        const auto a = channel_times(s0, ch);
        const auto b = channel_times(s1, ch);
        REQUIRE(a.size() == b.size());
        const std::uint64_t shift = ch == 1 ? 4480 : 8960;
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(b[i] == a[i] + shift);
    }
    CHECK(t1.round_trip_delay_ps - t0.round_trip_delay_ps == 8960.0);
}

TEST_CASE("subscriber clock applies offset and drift") {
    LinkParams link;
    link.reflectance = 0.0;
    ClockParams clk = quiet_clock();
    clk.offset_s = 0.5;
    clk.offset_ps = 250.0;
    const double duration_s = 12'500.0e-12 * 1e4;
    const auto [stream, truth] = simulate_run(ideal_source(), link, clk,
                                              MeasurementConfig::unpolarized(),
                                              duration_s, 20);
    CHECK(truth.offset_total_ps == doctest::Approx(0.5e12 + 250.0));
    const auto t0 = channel_times(stream, 0);
    const auto t1 = channel_times(stream, 1);
    // Every ch1 tag leads its ancestor by at least the clock offset.
    const std::uint64_t off = 500'000'000'250ULL;
    for (std::size_t i = 0; i < std::min<std::size_t>(t1.size(), 100); ++i)
        CHECK(t1[i] >= off);
    CHECK(truth.expected_one_way_t0_ps == doctest::Approx(0.5e12 + 250.0));
}

TEST_CASE("born rule: projection statistics of the phased Bell state") {
    // omega = 0: coincidence probabilities HH = VV = DD = 1/2, HV = VH = 0.
    // A slow rep rate keeps adjacent-pulse accidentals out of the window.
    SourceParams src = ideal_source(0.5);
    src.rep_period_ps = 125'000.0;
    LinkParams link;
    link.reflectance = 0.0;
    const double duration_s = 125'000.0e-12 * 4e5;

    // Coincidences = (ch1, ch0) pairs within half a pulse period.
    auto run = [&](const std::string& label, std::uint64_t seed) {
        const auto [stream, truth] =
            simulate_run(src, link, quiet_clock(),
                         MeasurementConfig::from_label(label), duration_s, seed);
        const auto t1 = channel_times(stream, 1);
        const auto t0 = channel_times(stream, 0);
        const auto h = correlate(t1, t0, 0, 60'000, 60'000);
        return std::pair<double, double>(static_cast<double>(h.counts[0]),
                                         static_cast<double>(truth.pairs_emitted));
    };
    const auto [hh, n_hh] = run("HH", 21);
    const auto [vv, n_vv] = run("VV", 22);
    const auto [dd, n_dd] = run("DD", 23);
    const auto [hv, n_hv] = run("HV", 24);
    const auto [vh, n_vh] = run("VH", 25);
    const double sigma = std::sqrt(hh);
    CHECK(std::fabs(hh - vv) < 5.0 * sigma);
    CHECK(std::fabs(hh - dd) < 5.0 * sigma);
    CHECK(hv < 10.0);  // zero amplitude; allow rare cross-pulse accidentals
    CHECK(vh < 10.0);

    // Born normalization: the four HV-basis outcomes partition each pair.
    const double total_prob = hh / n_hh + hv / n_hv + vh / n_vh + vv / n_vv;
    const double sigma_prob = std::sqrt(2.0 * 0.25 / n_hh);
    CHECK(std::fabs(total_prob - 1.0) < 4.0 * sigma_prob);
}

TEST_CASE("fss phase makes DD coincidences oscillate in the exciton delay") {
    SourceParams src = ideal_source(1.0);
    src.fss_omega_rad_per_ps = 2.0 * 3.14159265358979 / 878.0;
    src.rep_period_ps = 125'000.0;
    LinkParams link;
    link.reflectance = 0.0;
    const double duration_s = 125'000.0e-12 * 3e5;
    const auto [stream, truth] = simulate_run(src, link, quiet_clock(),
                                              MeasurementConfig::from_label("DD"),
                                              duration_s, 26);
    const auto t0 = channel_times(stream, 0);
    const auto t1 = channel_times(stream, 1);
    // P(DD | t_d) = (1 + cos(omega t_d))/4: delays near the half period
    // should be depleted relative to delays near zero.
    std::size_t near_zero = 0, near_half = 0;
    for (const auto t : t1) {
        const double d = matched_delay(t0, t);
        if (d < 0.0 || d > 60'000.0) continue;  // no same-pulse biexciton tag
        const double phase = std::fmod(d, 878.0);
        if (phase < 110.0) ++near_zero;
        if (std::fabs(phase - 439.0) < 55.0) ++near_half;
    }
    CHECK(near_zero > 20 * std::max<std::size_t>(near_half, 1));
}

TEST_CASE("normalized cascade correlation peaks far above background") {
    SourceParams src = ideal_source(2e-4);
    src.background_rate_hz = 200.0;
    LinkParams link;
    link.reflectance = 0.0;
    ClockParams clk;
    clk.set_uniform_jitter(100.0);
    const auto [stream, truth] = simulate_run(src, link, clk,
                                              MeasurementConfig::unpolarized(), 5.0, 55);
    const auto t1 = channel_times(stream, 1);
    const auto t0 = channel_times(stream, 0);
    const auto h = correlate(t1, t0, -50'000, 50'000, 100);
    const auto g2 = g2_normalize(h);
    const double peak = *std::max_element(g2.begin(), g2.end());
    std::vector<double> bg(g2.begin(), g2.begin() + 200);  // far left of the peak
    const double bg_mean =
        std::accumulate(bg.begin(), bg.end(), 0.0) / static_cast<double>(bg.size());
    CHECK(peak > 50.0 * std::max(bg_mean, 1e-12));
}

TEST_CASE("blinking gates emission by the duty cycle") {
    SourceParams src = ideal_source(1.0);
    src.blink_on_ms = 0.5;
    src.blink_off_ms = 0.5;
    const double duration_s = 0.05;  // 100 blink segments on average
    const auto [stream, truth] =
        simulate_run(src, LinkParams{}, quiet_clock(),
                     MeasurementConfig::unpolarized(), duration_s, 27);
    const double duty = static_cast<double>(truth.pairs_emitted) /
                        static_cast<double>(truth.pulses);
    CHECK(duty > 0.3);
    CHECK(duty < 0.7);
}

TEST_CASE("background tags appear on all channels") {
    SourceParams src = ideal_source(0.0);
    src.background_rate_hz = 10'000.0;
    const auto [stream, truth] =
        simulate_run(src, LinkParams{}, quiet_clock(),
                     MeasurementConfig::unpolarized(), 1.0, 28);
    for (int ch = 0; ch < 3; ++ch) {
        const double n = static_cast<double>(truth.background_counts[ch]);
        CHECK(std::fabs(n - 10'000.0) < 5.0 * std::sqrt(10'000.0));
    }
    CHECK(stream.size() ==
          truth.background_counts[0] + truth.background_counts[1] +
              truth.background_counts[2]);
}

TEST_CASE("tomography set provides all sixteen settings") {
    SourceParams src = ideal_source(0.01);
    LinkParams link;
    link.reflectance = 0.0;
    const auto runs =
        simulate_tomography_set(src, link, quiet_clock(), 0.001, 29);
    REQUIRE(runs.size() == 16);
    const auto settings = default_tomography_settings();
    for (std::size_t i = 0; i < 16; ++i) CHECK(runs[i].setting.label == settings[i].label);
    // tiny duration: some streams may be empty, which must be tolerated
    for (const auto& run : runs) CHECK(run.stream.channel_count() == 3);
}

TEST_CASE("invalid parameters are rejected") {
    CHECK_THROWS_AS(simulate_run(ideal_source(), LinkParams{}, quiet_clock(),
                                 MeasurementConfig::unpolarized(), 0.0, 1),
                    ArgumentError);
    SourceParams bad = ideal_source();
    bad.pair_prob = 1.2;
    CHECK_THROWS_AS(simulate_run(bad, LinkParams{}, quiet_clock(),
                                 MeasurementConfig::unpolarized(), 1.0, 1),
                    ArgumentError);
    LinkParams bad_link;
    bad_link.reflectance = -0.1;
    CHECK_THROWS_AS(simulate_run(ideal_source(), bad_link, quiet_clock(),
                                 MeasurementConfig::unpolarized(), 1.0, 1),
                    ArgumentError);
    CHECK_THROWS_AS(MeasurementConfig::from_label("XY"), ArgumentError);
    CHECK_THROWS_AS(MeasurementConfig::from_label("HHH"), ArgumentError);
}

TEST_CASE("ground truth report is key = value text") {
    const auto [stream, truth] =
        simulate_run(ideal_source(0.1), LinkParams{}, quiet_clock(),
                     MeasurementConfig::unpolarized(), 0.001, 30);
    const std::string report = ground_truth_report(truth);
    CHECK(report.find("offset_total_ps = ") != std::string::npos);
    CHECK(report.find("signal_counts_ch2 = ") != std::string::npos);
}

TEST_CASE("waveplate unitary composes to identity with negated phi") {
    const Eigen::Matrix2cd u = waveplate_unitary(0.4545, -0.6763);
    const Eigen::Matrix2cd v = waveplate_unitary(0.4545, 0.6763);
    CHECK((u * v - Eigen::Matrix2cd::Identity()).norm() < 1e-12);
    CHECK((u * u.adjoint() - Eigen::Matrix2cd::Identity()).norm() < 1e-12);
}
