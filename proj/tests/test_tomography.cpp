#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "chronon/tomography.hpp"

using namespace chronon;
using namespace chronon::tomo;
using qdsim::MeasurementConfig;

namespace {

using cd = std::complex<double>;

DensityMatrix werner(double p) {
    const Eigen::Vector4cd phi = phi_plus();
    return p * (phi * phi.adjoint()) + (1.0 - p) * DensityMatrix::Identity() / 4.0;
}

// Exact expected counts for a density matrix at flux N, over the default
// sixteen settings.
SettingCounts counts_from_state(const DensityMatrix& rho, double flux,
                                bool poissonize = false, std::uint64_t seed = 0) {
    SettingCounts sc{};
    const auto settings = qdsim::default_tomography_settings();
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < 16; ++i) {
        sc[i].x = settings[i].projection_x;
        sc[i].xx = settings[i].projection_xx;
        const double expected = flux * setting_probability(rho, sc[i].x, sc[i].xx);
        if (poissonize) {
            std::poisson_distribution<std::uint64_t> pois(std::max(expected, 0.0));
            sc[i].coincidences = pois(rng);
        } else {
            sc[i].coincidences = static_cast<std::uint64_t>(std::llround(expected));
        }
    }
    return sc;
}

void check_density_invariants(const DensityMatrix& rho) {
    CHECK((rho - rho.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::fabs(rho.trace().real() - 1.0) < 1e-10);
    Eigen::SelfAdjointEigenSolver<DensityMatrix> es(rho);
    CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

}  // namespace

TEST_CASE("fidelity basics") {
    const Eigen::Vector4cd phi = phi_plus();
    const DensityMatrix pure = phi * phi.adjoint();
    CHECK(fidelity(pure, phi) == doctest::Approx(1.0));
    CHECK(fidelity(DensityMatrix::Identity() / 4.0, phi) == doctest::Approx(0.25));

    for (double angle : {0.3, 1.2, 2.8}) {
        const auto st = qdsim::PolarizationState::phased_bell(angle);
        const DensityMatrix rho = st.amplitudes * st.amplitudes.adjoint();
        CHECK(fidelity(rho, phi) ==
              doctest::Approx((1.0 + std::cos(angle)) / 2.0).epsilon(1e-10));
    }
}

TEST_CASE("fidelity is linear in the state") {
    std::mt19937_64 rng(3);
    const DensityMatrix r1 = werner(0.9);
    const DensityMatrix r2 = werner(0.2);
    const double a = 0.37;
    const DensityMatrix mix = a * r1 + (1.0 - a) * r2;
    CHECK(fidelity(mix, phi_plus()) ==
          doctest::Approx(a * fidelity(r1, phi_plus()) +
                          (1.0 - a) * fidelity(r2, phi_plus()))
              .epsilon(1e-12));
}

TEST_CASE("concurrence of standard states") {
    const Eigen::Vector4cd phi = phi_plus();
    CHECK(concurrence(phi * phi.adjoint()) == doctest::Approx(1.0).epsilon(1e-9));

    Eigen::Vector4cd product = Eigen::Vector4cd::Zero();
    product[0] = 1.0;  // |HH>
    CHECK(concurrence(product * product.adjoint()) < 1e-9);

    for (double p : {0.2, 1.0 / 3.0, 0.6, 0.9})
        CHECK(concurrence(werner(p)) ==
              doctest::Approx(std::max(0.0, (3.0 * p - 1.0) / 2.0)).epsilon(1e-8));
}

TEST_CASE("exact Bell-state counts reconstruct to fidelity > 0.999") {
    const Eigen::Vector4cd phi = phi_plus();
    const auto sc = counts_from_state(phi * phi.adjoint(), 1e4);
    const DensityMatrix rho = mle_reconstruct(sc);
    check_density_invariants(rho);
    CHECK(fidelity(rho, phi) > 0.999);
}

TEST_CASE("werner state counts reproduce the analytic fidelity and concurrence") {
    for (double p : {0.4, 0.8}) {
        const auto sc = counts_from_state(werner(p), 1e5, true,
                                          static_cast<std::uint64_t>(17 + p * 100));
        const DensityMatrix rho = mle_reconstruct(sc);
        check_density_invariants(rho);
        CHECK(std::fabs(fidelity(rho, phi_plus()) - (3.0 * p + 1.0) / 4.0) < 0.01);
        CHECK(std::fabs(concurrence(rho) - std::max(0.0, (3.0 * p - 1.0) / 2.0)) <
              0.02);
    }
}

TEST_CASE("maximally mixed counts reconstruct to the identity") {
    const auto sc = counts_from_state(DensityMatrix::Identity() / 4.0, 1e5, true, 5);
    const DensityMatrix rho = mle_reconstruct(sc);
    CHECK(std::fabs(fidelity(rho, phi_plus()) - 0.25) < 0.01);
    CHECK(concurrence(rho) < 0.01);
}

TEST_CASE("reconstruction is PSD even on pathological counts") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        SettingCounts sc{};
        const auto settings = qdsim::default_tomography_settings();
        for (std::size_t i = 0; i < 16; ++i) {
            sc[i].x = settings[i].projection_x;
            sc[i].xx = settings[i].projection_xx;
            sc[i].coincidences = rng() % 50;
        }
        const DensityMatrix rho = mle_reconstruct(sc);
        check_density_invariants(rho);
    }
}

TEST_CASE("all-zero counts are rejected") {
    SettingCounts sc{};
    const auto settings = qdsim::default_tomography_settings();
    for (std::size_t i = 0; i < 16; ++i) {
        sc[i].x = settings[i].projection_x;
        sc[i].xx = settings[i].projection_xx;
    }
    CHECK_THROWS_AS(mle_reconstruct(sc), ArgumentError);
}

TEST_CASE("haar-random pure states round-trip through counts") {
    std::mt19937_64 rng(29);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int good = 0;
    const int trials = 10;
    for (int trial = 0; trial < trials; ++trial) {
        Eigen::Vector4cd psi;
        for (int i = 0; i < 4; ++i) psi[i] = cd(gauss(rng), gauss(rng));
        psi.normalize();
        const DensityMatrix truth = psi * psi.adjoint();
        const auto sc = counts_from_state(truth, 1e5, true, 1000 + trial);
        const DensityMatrix rho = mle_reconstruct(sc);
        const double f = (psi.adjoint() * rho * psi)(0, 0).real();
        if (f > 0.99) ++good;
    }
    CHECK(good >= trials - 1);
}

TEST_CASE("waveplate correction basics") {
    const DensityMatrix rho = werner(0.85);
    WaveplateCorrection none;
    CHECK((apply_waveplate(rho, none) - rho).cwiseAbs().maxCoeff() < 1e-14);

    WaveplateCorrection corr;
    corr.theta_rad = 0.4545;
    corr.phi_rad = -0.6763;
    corr.target = WaveplateCorrection::Target::Both;
    const DensityMatrix rot = apply_waveplate(rho, corr);
    check_density_invariants(rot);
    // local unitaries preserve the spectrum and the concurrence
    Eigen::SelfAdjointEigenSolver<DensityMatrix> e1(rho), e2(rot);
    CHECK((e1.eigenvalues() - e2.eigenvalues()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::fabs(concurrence(rot) - concurrence(rho)) < 1e-10);
}

TEST_CASE("waveplate correction undoes a birefringent link") {
    // Link rotation on the exciton qubit with the inverse parameters.
    const Eigen::Matrix2cd u_link = qdsim::waveplate_unitary(0.4545, 0.6763);
    Eigen::Matrix4cd big = Eigen::Matrix4cd::Zero();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            big.block<2, 2>(2 * i, 2 * j) =
                u_link(i, j) * Eigen::Matrix2cd::Identity();
    const Eigen::Vector4cd phi = phi_plus();
    const DensityMatrix rotated = big * (phi * phi.adjoint()) * big.adjoint();
    const double f_raw = fidelity(rotated, phi);

    WaveplateCorrection corr;
    corr.theta_rad = 0.4545;
    corr.phi_rad = -0.6763;  // inverse of the link rotation
    const DensityMatrix fixed = apply_waveplate(rotated, corr);
    CHECK(fidelity(fixed, phi) > 0.999);
    CHECK(fidelity(fixed, phi) > f_raw);
}

namespace {

std::vector<std::pair<MeasurementConfig, const TagStream*>> make_inputs(
    const std::vector<qdsim::TomographyRun>& runs) {
    std::vector<std::pair<MeasurementConfig, const TagStream*>> inputs;
    for (const auto& r : runs) inputs.emplace_back(r.setting, &r.stream);
    return inputs;
}

}  // namespace

TEST_CASE("projected coincidences of the ideal state") {
    qdsim::SourceParams src;
    src.pair_prob = 0.02;
    qdsim::LinkParams link;
    link.reflectance = 0.0;
    qdsim::ClockParams clk;
    clk.set_uniform_jitter(0.0);
    const auto runs = qdsim::simulate_tomography_set(src, link, clk, 0.05, 31);
    const auto inputs = make_inputs(runs);

    const auto bins = project_coincidences(inputs, 0, 16, 64);
    REQUIRE(bins.size() == 64);
    std::uint64_t hh = 0, vv = 0, hv = 0, vh = 0;
    for (const auto& bin : bins)
        for (const auto& pc : bin) {
            const std::string label{qdsim::pol_to_char(pc.x), qdsim::pol_to_char(pc.xx)};
            if (label == "HH") hh += pc.coincidences;
            if (label == "VV") vv += pc.coincidences;
            if (label == "HV") hv += pc.coincidences;
            if (label == "VH") vh += pc.coincidences;
        }
    CHECK(hv == 0);
    CHECK(vh == 0);
    CHECK(hh > 1000);
    CHECK(std::fabs(static_cast<double>(hh) - static_cast<double>(vv)) <
          5.0 * std::sqrt(static_cast<double>(hh)));
}

TEST_CASE("missing settings are reported by label") {
    qdsim::SourceParams src;
    src.pair_prob = 0.01;
    qdsim::ClockParams clk;
    clk.set_uniform_jitter(0.0);
    auto runs = qdsim::simulate_tomography_set(src, qdsim::LinkParams{}, clk, 0.001, 32);
    auto inputs = make_inputs(runs);
    inputs[3].first.label = "HH";  // duplicate; "VH" now missing
    try {
        project_coincidences(inputs, 0, 16, 8);
        FAIL("expected ArgumentError");
    } catch (const ArgumentError& e) {
        CHECK(std::string(e.what()).find("VH") != std::string::npos);
    }
}

TEST_CASE("time-binned fidelity oscillates at the fine-structure period") {
    qdsim::SourceParams src;
    src.pair_prob = 0.05;
    src.fss_omega_rad_per_ps = 2.0 * 3.14159265358979 / 878.06;
    qdsim::LinkParams link;
    link.reflectance = 0.0;
    qdsim::ClockParams clk;
    clk.set_uniform_jitter(0.0);
    const auto runs = qdsim::simulate_tomography_set(src, link, clk, 0.2, 33);
    const auto inputs = make_inputs(runs);

    TomoConfig cfg;
    cfg.bin_width_ps = 16;
    cfg.window_bins = 120;
    cfg.window_start_tau_ps = 0;
    cfg.mc_resamples = 0;
    cfg.mle.restarts = 2;
    const auto series = tomo_timeseries(inputs, WaveplateCorrection{}, cfg);

    // F(t) = (1 + cos(omega t)) / 2: maxima ~1 near t = 0 and t = 878,
    // minimum ~0 near t = 439.
    int n_valid = 0;
    double f_early = 0, f_mid = 0;
    int n_early = 0, n_mid = 0;
    for (const auto& b : series.bins) {
        if (!b.valid) continue;
        ++n_valid;
        const double t = static_cast<double>(b.tau_ps) + 8.0;
        if (t > 0 && t < 100) {
            f_early += b.fidelity;
            ++n_early;
        }
        if (std::fabs(t - 439.0) < 60.0) {
            f_mid += b.fidelity;
            ++n_mid;
        }
        CHECK(b.concurrence > 0.90);  // pure phased-Bell state per bin
    }
    REQUIRE(n_valid > 60);
    REQUIRE(n_early > 0);
    REQUIRE(n_mid > 0);
    CHECK(f_early / n_early > 0.9);
    CHECK(f_mid / n_mid < 0.15);

    // The exciton-H marginal does not oscillate: HH + HV per bin is half of
    // the HV-basis flux and follows the plain decay envelope.
    auto basis_counts = [&](const TimeBin& b, const char* label) {
        for (const auto& pc : b.counts) {
            const std::string l{qdsim::pol_to_char(pc.x), qdsim::pol_to_char(pc.xx)};
            if (l == label) return static_cast<double>(pc.coincidences);
        }
        return 0.0;
    };
    for (int idx : {4, 20, 36, 52}) {
        const auto& b = series.bins[static_cast<std::size_t>(idx)];
        if (!b.valid) continue;
        const double hh = basis_counts(b, "HH"), hv = basis_counts(b, "HV");
        const double vh = basis_counts(b, "VH"), vv = basis_counts(b, "VV");
        const double total = hh + hv + vh + vv;
        if (total < 200) continue;
        CHECK(std::fabs((hh + hv) / total - 0.5) < 5.0 / std::sqrt(total));
    }
}

TEST_CASE("sparse settings produce invalid bins, not failures") {
    qdsim::SourceParams src;
    src.pair_prob = 1e-4;
    qdsim::ClockParams clk;
    clk.set_uniform_jitter(0.0);
    qdsim::LinkParams link;
    link.reflectance = 0.0;
    const auto runs = qdsim::simulate_tomography_set(src, link, clk, 0.001, 34);
    const auto inputs = make_inputs(runs);
    TomoConfig cfg;
    cfg.window_start_tau_ps = 0;
    cfg.window_bins = 16;
    cfg.mc_resamples = 0;
    const auto series = tomo_timeseries(inputs, WaveplateCorrection{}, cfg);
    for (const auto& b : series.bins)
        if (b.total_counts < cfg.min_counts) CHECK(!b.valid);
}
