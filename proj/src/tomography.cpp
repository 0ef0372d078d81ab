#include "chronon/tomography.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "chronon/optim.hpp"

namespace chronon::tomo {

namespace {

using cd = std::complex<double>;

Eigen::Vector4cd setting_vector(Pol x, Pol xx) {
    const Eigen::Vector2cd a = qdsim::pol_vector(x);
    const Eigen::Vector2cd b = qdsim::pol_vector(xx);
    Eigen::Vector4cd v;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) v[2 * i + j] = a[i] * b[j];
    return v;
}

// T from 16 reals: real diagonal, complex strictly-lower entries.
Eigen::Matrix4cd t_matrix(const double* t) {
    Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
    m(0, 0) = t[0];
    m(1, 1) = t[1];
    m(2, 2) = t[2];
    m(3, 3) = t[3];
    m(1, 0) = cd(t[4], t[5]);
    m(2, 0) = cd(t[6], t[7]);
    m(2, 1) = cd(t[8], t[9]);
    m(3, 0) = cd(t[10], t[11]);
    m(3, 1) = cd(t[12], t[13]);
    m(3, 2) = cd(t[14], t[15]);
    return m;
}

DensityMatrix rho_from_t(const double* t) {
    const Eigen::Matrix4cd m = t_matrix(t);
    DensityMatrix rho = m.adjoint() * m;
    const double tr = rho.trace().real();
    if (tr <= 0.0) return DensityMatrix::Identity() / 4.0;
    return rho / tr;
}

Eigen::Matrix4cd kron2(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
    Eigen::Matrix4cd out;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return out;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct MleProblem {
    std::array<Eigen::Vector4cd, 16> vectors;
    std::array<double, 16> counts;

    // Poissonian cost with the flux N profiled out in closed form.
    double cost(const Eigen::VectorXd& t) const {
        const DensityMatrix rho = rho_from_t(t.data());
        double sum_p = 0.0, sum_n2p = 0.0;
        std::array<double, 16> p{};
        for (int v = 0; v < 16; ++v) {
            double pv = (vectors[v].adjoint() * rho * vectors[v])(0, 0).real();
            pv = std::max(pv, 1e-12);
            p[v] = pv;
            sum_p += pv;
            sum_n2p += counts[v] * counts[v] / pv;
        }
        const double flux = std::sqrt(sum_n2p / sum_p);
        double c = 0.0;
        for (int v = 0; v < 16; ++v) {
            const double d = flux * p[v] - counts[v];
            c += d * d / (2.0 * flux * p[v]);
        }
        return c;
    }
};

}  // namespace

Eigen::Vector4cd phi_plus() {
    Eigen::Vector4cd v = Eigen::Vector4cd::Zero();
    v[0] = cd(1.0 / std::sqrt(2.0), 0.0);
    v[3] = cd(1.0 / std::sqrt(2.0), 0.0);
    return v;
}

double setting_probability(const DensityMatrix& rho, Pol x, Pol xx) {
    const Eigen::Vector4cd v = setting_vector(x, xx);
    return (v.adjoint() * rho * v)(0, 0).real();
}

std::vector<SettingCounts> project_coincidences(
    const std::vector<std::pair<MeasurementConfig, const TagStream*>>& streams,
    std::int64_t window_start_tau_ps, std::int64_t bin_width_ps, int window_bins,
    std::uint16_t channel_x, std::uint16_t channel_xx, int threads) {
    if (window_bins < 1) throw ArgumentError("project_coincidences: need >= 1 bin");

    const auto expected = qdsim::default_tomography_settings();
    if (streams.size() != expected.size())
        throw ArgumentError("project_coincidences: expected " +
                            std::to_string(expected.size()) + " settings, got " +
                            std::to_string(streams.size()));
    std::string missing;
    for (const auto& e : expected) {
        const bool found =
            std::any_of(streams.begin(), streams.end(),
                        [&](const auto& s) { return s.first.label == e.label; });
        if (!found) missing += missing.empty() ? e.label : ", " + e.label;
    }
    if (!missing.empty())
        throw ArgumentError("project_coincidences: missing settings: " + missing);

    const std::int64_t window_end =
        window_start_tau_ps + static_cast<std::int64_t>(window_bins) * bin_width_ps;

    std::vector<SettingCounts> bins(static_cast<std::size_t>(window_bins));
    for (std::size_t s = 0; s < streams.size(); ++s) {
        const auto& [cfg, stream] = streams[s];
        const auto tx = channel_times(*stream, channel_x);
        const auto txx = channel_times(*stream, channel_xx);
        const CorrelationHistogram h = correlate(
            tx, txx, window_start_tau_ps, window_end, bin_width_ps, threads);
        for (int b = 0; b < window_bins; ++b) {
            ProjectionCounts& pc = bins[static_cast<std::size_t>(b)][s];
            pc.x = cfg.projection_x;
            pc.xx = cfg.projection_xx;
            pc.coincidences = h.counts[static_cast<std::size_t>(b)];
        }
    }
    return bins;
}

DensityMatrix mle_reconstruct_t(const SettingCounts& counts, const MleOptions& options,
                                std::array<double, 16>& t_out) {
    MleProblem prob;
    double total = 0.0;
    for (int v = 0; v < 16; ++v) {
        prob.vectors[v] = setting_vector(counts[v].x, counts[v].xx);
        const double n = static_cast<double>(counts[v].coincidences) -
                         counts[v].accidental_estimate;
        prob.counts[v] = std::max(n, 0.0);
        total += prob.counts[v];
    }
    if (total <= 0.0)
        throw ArgumentError("mle_reconstruct: all settings have zero counts");

    optim::BfgsOptions bo;
    bo.max_iterations = options.max_iterations;
    bo.ftol_rel = options.cost_tol;
    bo.gtol = 1e-12;
    auto cost_fn = [&prob](const Eigen::VectorXd& t) { return prob.cost(t); };

    std::mt19937_64 rng(mix(options.seed, 0));
    std::normal_distribution<double> gauss(0.0, 1.0);

    Eigen::VectorXd best_t(16);
    double best_cost = std::numeric_limits<double>::infinity();
    bool any_converged = false;

    std::vector<Eigen::VectorXd> starts;
    if (options.warm_start) {
        Eigen::VectorXd w(16);
        for (int k = 0; k < 16; ++k) w[k] = (*options.warm_start)[k];
        starts.push_back(w);
    }
    {
        // Deterministic start: diagonal T from the HV-basis populations.
        std::array<double, 4> diag{0.25, 0.25, 0.25, 0.25};
        double basis_total = 0.0;
        std::array<double, 4> basis{0, 0, 0, 0};
        for (int v = 0; v < 16; ++v) {
            const auto& c = counts[v];
            auto idx = [&](Pol a, Pol b) -> int {
                if (a == Pol::H && b == Pol::H) return 0;
                if (a == Pol::H && b == Pol::V) return 1;
                if (a == Pol::V && b == Pol::H) return 2;
                if (a == Pol::V && b == Pol::V) return 3;
                return -1;
            };
            const int i = idx(c.x, c.xx);
            if (i >= 0) {
                basis[static_cast<std::size_t>(i)] += prob.counts[v];
                basis_total += prob.counts[v];
            }
        }
        if (basis_total > 0.0)
            for (int i = 0; i < 4; ++i)
                diag[static_cast<std::size_t>(i)] =
                    0.9 * basis[static_cast<std::size_t>(i)] / basis_total + 0.1 * 0.25;
        Eigen::VectorXd d0 = Eigen::VectorXd::Zero(16);
        for (int i = 0; i < 4; ++i) d0[i] = std::sqrt(diag[static_cast<std::size_t>(i)]);
        starts.push_back(d0);
    }
    for (int r = 0; r < options.restarts; ++r) {
        Eigen::VectorXd t(16);
        for (int k = 0; k < 16; ++k) t[k] = 0.5 * gauss(rng);
        starts.push_back(t);
    }

    for (const auto& s : starts) {
        const auto res = optim::bfgs_minimize(cost_fn, s, bo);
        if (res.fmin < best_cost) {
            best_cost = res.fmin;
            best_t = res.x;
            any_converged = any_converged || res.converged;
        }
    }
    if (!std::isfinite(best_cost))
        throw ReconstructionError("mle_reconstruct: optimizer produced no finite cost");
    if (!any_converged)
        throw ReconstructionError("mle_reconstruct: no start converged, best cost " +
                                  std::to_string(best_cost));

    for (int k = 0; k < 16; ++k) t_out[static_cast<std::size_t>(k)] = best_t[k];
    return rho_from_t(best_t.data());
}

DensityMatrix mle_reconstruct(const SettingCounts& counts, const MleOptions& options) {
    std::array<double, 16> t_unused;
    return mle_reconstruct_t(counts, options, t_unused);
}

DensityMatrix apply_waveplate(const DensityMatrix& rho, const WaveplateCorrection& corr) {
    const Eigen::Matrix2cd u = qdsim::waveplate_unitary(corr.theta_rad, corr.phi_rad);
    const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
    Eigen::Matrix4cd big;
    switch (corr.target) {
        case WaveplateCorrection::Target::Exciton: big = kron2(u, id); break;
        case WaveplateCorrection::Target::Biexciton: big = kron2(id, u); break;
        case WaveplateCorrection::Target::Both: big = kron2(u, u); break;
    }
    return big * rho * big.adjoint();
}

double fidelity(const DensityMatrix& rho, const Eigen::Vector4cd& target) {
    const double f = (target.adjoint() * rho * target)(0, 0).real();
    return std::clamp(f, 0.0, 1.0);
}

double concurrence(const DensityMatrix& rho) {
    Eigen::Matrix4cd spinflip = Eigen::Matrix4cd::Zero();
    spinflip(0, 3) = -1;
    spinflip(1, 2) = 1;
    spinflip(2, 1) = 1;
    spinflip(3, 0) = -1;
    const Eigen::Matrix4cd r = rho * spinflip * rho.conjugate() * spinflip;
    Eigen::ComplexEigenSolver<Eigen::Matrix4cd> solver(r, false);
    std::array<double, 4> lambda{};
    for (int i = 0; i < 4; ++i)
        lambda[static_cast<std::size_t>(i)] =
            std::sqrt(std::max(solver.eigenvalues()[i].real(), 0.0));
    std::sort(lambda.begin(), lambda.end(), std::greater<>());
    return std::max(0.0, lambda[0] - lambda[1] - lambda[2] - lambda[3]);
}

TimeBinSeries tomo_timeseries(
    const std::vector<std::pair<MeasurementConfig, const TagStream*>>& streams,
    const WaveplateCorrection& corr, const TomoConfig& config) {
    std::int64_t window_start;
    if (config.window_start_tau_ps) {
        window_start = *config.window_start_tau_ps;
    } else {
        // Locate the coincidence peak on the aggregate of all settings, then
        // back off a couple of bins so the rise is inside the window.
        std::vector<std::uint64_t> all_x, all_xx;
        for (const auto& [cfg, stream] : streams) {
            const auto tx = channel_times(*stream, config.channel_x);
            const auto txx = channel_times(*stream, config.channel_xx);
            all_x.insert(all_x.end(), tx.begin(), tx.end());
            all_xx.insert(all_xx.end(), txx.begin(), txx.end());
        }
        std::sort(all_x.begin(), all_x.end());
        std::sort(all_xx.begin(), all_xx.end());
        const std::int64_t half_span = 20'000'000;  // +-20 us default search
        const PeakSearchResult peak =
            find_peak(all_x, all_xx, -half_span, half_span, config.bin_width_ps);
        window_start = peak.tau_peak_ps - 2 * config.bin_width_ps;
    }

    const auto per_bin_counts =
        project_coincidences(streams, window_start, config.bin_width_ps,
                             config.window_bins, config.channel_x, config.channel_xx,
                             config.threads);

    TimeBinSeries series;
    series.bin_width_ps = config.bin_width_ps;
    series.bins.resize(per_bin_counts.size());

    const Eigen::Vector4cd target = phi_plus();
    const int nthreads = config.threads > 0
                             ? config.threads
                             : std::max(1u, std::thread::hardware_concurrency());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= per_bin_counts.size()) return;
            TimeBin& bin = series.bins[b];
            bin.index = static_cast<int>(b);
            bin.tau_ps = window_start +
                         static_cast<std::int64_t>(b) * config.bin_width_ps;
            bin.counts = per_bin_counts[b];
            std::uint64_t total = 0;
            for (const auto& pc : bin.counts) total += pc.coincidences;
            bin.total_counts = total;
            if (total < config.min_counts) {
                bin.valid = false;
                continue;
            }

            MleOptions mle = config.mle;
            mle.seed = mix(config.mle.seed, b);
            std::array<double, 16> t_point{};
            DensityMatrix rho;
            try {
                rho = mle_reconstruct_t(bin.counts, mle, t_point);
            } catch (const Error&) {
                bin.valid = false;
                continue;
            }
            const DensityMatrix corrected = apply_waveplate(rho, corr);
            bin.rho = corrected;
            bin.fidelity = fidelity(corrected, target);
            bin.concurrence = concurrence(corrected);
            bin.valid = true;

            if (config.mc_resamples > 1) {
                std::mt19937_64 rng(mix(config.seed, 0xC0FFEE + b));
                MleOptions mle_mc = config.mle;
                mle_mc.restarts = 0;
                mle_mc.warm_start = t_point;
                double sf = 0, sf2 = 0, sc = 0, sc2 = 0;
                int n_ok = 0;
                for (int m = 0; m < config.mc_resamples; ++m) {
                    SettingCounts resampled = bin.counts;
                    for (auto& pc : resampled) {
                        std::poisson_distribution<std::uint64_t> pois(
                            std::max<double>(static_cast<double>(pc.coincidences), 0.0));
                        pc.coincidences = pois(rng);
                    }
                    mle_mc.seed = mix(config.seed, b * 1000003 + m);
                    try {
                        const DensityMatrix rho_m = apply_waveplate(
                            mle_reconstruct(resampled, mle_mc), corr);
                        const double f = fidelity(rho_m, target);
                        const double c = concurrence(rho_m);
                        sf += f;
                        sf2 += f * f;
                        sc += c;
                        sc2 += c * c;
                        ++n_ok;
                    } catch (const Error&) {
                        // skip failed resamples
                    }
                }
                if (n_ok > 1) {
                    const double fm = sf / n_ok, cm = sc / n_ok;
                    bin.fidelity_err =
                        std::sqrt(std::max(sf2 / n_ok - fm * fm, 0.0));
                    bin.concurrence_err =
                        std::sqrt(std::max(sc2 / n_ok - cm * cm, 0.0));
                }
            }
        }
    };

    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::future<void>> futures;
        for (int t = 0; t < nthreads; ++t)
            futures.push_back(std::async(std::launch::async, worker));
        for (auto& f : futures) f.get();
    }
    return series;
}

}  // namespace chronon::tomo
