#include "chronon/peakfit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "chronon/optim.hpp"

namespace chronon {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Scaled complementary error function, e^{w^2} erfc(w), for w >= 0.
double erfcx_pos(double w) {
    if (w < 25.0) return std::exp(w * w) * std::erfc(w);
    const double u = 1.0 / (w * w);
    return (1.0 - 0.5 * u + 0.75 * u * u - 1.875 * u * u * u) / (w * std::sqrt(kPi));
}

// Two-sided exponential exp(-|x|/tau) convolved with a zero-mean Gaussian of
// width sigma. Evaluated via the stable erfcx form; peak value E(0) < 1.
double exp2side_gauss(double x, double tau, double sigma) {
    if (sigma <= 0.0) return std::exp(-std::fabs(x) / tau);
    auto one_side = [&](double xx) {
        const double w = (sigma / tau - xx / sigma) * (1.0 / std::sqrt(2.0));
        if (w <= 0.0)
            return std::exp(sigma * sigma / (2.0 * tau * tau) - xx / tau) * std::erfc(w);
        return erfcx_pos(w) * std::exp(-xx * xx / (2.0 * sigma * sigma));
    };
    return 0.5 * (one_side(x) + one_side(-x));
}

std::vector<double> bin_centers(const CorrelationHistogram& h) {
    std::vector<double> t(h.counts.size());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = h.bin_center_ps(k);
    return t;
}

double vec_median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.end() - (v.size() - mid), v.end());
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return v[mid];
}

}  // namespace

std::array<double, CascadeParams::count> CascadeParams::to_array() const {
    return {amplitude, osc_amplitude, tau_rise_ps,   tau_decay_ps,
            omega_rad_per_ps, phase_rad, background, t0_ps};
}

CascadeParams CascadeParams::from_array(const std::array<double, count>& a) {
    CascadeParams p;
    p.amplitude = a[0];
    p.osc_amplitude = a[1];
    p.tau_rise_ps = a[2];
    p.tau_decay_ps = a[3];
    p.omega_rad_per_ps = a[4];
    p.phase_rad = a[5];
    p.background = a[6];
    p.t0_ps = a[7];
    return p;
}

double cascade_model(const CascadeParams& p, double t_ps) {
    const double s = t_ps - p.t0_ps;
    if (s < 0.0) return p.background;
    const double rise = 1.0 - std::exp(-s / p.tau_rise_ps);
    const double decay = std::exp(-s / p.tau_decay_ps);
    const double osc = 1.0 + p.osc_amplitude * std::cos(p.omega_rad_per_ps * s + p.phase_rad);
    return p.amplitude * rise * decay * osc + p.background;
}

double cascade_model_bin_mean(const CascadeParams& p, double t_lo_ps, double t_hi_ps) {
    const double mid = 0.5 * (t_lo_ps + t_hi_ps);
    return (cascade_model(p, t_lo_ps) + 4.0 * cascade_model(p, mid) +
            cascade_model(p, t_hi_ps)) /
           6.0;
}

namespace {
void cascade_gradient(const CascadeParams& p, double t_ps, double* g);
}

std::array<double, CascadeParams::count> cascade_model_gradient(const CascadeParams& p,
                                                                double t_ps) {
    std::array<double, CascadeParams::count> g{};
    cascade_gradient(p, t_ps, g.data());
    return g;
}

namespace {

void cascade_gradient(const CascadeParams& p, double t_ps, double* g) {
    const double s = t_ps - p.t0_ps;
    std::fill(g, g + CascadeParams::count, 0.0);
    g[6] = 1.0;  // background
    if (s < 0.0) return;
    const double er = std::exp(-s / p.tau_rise_ps);
    const double ed = std::exp(-s / p.tau_decay_ps);
    const double rise = 1.0 - er;
    const double arg = p.omega_rad_per_ps * s + p.phase_rad;
    const double cosv = std::cos(arg);
    const double sinv = std::sin(arg);
    const double osc = 1.0 + p.osc_amplitude * cosv;
    const double env = rise * ed;

    g[0] = env * osc;                                   // A
    g[1] = p.amplitude * env * cosv;                    // B
    g[2] = p.amplitude * osc * ed * (-er * s / (p.tau_rise_ps * p.tau_rise_ps));
    g[3] = p.amplitude * osc * env * (s / (p.tau_decay_ps * p.tau_decay_ps));
    g[4] = -p.amplitude * env * p.osc_amplitude * sinv * s;  // omega
    g[5] = -p.amplitude * env * p.osc_amplitude * sinv;      // phi
    // d/dt0 = -(d/ds)
    const double denv_ds = (er / p.tau_rise_ps) * ed - rise * ed / p.tau_decay_ps;
    const double dosc_ds = -p.osc_amplitude * p.omega_rad_per_ps * sinv;
    g[7] = -p.amplitude * (denv_ds * osc + env * dosc_ds);
}

struct CascadeProblem {
    std::vector<double> t;       // bin centers, shifted by t_ref
    double half_bin = 0.5;
    std::vector<double> counts;
    std::vector<double> inv_sigma;

    void residuals(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
        const CascadeParams cp = CascadeParams::from_array(
            {p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]});
        for (std::size_t i = 0; i < t.size(); ++i)
            r[static_cast<int>(i)] =
                (cascade_model_bin_mean(cp, t[i] - half_bin, t[i] + half_bin) -
                 counts[i]) *
                inv_sigma[i];
    }

    void jacobian(const Eigen::VectorXd& p, Eigen::MatrixXd& jac) const {
        const CascadeParams cp = CascadeParams::from_array(
            {p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]});
        double gl[CascadeParams::count];
        double gm[CascadeParams::count];
        double gr[CascadeParams::count];
        for (std::size_t i = 0; i < t.size(); ++i) {
            cascade_gradient(cp, t[i] - half_bin, gl);
            cascade_gradient(cp, t[i], gm);
            cascade_gradient(cp, t[i] + half_bin, gr);
            for (int k = 0; k < CascadeParams::count; ++k)
                jac(static_cast<int>(i), k) =
                    (gl[k] + 4.0 * gm[k] + gr[k]) / 6.0 * inv_sigma[i];
        }
    }
};

struct OscSeed {
    double omega = 0.0;
    double b = 0.0;
    double phi = 0.0;
    double gain = 0.0;  // weighted SSE reduction of the linear fit
};

// Given the envelope parameters, the oscillation enters linearly as
// env * (Bc cos(w s) - Bs sin(w s)); scan omega, solve the 2x2 normal
// equations, and return the strongest well-separated candidates.
std::vector<OscSeed> seed_oscillation(const CascadeProblem& prob,
                                      const CascadeParams& envelope,
                                      double bin_width, int max_candidates) {
    std::vector<OscSeed> scan;
    const double span = prob.t.back() - prob.t.front();
    if (span <= 0.0) return scan;
    const double omega_lo = 2.0 * kPi / span;
    const double omega_hi = kPi / bin_width;
    if (!(omega_hi > omega_lo)) return scan;

    std::vector<double> env(prob.t.size());
    for (std::size_t i = 0; i < prob.t.size(); ++i) {
        CascadeParams e = envelope;
        e.osc_amplitude = 0.0;
        env[i] = cascade_model(e, prob.t[i]) - envelope.background;
    }

    const int steps = 600;
    scan.reserve(steps + 1);
    for (int j = 0; j <= steps; ++j) {
        const double omega =
            omega_lo * std::pow(omega_hi / omega_lo, static_cast<double>(j) / steps);
        double scc = 0, sss = 0, scs = 0, syc = 0, sys = 0;
        for (std::size_t i = 0; i < prob.t.size(); ++i) {
            const double s = prob.t[i] - envelope.t0_ps;
            if (s < 0.0 || env[i] <= 0.0) continue;
            const double wgt = prob.inv_sigma[i] * prob.inv_sigma[i];
            const double c = env[i] * std::cos(omega * s);
            const double sn = env[i] * std::sin(omega * s);
            const double y = prob.counts[i] - (env[i] + envelope.background);
            scc += wgt * c * c;
            sss += wgt * sn * sn;
            scs += wgt * c * sn;
            syc += wgt * y * c;
            sys += wgt * y * sn;
        }
        const double det = scc * sss - scs * scs;
        if (std::fabs(det) < 1e-30) continue;
        const double bc = (syc * sss - sys * scs) / det;
        const double bs = (sys * scc - syc * scs) / det;
        OscSeed seed;
        seed.omega = omega;
        seed.b = std::min(std::sqrt(bc * bc + bs * bs), 0.95);
        seed.phi = std::atan2(-bs, bc);
        seed.gain = bc * syc + bs * sys;
        scan.push_back(seed);
    }

    std::sort(scan.begin(), scan.end(),
              [](const OscSeed& a, const OscSeed& b) { return a.gain > b.gain; });
    std::vector<OscSeed> picked;
    for (const OscSeed& s : scan) {
        if (static_cast<int>(picked.size()) >= max_candidates) break;
        bool separated = true;
        for (const OscSeed& p : picked)
            separated = separated && std::fabs(s.omega - p.omega) > 0.08 * p.omega;
        if (separated) picked.push_back(s);
    }
    return picked;
}

}  // namespace

CascadeFit fit_cascade(const CorrelationHistogram& h,
                       const std::optional<CascadeParams>& init,
                       const CascadeFitOptions& options) {
    if (h.counts.size() < 30)
        throw ArgumentError("fit_cascade: need at least 30 bins spanning the peak");

    const double bin_w = static_cast<double>(h.bin_width_ps);
    const double t_ref = static_cast<double>(h.tau_start_ps);

    CascadeProblem prob;
    prob.t = bin_centers(h);
    for (double& t : prob.t) t -= t_ref;  // local coordinates for conditioning
    prob.half_bin = 0.5 * bin_w;
    prob.counts.resize(h.counts.size());
    prob.inv_sigma.resize(h.counts.size());
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        prob.counts[i] = static_cast<double>(h.counts[i]);
        prob.inv_sigma[i] = 1.0 / std::sqrt(std::max(prob.counts[i], 1.0));
    }

    auto res_fn = [&prob](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        prob.residuals(p, r);
    };
    auto jac_fn = [&prob](const Eigen::VectorXd& p, Eigen::MatrixXd& j) {
        prob.jacobian(p, j);
    };
    Eigen::VectorXd lb(8), ub(8);
    lb << 0, -1, 1e-3, 1e-3, 0, -2.0 * kPi, 0, -1e18;
    ub << 1e18, 1, 1e9, 1e9, 100, 2.0 * kPi, 1e18, 1e18;

    std::vector<CascadeParams> starts;
    if (init) {
        CascadeParams p0 = *init;
        p0.t0_ps -= t_ref;
        starts.push_back(p0);
    } else {
        std::vector<double> sorted = prob.counts;
        const double med = vec_median(sorted);
        for (double& x : sorted) x = std::fabs(x - med);
        const double mad = vec_median(sorted);
        const double thresh = med + 5.0 * std::max(1.4826 * mad, 1.0);

        std::size_t first = 0;
        const std::size_t peak_idx =
            std::max_element(prob.counts.begin(), prob.counts.end()) -
            prob.counts.begin();
        for (std::size_t i = 0; i <= peak_idx && i < prob.counts.size(); ++i) {
            if (prob.counts[i] > thresh) {
                first = i;
                break;
            }
        }
        CascadeParams p0;
        p0.t0_ps = prob.t[first] - 0.5 * bin_w;
        p0.background = med;
        p0.amplitude = std::max(prob.counts[peak_idx] - med, 1.0);
        p0.tau_decay_ps = 1140.0;
        p0.tau_rise_ps = 3.0 * bin_w;
        p0.omega_rad_per_ps = options.init_omega_rad_per_ps;
        p0.phase_rad = 0.0;
        p0.osc_amplitude = 0.0;

        // Envelope fit first, then start the full fit from each plausible
        // oscillation frequency of the residuals.
        Eigen::VectorXd q0(8);
        const auto a0 = p0.to_array();
        for (int k = 0; k < 8; ++k) q0[k] = a0[k];
        Eigen::VectorXd ub_env = ub;
        ub_env[1] = 0.0;  // oscillation off
        optim::LmOptions env_lmo;
        env_lmo.max_iterations = std::min(options.max_iterations, 300);
        const auto env_fit = optim::levenberg_marquardt(
            res_fn, jac_fn, q0, lb, ub_env, static_cast<int>(prob.t.size()), env_lmo);
        CascadeParams env = CascadeParams::from_array(
            {env_fit.params[0], env_fit.params[1], env_fit.params[2],
             env_fit.params[3], env_fit.params[4], env_fit.params[5],
             env_fit.params[6], env_fit.params[7]});

        for (const OscSeed& seed : seed_oscillation(prob, env, bin_w, 3)) {
            CascadeParams s = env;
            s.omega_rad_per_ps = seed.omega;
            s.osc_amplitude = seed.b;
            s.phase_rad = seed.phi;
            starts.push_back(s);
        }
        env.osc_amplitude = 0.0;
        starts.push_back(env);
    }

    optim::LmOptions lmo;
    lmo.max_iterations = options.max_iterations;
    std::optional<optim::LmResult> best;
    for (const CascadeParams& s : starts) {
        Eigen::VectorXd q0(8);
        const auto arr0 = s.to_array();
        for (int k = 0; k < 8; ++k) q0[k] = arr0[k];
        const auto lm_try = optim::levenberg_marquardt(
            res_fn, jac_fn, q0, lb, ub, static_cast<int>(prob.t.size()), lmo);
        if (!best || (lm_try.converged && !best->converged) ||
            (lm_try.converged == best->converged && lm_try.rss < best->rss))
            best = lm_try;
    }
    const optim::LmResult& lm = *best;
    if (!lm.converged)
        throw FitError("fit_cascade: no convergence after " +
                       std::to_string(lm.iterations) + " iterations, rss=" +
                       std::to_string(lm.rss));

    CascadeFit fit;
    fit.value = CascadeParams::from_array({lm.params[0], lm.params[1], lm.params[2],
                                           lm.params[3], lm.params[4], lm.params[5],
                                           lm.params[6], lm.params[7]});
    // (B, phi) -> (-B, phi + pi) is the same model; report B >= 0 with the
    // phase wrapped into (-pi, pi].
    if (fit.value.osc_amplitude < 0.0) {
        fit.value.osc_amplitude = -fit.value.osc_amplitude;
        fit.value.phase_rad += kPi;
    }
    fit.value.phase_rad = std::remainder(fit.value.phase_rad, 2.0 * kPi);
    std::array<double, 8> se{};
    for (int k = 0; k < 8; ++k) se[k] = std::sqrt(std::max(lm.covariance(k, k), 0.0));
    fit.stderr_ = CascadeParams::from_array(se);
    for (int k = 0; k < 8; ++k)
        fit.at_bound[k] = lm.at_lower_bound[k] || lm.at_upper_bound[k];
    // t0 touching the (huge) box is meaningless; only physical bounds count.
    fit.at_bound[7] = false;
    fit.rss = lm.rss;
    fit.iterations = lm.iterations;
    fit.converged = lm.converged;

    // Position of the model maximum, then back to absolute coordinates.
    // An oscillation amplitude consistent with zero would steer the argmax
    // anywhere along the flat top; suppress it for the peak location.
    const bool osc_significant =
        std::fabs(lm.params[1]) > std::max(0.02, 3.0 * se[1]);
    auto argmax_of = [&](CascadeParams cp) {
        if (!osc_significant) cp.osc_amplitude = 0.0;
        const double a = cp.t0_ps;
        const double b = cp.t0_ps + 5.0 * cp.tau_decay_ps;
        return optim::golden_section_max(
            [&](double t) { return cascade_model(cp, t); }, a, b, 1e-6);
    };
    const double tau_max_local = argmax_of(fit.value);
    fit.tau_max_ps = tau_max_local + t_ref;

    // Delta-method error on the argmax.
    Eigen::VectorXd grad(8);
    for (int k = 0; k < 8; ++k) {
        const double h_k = 1e-4 * std::max(1.0, std::fabs(lm.params[k]));
        auto pv = lm.params;
        pv[k] += h_k;
        CascadeParams cp = CascadeParams::from_array(
            {pv[0], pv[1], pv[2], pv[3], pv[4], pv[5], pv[6], pv[7]});
        const double up = argmax_of(cp);
        pv[k] = lm.params[k] - h_k;
        cp = CascadeParams::from_array(
            {pv[0], pv[1], pv[2], pv[3], pv[4], pv[5], pv[6], pv[7]});
        const double dn = argmax_of(cp);
        grad[k] = (up - dn) / (2.0 * h_k);
    }
    fit.tau_max_err_ps = std::sqrt(std::max(0.0, grad.dot(lm.covariance * grad)));

    // Goodness of fit with model-based Poisson weights.
    double chi2 = 0.0;
    for (std::size_t i = 0; i < prob.t.size(); ++i) {
        const double m = cascade_model_bin_mean(fit.value, prob.t[i] - prob.half_bin,
                                                prob.t[i] + prob.half_bin);
        const double d = prob.counts[i] - m;
        chi2 += d * d / std::max(m, 1.0);
    }
    const int dof = static_cast<int>(prob.t.size()) - 8;
    fit.chi2_reduced = dof > 0 ? chi2 / dof : 0.0;

    fit.value.t0_ps += t_ref;
    return fit;
}

namespace {

struct G2Problem {
    std::vector<double> t;
    std::vector<double> counts;
    std::vector<double> inv_sigma;
    std::vector<double> peak_pos;  // k * T for each modeled pulse index
    std::vector<int> peak_idx;
    double sigma_irf = 0.0;
    double period = 0.0;

    // p = (a0, a_side, tau, b, tau_b, baseline)
    double model(const Eigen::VectorXd& p, double tt) const {
        double v = p[5];
        // beyond ~12 decay constants a peak contributes nothing
        const double cutoff = std::max(period, 12.0 * p[2]);
        for (std::size_t k = 0; k < peak_pos.size(); ++k) {
            const double x = tt - peak_pos[k];
            if (std::fabs(x) > cutoff) continue;
            const double amp =
                peak_idx[k] == 0
                    ? p[0]
                    : p[1] * (1.0 + p[3] * std::exp(-std::fabs(peak_pos[k]) / p[4]));
            v += amp * exp2side_gauss(x, p[2], sigma_irf);
        }
        return v;
    }

    void residuals(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
        for (std::size_t i = 0; i < t.size(); ++i)
            r[static_cast<int>(i)] = (model(p, t[i]) - counts[i]) * inv_sigma[i];
    }
};

}  // namespace

G2Fit fit_g2(const CorrelationHistogram& h, double rep_period_ps,
             const G2FitOptions& options) {
    if (rep_period_ps <= 0.0) throw ArgumentError("fit_g2: rep period must be positive");
    const double T = rep_period_ps;
    const double t_lo = static_cast<double>(h.tau_start_ps);
    const double t_hi = static_cast<double>(h.tau_end_ps());
    if (t_lo > -7.0 * T || t_hi < 7.0 * T)
        throw ArgumentError("fit_g2: histogram must span >= 7 pulse periods per side");

    G2Problem prob;
    prob.t = bin_centers(h);
    prob.counts.resize(h.counts.size());
    prob.inv_sigma.resize(h.counts.size());
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        prob.counts[i] = static_cast<double>(h.counts[i]);
        prob.inv_sigma[i] = 1.0 / std::sqrt(std::max(prob.counts[i], 1.0));
    }
    prob.sigma_irf = options.irf_convention == IrfWidthConvention::Sigma
                         ? options.irf_width_ps
                         : options.irf_width_ps / 2.3548200450309493;
    prob.period = T;

    const int k_min = static_cast<int>(std::ceil((t_lo - 5.0 * T) / T));
    const int k_max = static_cast<int>(std::floor((t_hi + 5.0 * T) / T));
    for (int k = k_min; k <= k_max; ++k) {
        prob.peak_idx.push_back(k);
        prob.peak_pos.push_back(k * T);
    }

    // Initial guesses from the raw histogram: amplitude near each expected
    // peak position, baseline from the valleys.
    auto height_near = [&](double pos) {
        double best = 0.0;
        for (std::size_t i = 0; i < prob.t.size(); ++i)
            if (std::fabs(prob.t[i] - pos) < T / 4) best = std::max(best, prob.counts[i]);
        return best;
    };
    std::vector<double> far_heights;
    double near_sum = 0.0;
    int near_n = 0;
    for (int k = k_min; k <= k_max; ++k) {
        if (k == 0) continue;
        const double hgt = height_near(k * T);
        if (std::abs(k) >= options.far_peak_min_index)
            far_heights.push_back(hgt);
        else {
            near_sum += hgt;
            ++near_n;
        }
    }
    std::vector<double> valleys;
    for (std::size_t i = 0; i < prob.t.size(); ++i) {
        const double frac = std::fabs(std::remainder(prob.t[i], T));
        if (frac > 0.4 * T) valleys.push_back(prob.counts[i]);
    }
    const double baseline0 = vec_median(valleys);
    const double far0 = std::max(vec_median(far_heights) - baseline0, 1.0);
    const double near0 = near_n > 0 ? std::max(near_sum / near_n - baseline0, far0) : far0;
    const double e0 = exp2side_gauss(0.0, T / 8.0, prob.sigma_irf);

    Eigen::VectorXd p0(6), lb(6), ub(6);
    p0 << std::max(height_near(0.0) - baseline0, 0.0) / e0, far0 / e0, T / 8.0,
        std::max(near0 / far0 - 1.0, 0.0), 5.0 * T, baseline0;
    lb << 0, 1e-9, 1.0, 0, T, 0;
    ub << 1e18, 1e18, 10.0 * T, 100.0, 1e9 * T, 1e18;

    optim::LmOptions lmo;
    lmo.max_iterations = options.max_iterations;
    auto res_fn = [&prob](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        prob.residuals(p, r);
    };
    const auto lm = optim::levenberg_marquardt(res_fn, nullptr, p0, lb, ub,
                                               static_cast<int>(prob.t.size()), lmo);
    if (!lm.converged)
        throw FitError("fit_g2: no convergence, rss=" + std::to_string(lm.rss));

    G2Fit fit;
    fit.center_amplitude = lm.params[0];
    fit.side_amplitude = lm.params[1];
    fit.tau_decay_ps = lm.params[2];
    fit.tau_decay_err_ps = std::sqrt(std::max(lm.covariance(2, 2), 0.0));
    fit.blinking_amplitude = lm.params[3];
    fit.blinking_time_ps = lm.params[4];
    fit.baseline = lm.params[5];
    fit.irf_sigma_ps = prob.sigma_irf;
    fit.rss = lm.rss;
    fit.converged = lm.converged;
    fit.peak_indices = prob.peak_idx;
    fit.peak_amplitudes.resize(prob.peak_idx.size());

    // g2(0) as the area ratio over one pulse period: center window area
    // (peak + uncorrelated floor) against the mean far side-peak window.
    // The floor matters: uncorrelated light contributes coincidences without
    // a peaked component.
    auto g2_zero_of = [&](const Eigen::VectorXd& p) {
        const double peak_area = 2.0 * p[2];  // integral of the two-sided exp
        const double floor_area = p[5] * T;
        double far_mean = 0.0;
        int n = 0;
        for (std::size_t k = 0; k < prob.peak_idx.size(); ++k) {
            if (std::abs(prob.peak_idx[k]) < options.far_peak_min_index) continue;
            far_mean += p[1] * (1.0 + p[3] * std::exp(-std::fabs(prob.peak_pos[k]) / p[4]));
            ++n;
        }
        far_mean /= std::max(n, 1);
        const double denom = far_mean * peak_area + floor_area;
        return denom > 0.0 ? (p[0] * peak_area + floor_area) / denom : 0.0;
    };
    for (std::size_t k = 0; k < prob.peak_idx.size(); ++k)
        fit.peak_amplitudes[k] =
            prob.peak_idx[k] == 0
                ? lm.params[0]
                : lm.params[1] *
                      (1.0 + lm.params[3] * std::exp(-std::fabs(prob.peak_pos[k]) / lm.params[4]));
    fit.g2_zero = g2_zero_of(lm.params);

    Eigen::VectorXd grad(6);
    for (int k = 0; k < 6; ++k) {
        const double hk = 1e-5 * std::max(1.0, std::fabs(lm.params[k]));
        Eigen::VectorXd q = lm.params;
        q[k] += hk;
        const double up = g2_zero_of(q);
        q[k] = lm.params[k] - hk;
        const double dn = g2_zero_of(q);
        grad[k] = (up - dn) / (2.0 * hk);
    }
    fit.g2_zero_err = std::sqrt(std::max(0.0, grad.dot(lm.covariance * grad)));

    double chi2 = 0.0;
    for (std::size_t i = 0; i < prob.t.size(); ++i) {
        const double m = prob.model(lm.params, prob.t[i]);
        const double d = prob.counts[i] - m;
        chi2 += d * d / std::max(m, 1.0);
    }
    const int dof = static_cast<int>(prob.t.size()) - 6;
    fit.chi2_reduced = dof > 0 ? chi2 / dof : 0.0;
    return fit;
}

double g2_model(const G2Fit& fit, double rep_period_ps, double t_ps) {
    double v = fit.baseline;
    for (std::size_t k = 0; k < fit.peak_indices.size(); ++k) {
        const double pos = fit.peak_indices[k] * rep_period_ps;
        v += fit.peak_amplitudes[k] * exp2side_gauss(t_ps - pos, fit.tau_decay_ps,
                                                     fit.irf_sigma_ps);
    }
    return v;
}

namespace {

std::string report_impl(const CorrelationHistogram& h,
                        const std::function<double(double)>& model, int n_params) {
    std::ostringstream out;
    out << "# tau_ps model counts residual pull\n";
    double chi2 = 0.0;
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        const double t = h.bin_center_ps(k);
        const double m = model(t);
        const double c = static_cast<double>(h.counts[k]);
        const double res = c - m;
        const double pull = res / std::sqrt(std::max(m, 1.0));
        chi2 += pull * pull;
        out << t << " " << m << " " << c << " " << res << " " << pull << "\n";
    }
    const int dof = static_cast<int>(h.counts.size()) - n_params;
    out << "# chi2 = " << chi2 << ", dof = " << dof
        << ", chi2_reduced = " << (dof > 0 ? chi2 / dof : 0.0) << "\n";
    return out.str();
}

}  // namespace

std::string residual_report(const CascadeFit& fit, const CorrelationHistogram& h) {
    const double half = 0.5 * static_cast<double>(h.bin_width_ps);
    return report_impl(
        h,
        [&](double t) { return cascade_model_bin_mean(fit.value, t - half, t + half); },
        CascadeParams::count);
}

std::string residual_report(const G2Fit& fit, const CorrelationHistogram& h,
                            double rep_period_ps) {
    return report_impl(
        h, [&](double t) { return g2_model(fit, rep_period_ps, t); }, 6);
}

}  // namespace chronon
