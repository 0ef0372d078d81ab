#include "chronon/optim.hpp"

#include <cmath>

namespace chronon::optim {

void numeric_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& p,
                      int n_residuals, Eigen::MatrixXd& jac) {
    const int n = static_cast<int>(p.size());
    jac.resize(n_residuals, n);
    Eigen::VectorXd rp(n_residuals), rm(n_residuals);
    Eigen::VectorXd q = p;
    for (int k = 0; k < n; ++k) {
        const double h = 1e-6 * std::max(1.0, std::fabs(p[k]));
        q[k] = p[k] + h;
        residuals(q, rp);
        q[k] = p[k] - h;
        residuals(q, rm);
        q[k] = p[k];
        jac.col(k) = (rp - rm) / (2.0 * h);
    }
}

LmResult levenberg_marquardt(const ResidualFn& residuals, const JacobianFn& jacobian,
                             Eigen::VectorXd p0, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, int n_residuals,
                             const LmOptions& options) {
    const int n = static_cast<int>(p0.size());
    auto clamp = [&](Eigen::VectorXd& p) {
        for (int k = 0; k < n; ++k) p[k] = std::clamp(p[k], lower[k], upper[k]);
    };
    clamp(p0);

    Eigen::VectorXd r(n_residuals);
    residuals(p0, r);
    double cost = 0.5 * r.squaredNorm();

    Eigen::MatrixXd jac(n_residuals, n);
    double lambda = options.lambda0;
    LmResult result;
    result.params = p0;
    bool converged = false;
    int iter = 0;
    int slow_steps = 0;

    for (; iter < options.max_iterations && !converged; ++iter) {
        if (jacobian)
            jacobian(result.params, jac);
        else
            numeric_jacobian(residuals, result.params, n_residuals, jac);

        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;

        bool stepped = false;
        for (int attempt = 0; attempt < 25; ++attempt) {
            Eigen::MatrixXd damped = jtj;
            for (int k = 0; k < n; ++k)
                damped(k, k) += lambda * std::max(jtj(k, k), 1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);

            Eigen::VectorXd trial = result.params + delta;
            clamp(trial);
            Eigen::VectorXd r_trial(n_residuals);
            residuals(trial, r_trial);
            const double cost_trial = 0.5 * r_trial.squaredNorm();

            if (cost_trial < cost) {
                const double dcost = cost - cost_trial;
                bool small_step = true;
                for (int k = 0; k < n; ++k)
                    small_step = small_step &&
                                 std::fabs(trial[k] - result.params[k]) <=
                                     options.xtol * std::max(std::fabs(trial[k]), 1.0);
                result.params = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = std::max(lambda * options.lambda_down, 1e-14);
                stepped = true;
                if (dcost <= options.ftol * std::max(cost, 1e-300) || small_step) {
                    converged = true;
                } else if (dcost <= 100.0 * options.ftol * std::max(cost, 1e-300)) {
                    // crawling along an unidentifiable valley
                    if (++slow_steps >= 5) converged = true;
                } else {
                    slow_steps = 0;
                }
                break;
            }
            lambda *= options.lambda_up;
            if (lambda > 1e14) break;
        }
        if (!stepped) {
            // No downhill step at any damping: treat as converged at a
            // stationary (possibly bound-constrained) point.
            converged = true;
        }
    }

    if (jacobian)
        jacobian(result.params, jac);
    else
        numeric_jacobian(residuals, result.params, n_residuals, jac);
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    // Tiny ridge so unidentifiable directions (e.g. oscillation phase with
    // zero oscillation amplitude) do not poison the whole covariance.
    for (int k = 0; k < n; ++k) jtj(k, k) += 1e-300;
    result.covariance =
        jtj.completeOrthogonalDecomposition().pseudoInverse();

    result.rss = 2.0 * cost;
    result.iterations = iter;
    result.converged = converged;
    result.at_lower_bound.resize(n);
    result.at_upper_bound.resize(n);
    for (int k = 0; k < n; ++k) {
        result.at_lower_bound[k] = result.params[k] <= lower[k];
        result.at_upper_bound[k] = result.params[k] >= upper[k];
    }
    return result;
}

double golden_section_max(const std::function<double(double)>& f, double a, double b,
                          double tol) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - phi * (b - a);
    double x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

namespace {

Eigen::VectorXd central_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double fd_step) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n);
    Eigen::VectorXd q = x;
    for (int k = 0; k < n; ++k) {
        const double h = fd_step * std::max(1.0, std::fabs(x[k]));
        q[k] = x[k] + h;
        const double fp = f(q);
        q[k] = x[k] - h;
        const double fm = f(q);
        q[k] = x[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
    return g;
}

}  // namespace

BfgsResult bfgs_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                         Eigen::VectorXd x0, const BfgsOptions& options) {
    const int n = static_cast<int>(x0.size());
    Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd x = std::move(x0);
    double fx = f(x);
    Eigen::VectorXd g = central_gradient(f, x, options.fd_step);

    BfgsResult result;
    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        if (g.lpNorm<Eigen::Infinity>() < options.gtol) {
            result.converged = true;
            break;
        }
        Eigen::VectorXd dir = -(h_inv * g);
        double slope = g.dot(dir);
        if (slope >= 0.0) {  // reset on loss of descent direction
            h_inv.setIdentity();
            dir = -g;
            slope = g.dot(dir);
        }

        double step = 1.0;
        double f_new = fx;
        Eigen::VectorXd x_new = x;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = x + step * dir;
            f_new = f(x_new);
            if (f_new <= fx + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            result.converged = true;  // no descent possible at machine scale
            break;
        }

        const Eigen::VectorXd g_new = central_gradient(f, x_new, options.fd_step);
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const Eigen::VectorXd hy = h_inv * y;
            const double yhy = y.dot(hy);
            h_inv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                     (hy * s.transpose() + s * hy.transpose()) / sy;
        }

        const double df = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        if (df <= options.ftol_rel * std::max(std::fabs(fx), 1e-300)) {
            result.converged = true;
            ++iter;
            break;
        }
    }
    result.x = x;
    result.fmin = fx;
    result.iterations = iter;
    return result;
}

}  // namespace chronon::optim
