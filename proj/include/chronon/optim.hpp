#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace chronon::optim {

/// Residual function: fills r (fixed size) from parameters p. Residuals are
/// expected to be pre-weighted, so the cost is 0.5 * |r|^2.
using ResidualFn = std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& r)>;
/// Optional analytic Jacobian, J(i, k) = d r_i / d p_k.
using JacobianFn =
    std::function<void(const Eigen::VectorXd& p, Eigen::MatrixXd& jac)>;

struct LmOptions {
    int max_iterations = 300;
    double lambda0 = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 0.3;
    double ftol = 1e-10;  // relative cost change
    double xtol = 1e-12;  // per-parameter relative step
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;  // (J^T J)^-1 at the solution
    double rss = 0.0;            // sum of squared (weighted) residuals
    int iterations = 0;
    bool converged = false;
    std::vector<bool> at_lower_bound;
    std::vector<bool> at_upper_bound;
};

/// Damped least squares with box constraints handled by projection.
/// `jacobian` may be null; central finite differences are used instead.
LmResult levenberg_marquardt(const ResidualFn& residuals, const JacobianFn& jacobian,
                             Eigen::VectorXd p0, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, int n_residuals,
                             const LmOptions& options = {});

/// Central finite-difference Jacobian of a residual function.
void numeric_jacobian(const ResidualFn& residuals, const Eigen::VectorXd& p,
                      int n_residuals, Eigen::MatrixXd& jac);

/// Location of the maximum of a unimodal scalar function on [a, b].
double golden_section_max(const std::function<double(double)>& f, double a, double b,
                          double tol);

struct BfgsOptions {
    int max_iterations = 400;
    double gtol = 1e-10;       // gradient infinity norm
    double ftol_rel = 1e-12;   // relative cost change
    double fd_step = 1e-6;
};

struct BfgsResult {
    Eigen::VectorXd x;
    double fmin = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Quasi-Newton minimizer with backtracking line search; the gradient is
/// taken by central differences.
BfgsResult bfgs_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                         Eigen::VectorXd x0, const BfgsOptions& options = {});

}  // namespace chronon::optim
