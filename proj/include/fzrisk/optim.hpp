#pragma once

#include <Eigen/Dense>
#include <functional>

namespace fzrisk {

struct OptimOptions {
    double tol_f = 1e-8; // spread of objective values at convergence
    double tol_x = 1e-6; // spread of coordinates at convergence
    int max_iter = 0;    // 0 selects 400 * dimension
};

struct OptimResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

// Derivative-free simplex search (reflection / expansion / contraction /
// shrink with the standard coefficients). Robust to flat penalty
// regions, which makes it the default for exact-indicator objectives.
OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0,
                        const OptimOptions& opts = {});

// BFGS with central finite-difference gradients and Armijo
// backtracking. Only sensible on smooth objectives.
OptimResult bfgs_numeric(const Objective& f, const Eigen::VectorXd& x0,
                         const OptimOptions& opts = {});

} // namespace fzrisk
