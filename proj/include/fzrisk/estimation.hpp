#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fzrisk/core.hpp"
#include "fzrisk/distributions.hpp"
#include "fzrisk/fz_loss.hpp"
#include "fzrisk/models.hpp"

namespace fzrisk {

// ====================== model selector ======================

enum class FzModel { Gas1f, Gas2f, GarchFz, Hybrid };

std::string to_string(FzModel model);
FzModel fz_model_from_string(const std::string& name);

// ====================== configuration ======================

enum class OptimizerKind {
    Simplex,         // simplex search at every stage
    GradientSmoothed // quasi-Newton on smoothed stages, simplex on exact
};

struct EstimationConfig {
    // Smoothing continuation: smoothed stages with increasing tau, then
    // the exact indicator last. Each stage warm-starts from the
    // previous stage's solution.
    std::vector<SmoothingTau> stages = default_stages();
    double tol_f = 1e-8;
    double tol_x = 1e-6;
    int max_iter = 0;    // per stage; 0 selects 200 * dimension
    int multistarts = 5; // one data-driven start plus seeded perturbations
    std::uint64_t seed = 1;
    int threads = 1;
    OptimizerKind optimizer = OptimizerKind::Simplex;
    double penalty = 1e10; // objective value for invalid parameter points

    static std::vector<SmoothingTau> default_stages(); // {tau=5, tau=20, exact}
    void validate() const;
};

// ====================== results ======================

struct StageRecord {
    int start = 0;    // multistart index
    int stage = 0;    // position in the stage schedule
    double tau = 0.0; // 0 on the exact stage
    bool exact = false;
    double f_initial = 0.0; // stage objective at the warm start
    double f_final = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Initial conditions a filter needs beyond the parameter vector,
// derived from the estimation sample. Reusing the same state lets a
// longer span be filtered with frozen parameters.
struct FzFilterState {
    double v1 = -1.0; // two-factor initial pair
    double e1 = -2.0;
    double sigma2_init = 1.0; // variance-recursion seed
};

struct EstimationResult {
    std::string method;
    std::vector<std::string> param_names;
    Eigen::VectorXd theta;
    Eigen::MatrixXd vcov; // asymptotic; std_errors = sqrt(diag(vcov)/n_obs)
    std::vector<double> std_errors;
    double avg_loss = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    std::size_t n_obs = 0;
    int best_start = -1;
    double alpha = 0.0; // 0 for likelihood fits
    double omega = 1.0; // fixed recursion intercept where applicable
    double mu = 0.0;    // sample mean used by the likelihood fit
    FzFilterState state;
    std::vector<StageRecord> trace;
    std::vector<std::string> warnings;
};

struct FzVcov {
    Eigen::MatrixXd a_hat; // outer product of per-observation scores
    Eigen::MatrixXd d_hat; // kernel-smoothed curvature
    Eigen::MatrixXd vcov;  // sandwich, floored to be PSD
};

// ====================== loss-minimization fits ======================

// Filter state implied by a sample: the sample tail pair for the
// two-factor model and the sample variance for variance recursions.
FzFilterState fz_filter_state(std::span<const double> y, FzModel model,
                              AlphaLevel alpha);

// Risk path implied by a parameter vector in estimation order
// (gas1f/garch-fz: [beta, gamma, b, c] with a = c * b; hybrid adds
// delta after gamma; gas2f: [w_v, w_e, b_v, b_e, a_vv, a_ve, a_ev, a_ee]).
RiskPath fz_path(std::span<const double> y, FzModel model,
                 const Eigen::VectorXd& theta, AlphaLevel alpha,
                 double fixed_omega, const FzFilterState& state,
                 SmoothingTau tau = SmoothingTau::Exact());

// Joint quantile/tail-mean fit by loss minimization with the smoothing
// continuation and seeded multistarts. fixed_omega pins the
// unidentified variance-recursion intercept (garch-fz only).
EstimationResult fz_estimate(std::span<const double> y, FzModel model,
                             AlphaLevel alpha, const EstimationConfig& cfg = {},
                             double fixed_omega = 1.0);

// Sandwich covariance at theta: A from per-observation scores, D from
// a kernel density term on the quantile plus the tail-mean curvature,
// path gradients by central finite differences. bandwidth <= 0 selects
// the default T^(-1/3).
FzVcov fz_vcov(std::span<const double> y, FzModel model,
               const Eigen::VectorXd& theta, AlphaLevel alpha,
               double fixed_omega, const FzFilterState& state,
               double bandwidth = 0.0);

// ====================== comparator fits ======================

// Gaussian quasi-likelihood fit of the variance recursion with a
// constant mean (sample average), sandwich standard errors.
// theta = [omega, beta, gamma].
EstimationResult qmle_garch(std::span<const double> y,
                            const EstimationConfig& cfg = {});

// Quantile-only comparator: the same scaled-variance structure for the
// quantile, fit by the asymmetric absolute (tick) loss with the same
// smoothing continuation. theta = [beta, gamma, a].
EstimationResult caviar_estimate(std::span<const double> y, AlphaLevel alpha,
                                 const EstimationConfig& cfg = {},
                                 double fixed_omega = 1.0);

// Quantile path implied by a caviar parameter vector.
std::vector<double> caviar_var_path(std::span<const double> y,
                                    const Eigen::VectorXd& theta,
                                    double fixed_omega, const FzFilterState& state,
                                    SmoothingTau tau = SmoothingTau::Exact());

// Maximum-likelihood skewed-t fit for standardized residuals.
SkewtParams skewt_fit(std::span<const double> z);

// ====================== path accuracy ======================

struct AccuracySummary {
    double mae_v = 0.0;
    double mae_e = 0.0;
};

// Componentwise mean absolute error between two equal-length paths.
AccuracySummary fitted_accuracy(const RiskPath& fitted, const RiskPath& reference);

} // namespace fzrisk
