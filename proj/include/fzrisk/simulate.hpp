#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fzrisk/core.hpp"
#include "fzrisk/distributions.hpp"
#include "fzrisk/estimation.hpp"

namespace fzrisk {

// ====================== data-generating process ======================

enum class Innovation { Normal, Skewt };

std::string to_string(Innovation innovation);
Innovation innovation_from_string(const std::string& name);

// Variance-recursion DGP: y_t = sigma_t eta_t with
// sigma^2_t = omega + beta sigma^2_{t-1} + gamma y^2_{t-1} and iid
// standardized innovations. The recursion must be stationary so the
// burn-in can start from the unconditional variance.
struct DgpConfig {
    double omega = 0.05;
    double beta = 0.9;
    double gamma = 0.05;
    Innovation innovation = Innovation::Normal;
    SkewtParams skewt{5.0, -0.5}; // used when innovation == Skewt
    std::size_t T = 2500;
    std::size_t burn_in = 1000;
    std::uint64_t seed = 0;
};

void validate(const DgpConfig& cfg);

// Tail pair of the configured innovation law (closed form for normal,
// quadrature for skew-t).
TailPair dgp_tail_pair(const DgpConfig& cfg, AlphaLevel alpha);

struct SimulatedSeries {
    ReturnSeries y;
    RiskPath truth;            // exact (v, e) = (a, b) sigma_t at alpha
    std::vector<double> sigma; // conditional standard deviations
};

// Draws one path of length cfg.T after discarding the burn-in. The
// truth path scales the innovation law's exact tail pair by sigma_t.
// `stream` selects an independent substream of the seed, so
// replication-parallel studies can draw rep r from (seed, r).
SimulatedSeries simulate_dgp(const DgpConfig& cfg, AlphaLevel alpha,
                             std::uint64_t stream = 0);

// ====================== Monte Carlo study ======================

enum class McEstimator { Fz, Qmle, Caviar };

std::string to_string(McEstimator estimator);
McEstimator mc_estimator_from_string(const std::string& name);

struct McConfig {
    std::size_t replications = 200;
    std::vector<double> alphas = {0.05};
    std::vector<std::size_t> T_list = {2500};
    std::vector<McEstimator> estimators = {McEstimator::Fz, McEstimator::Qmle,
                                           McEstimator::Caviar};
    EstimationConfig est;
    int threads = 1; // replication-level parallelism

    void validate() const;
};

// One (T, alpha, estimator) block: per-parameter statistics across
// replications plus path accuracy against the simulated truth.
struct McCell {
    std::size_t T = 0;
    double alpha = 0.0;
    McEstimator estimator = McEstimator::Fz;
    std::vector<std::string> param_names;
    Eigen::VectorXd truth;
    Eigen::VectorXd median;
    Eigen::VectorXd mean_bias;
    Eigen::VectorXd stdev;    // cross-replication, n-1 denominator
    Eigen::VectorXd coverage; // share of reps whose 95% CI covers truth
    // Cross-estimator dispersion ratios on parameters shared with the
    // comparator (beta, gamma); NaN where undefined or absent.
    Eigen::VectorXd stdev_ratio_vs_qmle;
    Eigen::VectorXd stdev_ratio_vs_caviar;
    // Mean absolute path errors vs truth, averaged over replications.
    // The quantile-only estimator has no tail-mean path, so mae_e is NaN.
    double mae_v = std::numeric_limits<double>::quiet_NaN();
    double mae_e = std::numeric_limits<double>::quiet_NaN();
    double mae_ratio_v = std::numeric_limits<double>::quiet_NaN(); // vs qmle
    double mae_ratio_e = std::numeric_limits<double>::quiet_NaN();
    std::size_t failures = 0; // fits excluded from the statistics
    bool flagged = false;     // failures exceed 2% of replications
};

struct McStudy {
    DgpConfig dgp;
    std::size_t replications = 0;
    std::vector<McCell> cells; // T-major, then alpha, then estimator
    std::size_t failures = 0;  // total failed fits across cells
    bool flagged = false;      // any cell flagged
};

// Runs the full study: per T, each replication simulates one path from
// (dgp.seed, rep) and every estimator fits the same data at every
// alpha. Replications run in parallel; aggregation is in replication
// order, so results are identical at any thread count. Individual fit
// failures are counted and excluded rather than fatal.
McStudy run_mc_study(const McConfig& mc, const DgpConfig& dgp);

// One row per T x alpha x estimator x statistic.
std::string mc_to_csv(const McStudy& study);

// Aligned per-cell blocks with median / avg bias / st dev / coverage
// rows and the path-accuracy summary.
std::string mc_render_text(const McStudy& study);

} // namespace fzrisk
