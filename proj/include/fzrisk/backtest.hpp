#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fzrisk/core.hpp"
#include "fzrisk/estimation.hpp"
#include "fzrisk/models.hpp"

namespace fzrisk {

// ====================== standardized residuals ======================

// Generalized residuals of a (v, e) forecast path, standardized so both
// have conditional mean zero under correct calibration:
//   lam_v_t = 1{y_t <= v_t} - alpha            (in {-alpha, 1-alpha})
//   lam_e_t = (1/alpha) 1{y_t <= v_t} y_t/e_t - 1
struct StdResiduals {
    std::vector<double> lam_v;
    std::vector<double> lam_e;
};

StdResiduals std_residuals(std::span<const double> y, const RiskPath& path,
                           AlphaLevel alpha);

// ====================== calibration regressions ======================

// Which residual is regressed: Dq uses lam_v with the quantile path as
// the level regressor, Des uses lam_e with the tail-mean path.
enum class GofKind { Dq, Des };

// Wald test that all coefficients in the regression
//   resid_t = a0 + a1 resid_{t-1} + a2 level_t + u_t
// are zero, with heteroskedasticity-robust covariance. When a regressor
// is (numerically) collinear with earlier ones it is dropped and its
// coefficient is reported as zero. df is the number of directions the
// statistic actually tests: coefficient directions whose robust variance
// is estimated as zero (a hit regression where one lag cell fits
// perfectly is the usual producer) are excluded rather than rejected on
// a zero-variance artifact.
struct GofResult {
    double wald = 0.0;
    double p_value = 1.0;
    Eigen::Vector3d coefficients = Eigen::Vector3d::Zero();
    int df = 0;
    bool dropped_collinear = false;
};

GofResult dq_test(const StdResiduals& resid, const RiskPath& path, GofKind kind);

// ====================== loss-difference comparison ======================

// Equal-predictive-accuracy t-statistic on d_t = loss_a_t - loss_b_t with
// a Bartlett-kernel long-run variance, floor(T^(1/3)) lags. d identically
// zero gives t = 0 exactly; zero variance with a nonzero mean is flagged
// degenerate with t = +/-infinity.
struct DmResult {
    double t_stat = 0.0;
    double mean_diff = 0.0;
    double lrv = 0.0;
    bool degenerate = false;
};

DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b);

// ====================== out-of-sample harness ======================

// Forecast methods compared by the harness. Rolling windows re-estimate
// nothing; every other method is fitted once in-sample and then applied
// with frozen parameters through the full sample.
enum class OosModel {
    Rw125,
    Rw250,
    Rw500,
    GarchNormal,
    GarchSkewt,
    GarchEdf,
    Fz2f,
    Fz1f,
    GarchFz,
    Hybrid
};

std::string to_string(OosModel model);
OosModel oos_model_from_string(const std::string& name);

// The full ten-model comparison set, in report order.
std::vector<OosModel> default_oos_models();

struct OosConfig {
    EstimationConfig est;          // used by the FZ-minimization fits
    double fixed_omega = 1.0;      // scale anchor for the garch-fz fit
    RollingEsMode rolling_mode = RollingEsMode::PastVar;
};

struct OosModelReport {
    std::string name;
    bool ok = false;
    std::string error;             // populated when ok is false
    double avg_loss = 0.0;
    GofResult dq;
    GofResult des;
    RiskPath oos_path;             // one entry per out-of-sample period
    std::vector<double> losses;    // per-period joint loss, same indexing
};

struct BacktestReport {
    double alpha = 0.0;
    size_t split = 0;              // in-sample observation count
    size_t n_oos = 0;
    std::vector<OosModelReport> models;
    // t-statistics on (row loss - column loss); positive favors the
    // column model. NaN where either model failed.
    Eigen::MatrixXd dm;
    std::vector<int> ranks;        // 1 = lowest average loss; 0 = failed
};

// Fits every model on y[0, split), freezes parameters, filters through
// the full sample, and evaluates losses, calibration regressions, and
// pairwise loss comparisons on y[split, n). Individual model failures
// are recorded in the report; structural problems (split out of range,
// out-of-sample stretch shorter than 31) throw.
BacktestReport oos_harness(const ReturnSeries& y, size_t split,
                           std::span<const OosModel> models, AlphaLevel alpha,
                           const OosConfig& cfg = {});

// ====================== serialization ======================

// JSON round-trip: backtest_report_from_json(to_json_string(r)) restores
// every field exactly (non-finite values are encoded as strings).
std::string to_json_string(const BacktestReport& report);
BacktestReport backtest_report_from_json(const std::string& text);

// Aligned-text rendering: loss/calibration table, pairwise t-statistic
// matrix, and rank line.
std::string render_text(const BacktestReport& report);

} // namespace fzrisk
