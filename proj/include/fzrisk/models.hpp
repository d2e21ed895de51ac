#pragma once

#include <span>
#include <vector>

#include "fzrisk/core.hpp"
#include "fzrisk/distributions.hpp"
#include "fzrisk/fz_loss.hpp"

namespace fzrisk {

// ====================== parameter types ======================

// One-factor score-driven model. A single log-scale factor kappa moves
// both risk measures:
//   v_t = a exp(kappa_t),  e_t = b exp(kappa_t),  b < a < 0
//   kappa_t = beta kappa_{t-1}
//           + gamma (-1/e_{t-1}) (1{y<=v} y / alpha - e)_{t-1}
// kappa_1 = 0, so (a, b) set the level of the path.
struct Gas1fParams {
    double beta = 0.0;
    double gamma = 0.0;
    double a = -1.0;
    double b = -2.0;
};
void validate(const Gas1fParams& p);

// Two-factor score-driven model. v and e evolve separately:
//   (v, e)_{t+1} = w + diag(b_v, b_e) (v, e)_t + A lambda_t
// with lambda the forcing pair and A a full 2x2 matrix (a_xy is the
// loading of the x equation on lambda_y).
struct Gas2fParams {
    double w_v = 0.0, w_e = 0.0;
    double b_v = 0.0, b_e = 0.0;
    double a_vv = 0.0, a_ve = 0.0;
    double a_ev = 0.0, a_ee = 0.0;
};
void validate(const Gas2fParams& p);

// Variance recursion sigma2_t = omega + beta sigma2_{t-1} + gamma y^2_{t-1}.
// Filters only require nonnegative loadings; beta + gamma < 1 is needed
// for a stationary data-generating process and is checked where that
// matters.
struct GarchParams {
    double omega = 0.05;
    double beta = 0.9;
    double gamma = 0.05;
};
void validate(const GarchParams& p);
bool is_stationary(const GarchParams& p);

// Volatility-scaled risk pair on top of the variance recursion:
//   v_t = a kappa_t, e_t = b kappa_t with kappa_t^2 following a GARCH
// step with fixed omega (the loss level cannot identify omega, so it is
// pinned rather than estimated).
struct GarchFzParams {
    double omega = 1.0;
    double beta = 0.9;
    double gamma = 0.05;
    double a = -1.0;
    double b = -2.0;
};
void validate(const GarchFzParams& p);

// One-factor model with an absolute-return channel:
//   kappa_t = beta kappa_{t-1} + gamma forcing_{t-1} + delta log|y_{t-1}|
// |y| is floored at 1e-8 before the log.
struct HybridParams {
    double beta = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
    double a = -1.0;
    double b = -2.0;
};
void validate(const HybridParams& p);

// ====================== filters ======================

// Runs the one-factor recursion over y. Throws NumericError (naming the
// first offending index) if the factor leaves a numerically safe range.
RiskPath gas1f_filter(std::span<const double> y, const Gas1fParams& p,
                      AlphaLevel alpha, SmoothingTau tau = SmoothingTau::Exact());

// Runs the two-factor recursion from the given initial pair. Throws
// ValidationError naming the first index where the path leaves the
// e <= v < 0 region, and NumericError on non-finite state.
RiskPath gas2f_filter(std::span<const double> y, const Gas2fParams& p,
                      AlphaLevel alpha, double v1, double e1,
                      SmoothingTau tau = SmoothingTau::Exact());

// Conditional-variance path of the GARCH recursion, starting from
// sigma2_init at t = 1.
std::vector<double> garch_variance_path(std::span<const double> y,
                                        const GarchParams& p, double sigma2_init);

// Risk path of the volatility-scaled model; sigma2_init seeds the
// squared-scale recursion.
RiskPath garchfz_filter(std::span<const double> y, const GarchFzParams& p,
                        double sigma2_init);

// One-factor filter with the absolute-return channel.
RiskPath hybrid_filter(std::span<const double> y, const HybridParams& p,
                       AlphaLevel alpha, SmoothingTau tau = SmoothingTau::Exact());

// ====================== rolling window ======================

// How the rolling tail mean treats the cutoff when averaging window
// observations:
//   PastVar    - each observation is compared against the rolling
//                quantile of its own date (needs a full window of
//                earlier quantiles, so forecasts start at 2 * window).
//   CurrentVar - all observations are compared against the current
//                window quantile (forecasts start at window).
enum class RollingEsMode { PastVar, CurrentVar };

// Rolling-window forecasts. Path index i pairs with y[start + i]:
// v is the window's empirical alpha-quantile and e averages window
// returns at or below the cutoff, scaled by 1 / (alpha * window).
// e is pushed just below v when a degenerate window inverts the order.
struct RollingForecast {
    size_t start = 0;
    RiskPath path;
};

RollingForecast rolling_forecast(std::span<const double> y, size_t window,
                                 AlphaLevel alpha,
                                 RollingEsMode mode = RollingEsMode::PastVar);

// ====================== location-scale forecasts ======================

// Innovation law used for the tail multipliers of a fitted
// location-scale model.
enum class InnovationDist { Normal, SkewT, Edf };

// Frozen location-scale forecaster: constant mean mu plus a GARCH
// volatility path scaled by a tail pair, v_t = mu + a sigma_t and
// e_t = mu + b sigma_t.
struct ArmaGarchModel {
    double mu = 0.0;
    GarchParams garch;
    double sigma2_init = 1.0;
    InnovationDist dist = InnovationDist::Normal;
    TailPair tail;
    SkewtParams skewt; // populated when dist == SkewT
};

// Fits the model on y: constant mean, Gaussian quasi-likelihood for the
// variance recursion, then a tail pair from the chosen innovation law
// (closed form for Normal, fitted parameters for SkewT, sample
// quantile/tail mean for Edf, the latter two from standardized
// residuals).
ArmaGarchModel armagarch_fit(std::span<const double> y, InnovationDist dist,
                             AlphaLevel alpha);

// Applies a fitted model to a return span (typically a longer sample
// containing the fitting window) without re-estimating anything.
RiskPath armagarch_apply(const ArmaGarchModel& model, std::span<const double> y);

// Convenience wrapper: fit on y and return the in-sample risk path.
RiskPath armagarch_forecast(std::span<const double> y, InnovationDist dist,
                            AlphaLevel alpha);

// ====================== diagnostics ======================

// One-step response of (v, e) to a hypothetical observation y, holding
// the current state fixed.
struct NicPoint {
    double y = 0.0;
    double v_next = 0.0;
    double e_next = 0.0;
};

std::vector<NicPoint> news_impact_curve(const Gas1fParams& p, AlphaLevel alpha,
                                        double v, double e,
                                        std::span<const double> y_grid);
std::vector<NicPoint> news_impact_curve(const Gas2fParams& p, AlphaLevel alpha,
                                        double v, double e,
                                        std::span<const double> y_grid);
std::vector<NicPoint> news_impact_curve(const HybridParams& p, AlphaLevel alpha,
                                        double v, double e,
                                        std::span<const double> y_grid);
std::vector<NicPoint> news_impact_curve(const GarchFzParams& p, double v, double e,
                                        std::span<const double> y_grid);

// Mean and volatility implied by a risk path under a location-scale
// model with the given tail pair:
//   mu = (b v - a e) / (b - a),  sigma = (e - v) / (b - a).
struct LocScalePath {
    std::vector<double> mu;
    std::vector<double> sigma;
};

LocScalePath locscale_from_risk(const RiskPath& path, const TailPair& tail);

// ====================== estimation internals ======================

namespace detail {

// Non-throwing filter cores used inside the estimation objective. Each
// fills `out` and returns the index of the first invalid step (state
// non-finite, v >= 0, or e > v), or -1 when the path is fully valid.
long gas1f_fill(std::span<const double> y, const Gas1fParams& p, AlphaLevel alpha,
                SmoothingTau tau, RiskPath& out) noexcept;
long gas2f_fill(std::span<const double> y, const Gas2fParams& p, AlphaLevel alpha,
                double v1, double e1, SmoothingTau tau, RiskPath& out) noexcept;
long garchfz_fill(std::span<const double> y, const GarchFzParams& p,
                  double sigma2_init, RiskPath& out) noexcept;
long hybrid_fill(std::span<const double> y, const HybridParams& p, AlphaLevel alpha,
                 SmoothingTau tau, RiskPath& out) noexcept;

// Variance path core; returns the first index where the variance is
// non-finite or implausibly large, or -1.
long garch_fill(std::span<const double> y, const GarchParams& p, double sigma2_init,
                std::vector<double>& sigma2) noexcept;

} // namespace detail

} // namespace fzrisk
