#pragma once

#include <cmath>
#include <span>

#include "fzrisk/core.hpp"
#include "fzrisk/errors.hpp"
#include "fzrisk/mathutil.hpp"

namespace fzrisk {

// ====================== sample and smoothing types ======================

// One observation y together with candidate quantile (v) and tail-mean
// (e) forecasts. Valid samples satisfy e <= v < 0 with all fields finite.
struct LossSample {
    double y = 0.0;
    double v = 0.0;
    double e = 0.0;
};

void validate(const LossSample& s);

// Smoothing control for the indicator 1{y <= v}. Exact() keeps the hard
// indicator; Smoothed(tau) replaces it with the logistic weight
// 1 / (1 + exp(tau * (y - v))), which tends to the indicator as tau
// grows.
class SmoothingTau {
public:
    static SmoothingTau Exact() { return SmoothingTau(); }
    static SmoothingTau Smoothed(double tau);

    bool exact() const { return exact_; }
    double tau() const { return tau_; }

    // Indicator or its logistic relaxation, evaluated at (y, v).
    double weight(double y, double v) const {
        if (exact_)
            return y <= v ? 1.0 : 0.0;
        double z = tau_ * (y - v);
        if (z > 700.0)
            return 0.0;
        if (z < -700.0)
            return 1.0;
        return 1.0 / (1.0 + std::exp(z));
    }

private:
    SmoothingTau() = default;
    double tau_ = 0.0;
    bool exact_ = true;
};

// Gradient of a loss with respect to (v, e).
struct LossGradient {
    double d_v = 0.0;
    double d_e = 0.0;
};

// Score-driven update terms for the (v, e) pair:
//   lam_v = -v * (1{y <= v} - alpha)
//   lam_e = (1/alpha) * 1{y <= v} * y - e
// Both have conditional mean zero when (v, e) are the true alpha-level
// quantile and tail mean.
struct ForcingVars {
    double lam_v = 0.0;
    double lam_e = 0.0;
};

// Hessian of the expected loss with respect to (v, e).
struct LossHessian {
    double vv = 0.0;
    double ve = 0.0;
    double ee = 0.0;
};

// ====================== zero-homogeneous loss ======================

// Joint scoring loss for a (quantile, tail mean) pair whose differences
// are invariant to a common positive rescaling of (y, v, e):
//   L = -1{y<=v} (v - y) / (alpha e) + v/e + log(-e) - 1.
// Scaling all three arguments by k > 0 shifts the loss by exactly log k.
double fz0_loss(const LossSample& s, AlphaLevel alpha);

// fz0_loss with the indicator replaced by the logistic weight. With
// SmoothingTau::Exact() this is identical to fz0_loss.
double fz0_smoothed(const LossSample& s, AlphaLevel alpha, SmoothingTau tau);

// Gradient of fz0_loss in (v, e). The exact loss is differentiable only
// away from the kink, so y == v is rejected.
LossGradient fz0_gradient(const LossSample& s, AlphaLevel alpha);

// Gradient of fz0_smoothed in (v, e); defined everywhere for finite tau.
// Falls back to fz0_gradient when tau is Exact().
LossGradient fz0_smoothed_gradient(const LossSample& s, AlphaLevel alpha,
                                   SmoothingTau tau);

// Forcing variables, optionally with the smoothed indicator.
ForcingVars forcing_vars(const LossSample& s, AlphaLevel alpha,
                         SmoothingTau tau = SmoothingTau::Exact());

// Hessian of E[fz0_loss] in (v, e) when y is standard normal. The cross
// term vanishes and the (e, e) entry equals 1/e^2 at the true (v, e).
LossHessian expected_loss_hessian_normal(double v, double e, AlphaLevel alpha);

// Expected fz0 loss under a standard normal observation, in closed form.
// Useful as an independent check of the Hessian above.
double expected_fz0_loss_normal(double v, double e, AlphaLevel alpha);

// ====================== general scoring family ======================

// Consistent scoring loss for the (quantile, tail mean) pair built from
// an increasing g1, a positive decreasing g2 and an antiderivative
// g2_int of g2:
//   (1{y<=v} - alpha) (g1(v) - g1(y) + g2(e) v / alpha)
//     - g2(e) (1{y<=v} y / alpha - e) - g2_int(e).
// With g1 = 0, g2(x) = -1/x and g2_int(x) = -log(-x) this reproduces
// fz0_loss exactly.
template <class G1, class G2, class G2Int>
double fz_loss_general(const LossSample& s, AlphaLevel alpha, G1&& g1, G2&& g2,
                       G2Int&& g2_int) {
    validate(s);
    double a = alpha.value();
    double hit = s.y <= s.v ? 1.0 : 0.0;
    double g2e = g2(s.e);
    return (hit - a) * (g1(s.v) - g1(s.y) + g2e * s.v / a)
         - g2e * (hit * s.y / a - s.e) - g2_int(s.e);
}

// ====================== quantile-only loss ======================

// Asymmetric absolute ("tick") loss for a stand-alone quantile forecast:
//   (1{y<=v} - alpha) (v - y).
double tick_loss(double y, double v, AlphaLevel alpha);

// ====================== aggregation ======================

// Mean fz0 loss of a risk path over a return span. Summation is
// compensated and runs in index order, so the result is reproducible.
double average_loss(std::span<const double> y, const RiskPath& path,
                    AlphaLevel alpha);

} // namespace fzrisk
