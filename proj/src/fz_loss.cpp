#include "fzrisk/fz_loss.hpp"

namespace fzrisk {

void validate(const LossSample& s) {
    if (!std::isfinite(s.y) || !std::isfinite(s.v) || !std::isfinite(s.e))
        throw ValidationError("loss sample has non-finite fields");
    if (!(s.v < 0.0))
        throw ValidationError(strprintf("loss sample needs v < 0, got v=%g", s.v));
    if (!(s.e <= s.v))
        throw ValidationError(strprintf("loss sample needs e <= v, got v=%g e=%g", s.v, s.e));
}

SmoothingTau SmoothingTau::Smoothed(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw ValidationError(strprintf("smoothing tau=%g must be positive and finite", tau));
    SmoothingTau s;
    s.tau_ = tau;
    s.exact_ = false;
    return s;
}

double fz0_loss(const LossSample& s, AlphaLevel alpha) {
    validate(s);
    double a = alpha.value();
    double hit = s.y <= s.v ? 1.0 : 0.0;
    return -hit * (s.v - s.y) / (a * s.e) + s.v / s.e + std::log(-s.e) - 1.0;
}

double fz0_smoothed(const LossSample& s, AlphaLevel alpha, SmoothingTau tau) {
    validate(s);
    double a = alpha.value();
    double w = tau.weight(s.y, s.v);
    return -w * (s.v - s.y) / (a * s.e) + s.v / s.e + std::log(-s.e) - 1.0;
}

LossGradient fz0_gradient(const LossSample& s, AlphaLevel alpha) {
    validate(s);
    if (s.y == s.v)
        throw ValidationError("fz0_gradient undefined at y == v");
    double a = alpha.value();
    double hit = s.y <= s.v ? 1.0 : 0.0;
    LossGradient g;
    g.d_v = -(hit - a) / (a * s.e);
    g.d_e = hit * (s.v - s.y) / (a * s.e * s.e) - s.v / (s.e * s.e) + 1.0 / s.e;
    return g;
}

LossGradient fz0_smoothed_gradient(const LossSample& s, AlphaLevel alpha,
                                   SmoothingTau tau) {
    if (tau.exact())
        return fz0_gradient(s, alpha);
    validate(s);
    double a = alpha.value();
    double w = tau.weight(s.y, s.v);
    double dw_dv = tau.tau() * w * (1.0 - w);
    LossGradient g;
    g.d_v = -(w + (s.v - s.y) * dw_dv) / (a * s.e) + 1.0 / s.e;
    g.d_e = w * (s.v - s.y) / (a * s.e * s.e) - s.v / (s.e * s.e) + 1.0 / s.e;
    return g;
}

ForcingVars forcing_vars(const LossSample& s, AlphaLevel alpha, SmoothingTau tau) {
    validate(s);
    double a = alpha.value();
    double w = tau.weight(s.y, s.v);
    ForcingVars f;
    f.lam_v = -s.v * (w - a);
    f.lam_e = w * s.y / a - s.e;
    return f;
}

LossHessian expected_loss_hessian_normal(double v, double e, AlphaLevel alpha) {
    if (!(v < 0.0) || !(e <= v))
        throw ValidationError(strprintf("hessian needs e <= v < 0, got v=%g e=%g", v, e));
    double a = alpha.value();
    double cdf = norm_cdf(v);
    double pdf = norm_pdf(v);
    // E[1{y<=v} y] = -pdf(v) for a standard normal observation.
    double tail_mean = -pdf;
    LossHessian h;
    h.vv = -pdf / (a * e);
    h.ve = (cdf - a) / (a * e * e);
    h.ee = 1.0 / (e * e)
         - 2.0 / (a * e * e * e) * ((cdf - a) * v - (tail_mean - a * e));
    return h;
}

double expected_fz0_loss_normal(double v, double e, AlphaLevel alpha) {
    if (!(v < 0.0) || !(e <= v))
        throw ValidationError(strprintf("expected loss needs e <= v < 0, got v=%g e=%g", v, e));
    double a = alpha.value();
    // E[1{y<=v}(v - y)] = v Phi(v) + phi(v) for a standard normal y.
    double partial = v * norm_cdf(v) + norm_pdf(v);
    return -partial / (a * e) + v / e + std::log(-e) - 1.0;
}

double tick_loss(double y, double v, AlphaLevel alpha) {
    if (!std::isfinite(y) || !std::isfinite(v))
        throw ValidationError("tick loss has non-finite arguments");
    double hit = y <= v ? 1.0 : 0.0;
    return (hit - alpha.value()) * (v - y);
}

double average_loss(std::span<const double> y, const RiskPath& path, AlphaLevel alpha) {
    if (y.size() != path.size())
        throw ValidationError(strprintf("average_loss: %zu returns vs %zu forecasts",
                                        y.size(), path.size()));
    if (y.empty())
        throw ValidationError("average_loss: empty input");
    double a = alpha.value();
    CompensatedSum acc;
    for (size_t t = 0; t < y.size(); ++t) {
        LossSample s{y[t], path.v[t], path.e[t]};
        validate(s);
        double hit = s.y <= s.v ? 1.0 : 0.0;
        acc.add(-hit * (s.v - s.y) / (a * s.e) + s.v / s.e + std::log(-s.e) - 1.0);
    }
    return acc.value() / static_cast<double>(y.size());
}

} // namespace fzrisk
