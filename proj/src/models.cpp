#include "fzrisk/models.hpp"

#include <algorithm>
#include <cmath>

#include "fzrisk/errors.hpp"
#include "fzrisk/mathutil.hpp"

namespace fzrisk {

namespace {

// Log-scale factors outside this band produce exp() values that swamp
// the loss; such paths are treated as invalid rather than propagated.
constexpr double kMaxLogFactor = 50.0;
constexpr double kMaxVariance = 1e150;

void check_finite_returns(std::span<const double> y) {
    for (size_t t = 0; t < y.size(); ++t)
        if (!std::isfinite(y[t]))
            throw ValidationError(strprintf("non-finite return at t=%zu", t));
}

[[noreturn]] void raise_fill_error(long bad, const char* model) {
    throw NumericError(strprintf("%s filter produced invalid state at t=%ld", model, bad));
}

} // namespace

// ====================== parameter validation ======================

void validate(const Gas1fParams& p) {
    if (!std::isfinite(p.beta) || !std::isfinite(p.gamma) || !std::isfinite(p.a)
        || !std::isfinite(p.b))
        throw ValidationError("one-factor parameters must be finite");
    if (!(p.b < p.a && p.a < 0.0))
        throw ValidationError(strprintf("one-factor levels need b < a < 0, got a=%g b=%g",
                                        p.a, p.b));
}

void validate(const Gas2fParams& p) {
    for (double x : {p.w_v, p.w_e, p.b_v, p.b_e, p.a_vv, p.a_ve, p.a_ev, p.a_ee})
        if (!std::isfinite(x))
            throw ValidationError("two-factor parameters must be finite");
}

void validate(const GarchParams& p) {
    if (!std::isfinite(p.omega) || !std::isfinite(p.beta) || !std::isfinite(p.gamma))
        throw ValidationError("variance parameters must be finite");
    if (!(p.omega > 0.0))
        throw ValidationError(strprintf("omega=%g must be positive", p.omega));
    if (p.beta < 0.0 || p.gamma < 0.0)
        throw ValidationError(strprintf("variance loadings must be nonnegative, got beta=%g gamma=%g",
                                        p.beta, p.gamma));
}

bool is_stationary(const GarchParams& p) {
    return p.beta + p.gamma < 1.0;
}

void validate(const GarchFzParams& p) {
    validate(GarchParams{p.omega, p.beta, p.gamma});
    if (!std::isfinite(p.a) || !std::isfinite(p.b))
        throw ValidationError("scaled-risk levels must be finite");
    if (!(p.b < p.a && p.a < 0.0))
        throw ValidationError(strprintf("scaled-risk levels need b < a < 0, got a=%g b=%g",
                                        p.a, p.b));
}

void validate(const HybridParams& p) {
    if (!std::isfinite(p.beta) || !std::isfinite(p.gamma) || !std::isfinite(p.delta)
        || !std::isfinite(p.a) || !std::isfinite(p.b))
        throw ValidationError("hybrid parameters must be finite");
    if (!(p.b < p.a && p.a < 0.0))
        throw ValidationError(strprintf("hybrid levels need b < a < 0, got a=%g b=%g",
                                        p.a, p.b));
}

// ====================== filter cores ======================

namespace detail {

long gas1f_fill(std::span<const double> y, const Gas1fParams& p, AlphaLevel alpha,
                SmoothingTau tau, RiskPath& out) noexcept {
    size_t n = y.size();
    out.v.resize(n);
    out.e.resize(n);
    double inv_alpha = 1.0 / alpha.value();
    double kappa = 0.0;
    for (size_t t = 0; t < n; ++t) {
        if (!(std::abs(kappa) <= kMaxLogFactor))
            return static_cast<long>(t);
        double scale = std::exp(kappa);
        double v = p.a * scale;
        double e = p.b * scale;
        out.v[t] = v;
        out.e[t] = e;
        double w = tau.weight(y[t], v);
        double forcing = -(w * y[t] * inv_alpha - e) / e;
        kappa = p.beta * kappa + p.gamma * forcing;
    }
    return -1;
}

long gas2f_fill(std::span<const double> y, const Gas2fParams& p, AlphaLevel alpha,
                double v1, double e1, SmoothingTau tau, RiskPath& out) noexcept {
    size_t n = y.size();
    out.v.resize(n);
    out.e.resize(n);
    double a = alpha.value();
    double v = v1;
    double e = e1;
    for (size_t t = 0; t < n; ++t) {
        if (!std::isfinite(v) || !std::isfinite(e) || !(v < 0.0) || !(e <= v))
            return static_cast<long>(t);
        out.v[t] = v;
        out.e[t] = e;
        double w = tau.weight(y[t], v);
        double lam_v = -v * (w - a);
        double lam_e = w * y[t] / a - e;
        double v_next = p.w_v + p.b_v * v + p.a_vv * lam_v + p.a_ve * lam_e;
        double e_next = p.w_e + p.b_e * e + p.a_ev * lam_v + p.a_ee * lam_e;
        v = v_next;
        e = e_next;
    }
    return -1;
}

long garch_fill(std::span<const double> y, const GarchParams& p, double sigma2_init,
                std::vector<double>& sigma2) noexcept {
    size_t n = y.size();
    sigma2.resize(n);
    double s2 = sigma2_init;
    for (size_t t = 0; t < n; ++t) {
        if (!std::isfinite(s2) || !(s2 > 0.0) || s2 > kMaxVariance)
            return static_cast<long>(t);
        sigma2[t] = s2;
        s2 = p.omega + p.beta * s2 + p.gamma * y[t] * y[t];
    }
    return -1;
}

long garchfz_fill(std::span<const double> y, const GarchFzParams& p,
                  double sigma2_init, RiskPath& out) noexcept {
    size_t n = y.size();
    out.v.resize(n);
    out.e.resize(n);
    double s2 = sigma2_init;
    for (size_t t = 0; t < n; ++t) {
        if (!std::isfinite(s2) || !(s2 > 0.0) || s2 > kMaxVariance)
            return static_cast<long>(t);
        double scale = std::sqrt(s2);
        out.v[t] = p.a * scale;
        out.e[t] = p.b * scale;
        s2 = p.omega + p.beta * s2 + p.gamma * y[t] * y[t];
    }
    return -1;
}

long hybrid_fill(std::span<const double> y, const HybridParams& p, AlphaLevel alpha,
                 SmoothingTau tau, RiskPath& out) noexcept {
    size_t n = y.size();
    out.v.resize(n);
    out.e.resize(n);
    double inv_alpha = 1.0 / alpha.value();
    double kappa = 0.0;
    for (size_t t = 0; t < n; ++t) {
        if (!(std::abs(kappa) <= kMaxLogFactor))
            return static_cast<long>(t);
        double scale = std::exp(kappa);
        double v = p.a * scale;
        double e = p.b * scale;
        out.v[t] = v;
        out.e[t] = e;
        double w = tau.weight(y[t], v);
        double forcing = -(w * y[t] * inv_alpha - e) / e;
        double mag = std::max(std::abs(y[t]), 1e-8);
        kappa = p.beta * kappa + p.gamma * forcing + p.delta * std::log(mag);
    }
    return -1;
}

} // namespace detail

// ====================== public filters ======================

RiskPath gas1f_filter(std::span<const double> y, const Gas1fParams& p,
                      AlphaLevel alpha, SmoothingTau tau) {
    validate(p);
    check_finite_returns(y);
    if (y.empty())
        throw ValidationError("gas1f_filter: empty return span");
    RiskPath out;
    long bad = detail::gas1f_fill(y, p, alpha, tau, out);
    if (bad >= 0)
        raise_fill_error(bad, "one-factor");
    return out;
}

RiskPath gas2f_filter(std::span<const double> y, const Gas2fParams& p,
                      AlphaLevel alpha, double v1, double e1, SmoothingTau tau) {
    validate(p);
    check_finite_returns(y);
    if (y.empty())
        throw ValidationError("gas2f_filter: empty return span");
    if (!(v1 < 0.0) || !(e1 <= v1))
        throw ValidationError(strprintf("gas2f_filter: initial pair needs e <= v < 0, got v=%g e=%g",
                                        v1, e1));
    RiskPath out;
    long bad = detail::gas2f_fill(y, p, alpha, v1, e1, tau, out);
    if (bad >= 0) {
        if (!std::isfinite(out.v.empty() ? v1 : out.v[std::min<size_t>(bad, out.v.size() - 1)]))
            raise_fill_error(bad, "two-factor");
        throw ValidationError(strprintf(
            "two-factor filter left the e <= v < 0 region at t=%ld", bad));
    }
    return out;
}

std::vector<double> garch_variance_path(std::span<const double> y,
                                        const GarchParams& p, double sigma2_init) {
    validate(p);
    check_finite_returns(y);
    if (y.empty())
        throw ValidationError("garch_variance_path: empty return span");
    if (!(sigma2_init > 0.0) || !std::isfinite(sigma2_init))
        throw ValidationError(strprintf("initial variance %g must be positive", sigma2_init));
    std::vector<double> sigma2;
    long bad = detail::garch_fill(y, p, sigma2_init, sigma2);
    if (bad >= 0)
        raise_fill_error(bad, "variance");
    return sigma2;
}

RiskPath garchfz_filter(std::span<const double> y, const GarchFzParams& p,
                        double sigma2_init) {
    validate(p);
    check_finite_returns(y);
    if (y.empty())
        throw ValidationError("garchfz_filter: empty return span");
    if (!(sigma2_init > 0.0) || !std::isfinite(sigma2_init))
        throw ValidationError(strprintf("initial variance %g must be positive", sigma2_init));
    RiskPath out;
    long bad = detail::garchfz_fill(y, p, sigma2_init, out);
    if (bad >= 0)
        raise_fill_error(bad, "scaled-risk");
    return out;
}

RiskPath hybrid_filter(std::span<const double> y, const HybridParams& p,
                       AlphaLevel alpha, SmoothingTau tau) {
    validate(p);
    check_finite_returns(y);
    if (y.empty())
        throw ValidationError("hybrid_filter: empty return span");
    RiskPath out;
    long bad = detail::hybrid_fill(y, p, alpha, tau, out);
    if (bad >= 0)
        raise_fill_error(bad, "hybrid");
    return out;
}

// ====================== rolling window ======================

RollingForecast rolling_forecast(std::span<const double> y, size_t window,
                                 AlphaLevel alpha, RollingEsMode mode) {
    check_finite_returns(y);
    if (window == 0)
        throw ValidationError("rolling_forecast: window must be positive");
    if (static_cast<double>(window) * alpha.value() < 1.0 - 1e-12)
        throw ValidationError(strprintf(
            "rolling_forecast: window %zu too short for alpha=%g (needs at least 1/alpha)",
            window, alpha.value()));
    size_t start = mode == RollingEsMode::PastVar ? 2 * window : window;
    if (y.size() <= start)
        throw ValidationError(strprintf(
            "rolling_forecast: need more than %zu observations for window %zu, got %zu",
            start, window, y.size()));

    size_t n = y.size();
    double a = alpha.value();
    double m = static_cast<double>(window);

    // Rolling quantiles for every date that has a full trailing window.
    std::vector<double> var_hat(n, 0.0);
    for (size_t t = window; t < n; ++t)
        var_hat[t] = empirical_quantile(y.subspan(t - window, window), alpha);

    RollingForecast out;
    out.start = start;
    out.path.v.reserve(n - start);
    out.path.e.reserve(n - start);
    for (size_t t = start; t < n; ++t) {
        double v = var_hat[t];
        if (!(v < 0.0))
            throw ValidationError(strprintf(
                "rolling_forecast: window quantile %g at t=%zu is not negative", v, t));
        double acc = 0.0;
        for (size_t s = t - window; s < t; ++s) {
            double cutoff = mode == RollingEsMode::PastVar ? var_hat[s] : v;
            if (y[s] <= cutoff)
                acc += y[s];
        }
        double e = acc / (a * m);
        if (e > v)
            e = v - 1e-8;
        out.path.v.push_back(v);
        out.path.e.push_back(e);
    }
    return out;
}

// ====================== diagnostics ======================

namespace {

double one_factor_state(double v, double e, double a, double b, const char* model) {
    double k_v = std::log(v / a);
    double k_e = std::log(e / b);
    if (!(std::abs(k_v - k_e) <= 1e-8))
        throw ValidationError(strprintf(
            "%s state (v=%g, e=%g) incompatible with levels (a=%g, b=%g)", model, v, e, a, b));
    return k_v;
}

} // namespace

std::vector<NicPoint> news_impact_curve(const Gas1fParams& p, AlphaLevel alpha,
                                        double v, double e,
                                        std::span<const double> y_grid) {
    validate(p);
    if (!(v < 0.0) || !(e <= v))
        throw ValidationError("news impact state needs e <= v < 0");
    double kappa = one_factor_state(v, e, p.a, p.b, "one-factor");
    double inv_alpha = 1.0 / alpha.value();
    std::vector<NicPoint> out;
    out.reserve(y_grid.size());
    for (double y : y_grid) {
        double w = y <= v ? 1.0 : 0.0;
        double forcing = -(w * y * inv_alpha - e) / e;
        double next = p.beta * kappa + p.gamma * forcing;
        out.push_back({y, p.a * std::exp(next), p.b * std::exp(next)});
    }
    return out;
}

std::vector<NicPoint> news_impact_curve(const Gas2fParams& p, AlphaLevel alpha,
                                        double v, double e,
                                        std::span<const double> y_grid) {
    validate(p);
    if (!(v < 0.0) || !(e <= v))
        throw ValidationError("news impact state needs e <= v < 0");
    double a = alpha.value();
    std::vector<NicPoint> out;
    out.reserve(y_grid.size());
    for (double y : y_grid) {
        double w = y <= v ? 1.0 : 0.0;
        double lam_v = -v * (w - a);
        double lam_e = w * y / a - e;
        out.push_back({y,
                       p.w_v + p.b_v * v + p.a_vv * lam_v + p.a_ve * lam_e,
                       p.w_e + p.b_e * e + p.a_ev * lam_v + p.a_ee * lam_e});
    }
    return out;
}

std::vector<NicPoint> news_impact_curve(const HybridParams& p, AlphaLevel alpha,
                                        double v, double e,
                                        std::span<const double> y_grid) {
    validate(p);
    if (!(v < 0.0) || !(e <= v))
        throw ValidationError("news impact state needs e <= v < 0");
    double kappa = one_factor_state(v, e, p.a, p.b, "hybrid");
    double inv_alpha = 1.0 / alpha.value();
    std::vector<NicPoint> out;
    out.reserve(y_grid.size());
    for (double y : y_grid) {
        double w = y <= v ? 1.0 : 0.0;
        double forcing = -(w * y * inv_alpha - e) / e;
        double mag = std::max(std::abs(y), 1e-8);
        double next = p.beta * kappa + p.gamma * forcing + p.delta * std::log(mag);
        out.push_back({y, p.a * std::exp(next), p.b * std::exp(next)});
    }
    return out;
}

std::vector<NicPoint> news_impact_curve(const GarchFzParams& p, double v, double e,
                                        std::span<const double> y_grid) {
    validate(p);
    if (!(v < 0.0) || !(e <= v))
        throw ValidationError("news impact state needs e <= v < 0");
    double k_v = v / p.a;
    double k_e = e / p.b;
    if (!(std::abs(k_v - k_e) <= 1e-8 * std::max(1.0, std::abs(k_v))))
        throw ValidationError(strprintf(
            "scaled-risk state (v=%g, e=%g) incompatible with levels (a=%g, b=%g)",
            v, e, p.a, p.b));
    double s2 = k_v * k_v;
    std::vector<NicPoint> out;
    out.reserve(y_grid.size());
    for (double y : y_grid) {
        double next = std::sqrt(p.omega + p.beta * s2 + p.gamma * y * y);
        out.push_back({y, p.a * next, p.b * next});
    }
    return out;
}

LocScalePath locscale_from_risk(const RiskPath& path, const TailPair& tail) {
    validate(path);
    validate(tail);
    if (!(tail.b < tail.a))
        throw ValidationError("location-scale map needs distinct tail multipliers");
    double denom = tail.b - tail.a;
    LocScalePath out;
    out.mu.reserve(path.size());
    out.sigma.reserve(path.size());
    for (size_t t = 0; t < path.size(); ++t) {
        out.mu.push_back((tail.b * path.v[t] - tail.a * path.e[t]) / denom);
        out.sigma.push_back((path.e[t] - path.v[t]) / denom);
    }
    return out;
}

} // namespace fzrisk
