#include "fzrisk/distributions.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fzrisk/errors.hpp"
#include "fzrisk/mathutil.hpp"

namespace fzrisk {

void validate(const TailPair& pair) {
    if (!std::isfinite(pair.a) || !std::isfinite(pair.b))
        throw ValidationError("tail pair has non-finite entries");
    if (!(pair.a < 0.0))
        throw ValidationError(strprintf("tail quantile a=%g not negative", pair.a));
    if (!(pair.b <= pair.a))
        throw ValidationError(strprintf("tail mean b=%g above quantile a=%g", pair.b, pair.a));
}

TailPair normal_tail_pair(AlphaLevel alpha) {
    TailPair pair;
    pair.a = norm_quantile(alpha.value());
    pair.b = -norm_pdf(pair.a) / alpha.value();
    validate(pair);
    return pair;
}

// ====================== skewed Student-t ======================

void validate(const SkewtParams& params) {
    if (!(params.nu > 2.0) || !std::isfinite(params.nu))
        throw ValidationError(strprintf("skew-t nu=%g must exceed 2", params.nu));
    if (!(params.lambda > -1.0 && params.lambda < 1.0))
        throw ValidationError(strprintf("skew-t lambda=%g outside (-1, 1)", params.lambda));
}

namespace {

// Normalizing constants of the unit-variance skewed Student-t density:
//   c = Gamma((nu+1)/2) / (sqrt(pi (nu-2)) Gamma(nu/2))
//   a = 4 lambda c (nu-2)/(nu-1),  b = sqrt(1 + 3 lambda^2 - a^2)
struct SkewtConsts {
    double a, b, c;
};

SkewtConsts skewt_consts(const SkewtParams& p) {
    double c = std::exp(std::lgamma((p.nu + 1.0) / 2.0) - std::lgamma(p.nu / 2.0))
             / std::sqrt(M_PI * (p.nu - 2.0));
    double a = 4.0 * p.lambda * c * (p.nu - 2.0) / (p.nu - 1.0);
    double b = std::sqrt(1.0 + 3.0 * p.lambda * p.lambda - a * a);
    return {a, b, c};
}

} // namespace

double skewt_pdf(double z, const SkewtParams& params) {
    validate(params);
    auto k = skewt_consts(params);
    double side = z < -k.a / k.b ? (1.0 - params.lambda) : (1.0 + params.lambda);
    double u = (k.b * z + k.a) / side;
    return k.b * k.c
         * std::pow(1.0 + u * u / (params.nu - 2.0), -(params.nu + 1.0) / 2.0);
}

double skewt_cdf(double z, const SkewtParams& params) {
    validate(params);
    auto k = skewt_consts(params);
    double scale = std::sqrt(params.nu / (params.nu - 2.0));
    if (z < -k.a / k.b) {
        double side = 1.0 - params.lambda;
        return side * student_t_cdf(scale * (k.b * z + k.a) / side, params.nu);
    }
    double side = 1.0 + params.lambda;
    return (1.0 - params.lambda) / 2.0
         + side * (student_t_cdf(scale * (k.b * z + k.a) / side, params.nu) - 0.5);
}

double skewt_quantile(double p, const SkewtParams& params) {
    validate(params);
    if (!(p > 0.0 && p < 1.0))
        throw ValidationError(strprintf("skewt_quantile: p=%g outside (0,1)", p));
    auto k = skewt_consts(params);
    double inv_scale = std::sqrt((params.nu - 2.0) / params.nu);
    double threshold = (1.0 - params.lambda) / 2.0;
    if (p < threshold) {
        double side = 1.0 - params.lambda;
        double tq = student_t_quantile(p / side, params.nu);
        return (side * inv_scale * tq - k.a) / k.b;
    }
    double side = 1.0 + params.lambda;
    double tq = student_t_quantile(0.5 + (p - threshold) / side, params.nu);
    return (side * inv_scale * tq - k.a) / k.b;
}

namespace {

// Adaptive Gauss-Kronrod integral of f over (lo, hi) to roughly 1e-10
// relative accuracy; throws if the error estimate misses an absolute
// tolerance of 1e-8.
template <class F>
double integrate_checked(F&& f, double lo, double hi, const char* what) {
    double err = 0.0;
    double val = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, lo, hi, 15, 1e-10, &err);
    if (!(err < 1e-8) || !std::isfinite(val))
        throw NumericError(strprintf("%s: quadrature error %g above tolerance", what, err));
    return val;
}

} // namespace

double skewt_mean(const SkewtParams& params) {
    validate(params);
    auto f = [&](double z) { return z * skewt_pdf(z, params); };
    return integrate_checked(f, -std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity(), "skewt_mean");
}

double skewt_variance(const SkewtParams& params) {
    validate(params);
    double m = skewt_mean(params);
    auto f = [&](double z) { return (z - m) * (z - m) * skewt_pdf(z, params); };
    return integrate_checked(f, -std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity(), "skewt_variance");
}

TailPair skewt_tail_pair(AlphaLevel alpha, const SkewtParams& params) {
    validate(params);
    TailPair pair;
    pair.a = skewt_quantile(alpha.value(), params);
    auto f = [&](double z) { return z * skewt_pdf(z, params); };
    double tail_integral = integrate_checked(
        f, -std::numeric_limits<double>::infinity(), pair.a, "skewt_tail_pair");
    pair.b = tail_integral / alpha.value();
    validate(pair);
    return pair;
}

// ====================== empirical ======================

double empirical_quantile(std::span<const double> data, AlphaLevel alpha) {
    if (data.empty())
        throw ValidationError("empirical_quantile: empty sample");
    size_t n = data.size();
    // Rank ceil(n * alpha), guarded against floating error on exact multiples.
    auto rank = static_cast<size_t>(std::ceil(n * alpha.value() - 1e-9));
    if (rank < 1)
        rank = 1;
    std::vector<double> sorted(data.begin(), data.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(rank - 1),
                     sorted.end());
    return sorted[rank - 1];
}

TailPair edf_tail_pair(std::span<const double> data, AlphaLevel alpha) {
    double q = empirical_quantile(data, alpha);
    double sum = 0.0;
    size_t count = 0;
    for (double x : data) {
        if (x <= q) {
            sum += x;
            ++count;
        }
    }
    TailPair pair{q, sum / static_cast<double>(count)};
    validate(pair);
    return pair;
}

} // namespace fzrisk
