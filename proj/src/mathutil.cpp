#include "fzrisk/mathutil.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cstdarg>
#include <cstdio>
#include <charconv>

#include "fzrisk/errors.hpp"

namespace fzrisk {

namespace {
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kInvSqrt2 = 0.70710678118654752440;
} // namespace

double norm_pdf(double x) {
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x * kInvSqrt2);
}

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw ValidationError(strprintf("norm_quantile: p=%g outside (0,1)", p));
    static const boost::math::normal_distribution<double> n01(0.0, 1.0);
    return boost::math::quantile(n01, p);
}

double student_t_cdf(double x, double nu) {
    if (!(nu > 0.0))
        throw ValidationError(strprintf("student_t_cdf: nu=%g must be positive", nu));
    boost::math::students_t_distribution<double> t(nu);
    return boost::math::cdf(t, x);
}

double student_t_quantile(double p, double nu) {
    if (!(p > 0.0 && p < 1.0))
        throw ValidationError(strprintf("student_t_quantile: p=%g outside (0,1)", p));
    if (!(nu > 0.0))
        throw ValidationError(strprintf("student_t_quantile: nu=%g must be positive", nu));
    boost::math::students_t_distribution<double> t(nu);
    return boost::math::quantile(t, p);
}

double chi2_sf(double x, double k) {
    if (!(k > 0.0))
        throw ValidationError(strprintf("chi2_sf: k=%g must be positive", k));
    if (x <= 0.0)
        return 1.0;
    boost::math::chi_squared_distribution<double> c(k);
    return boost::math::cdf(boost::math::complement(c, x));
}

double compensated_mean(std::span<const double> xs) {
    if (xs.empty())
        throw ValidationError("compensated_mean: empty input");
    CompensatedSum acc;
    for (double x : xs)
        acc.add(x);
    return acc.value() / static_cast<double>(xs.size());
}

std::string strprintf(const char* fmt, ...) {
    va_list ap;
    va_start(ap, fmt);
    va_list ap2;
    va_copy(ap2, ap);
    int n = std::vsnprintf(nullptr, 0, fmt, ap);
    va_end(ap);
    std::string out;
    if (n > 0) {
        out.resize(static_cast<size_t>(n) + 1);
        std::vsnprintf(out.data(), out.size(), fmt, ap2);
        out.resize(static_cast<size_t>(n));
    }
    va_end(ap2);
    return out;
}

std::string format_roundtrip(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

} // namespace fzrisk
