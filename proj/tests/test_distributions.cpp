#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fzrisk/distributions.hpp"
#include "fzrisk/errors.hpp"
#include "fzrisk/mathutil.hpp"
#include "fzrisk/rng.hpp"

using namespace fzrisk;

TEST_CASE("normal tail pair frozen values") {
    // b = -phi(Phi^{-1}(alpha)) / alpha, checked against an independent
    // bisection of the normal CDF.
    struct Row {
        double alpha, a, b;
    };
    const Row rows[] = {
        {0.01, -2.3263478740408416, -2.665214220345802},
        {0.025, -1.9599639845400545, -2.337802792201413},
        {0.05, -1.6448536269514729, -2.0627128075074253},
        {0.10, -1.2815515655446008, -1.7549833193248672},
        {0.20, -0.8416212335729143, -1.3998096020390416},
    };
    for (const auto& row : rows) {
        auto pair = normal_tail_pair(AlphaLevel(row.alpha));
        CHECK(pair.a == doctest::Approx(row.a).epsilon(1e-12));
        CHECK(pair.b == doctest::Approx(row.b).epsilon(1e-12));
        // Exact identity for the normal: alpha * b = -phi(a).
        CHECK(row.alpha * pair.b == doctest::Approx(-norm_pdf(pair.a)).epsilon(1e-13));
        CHECK(pair.b < pair.a);
        CHECK(pair.a < 0.0);
    }
}

TEST_CASE("skew-t parameter validation") {
    CHECK_THROWS_AS(skewt_pdf(0.0, {2.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(skewt_pdf(0.0, {5.0, 1.0}), ValidationError);
    CHECK_THROWS_AS(skewt_pdf(0.0, {5.0, -1.5}), ValidationError);
    CHECK_NOTHROW(skewt_pdf(0.0, {2.1, 0.99}));
}

TEST_CASE("skew-t with zero skew matches the unit-variance Student-t") {
    SkewtParams p{5.0, 0.0};
    // Independent form: scale a Student-t by sqrt(nu/(nu-2)) to unit
    // variance using the library's t CDF only.
    double scale = std::sqrt(5.0 / 3.0);
    double c = std::exp(std::lgamma(3.0) - std::lgamma(2.5)) / std::sqrt(M_PI * 3.0);
    for (double z : {-3.0, -1.5, -0.3, 0.0, 0.7, 2.5}) {
        double ref_pdf = c * std::pow(1.0 + z * z / 3.0, -3.0);
        CHECK(skewt_pdf(z, p) == doctest::Approx(ref_pdf).epsilon(1e-12));
        CHECK(skewt_cdf(z, p) == doctest::Approx(student_t_cdf(z * scale, 5.0)).epsilon(1e-12));
    }
    CHECK(skewt_pdf(0.0, p) == doctest::Approx(0.49007012926381505).epsilon(1e-12));
}

TEST_CASE("skew-t density constants for nu=5 lambda=-0.5") {
    SkewtParams p{5.0, -0.5};
    // Mode-side switch happens at -a/b with the frozen constants below.
    double c = 0.49007012926381505;
    double a = -0.7351051938957226;
    double b = 1.099827420056225;
    // Density at the join point from both sides.
    double zc = -a / b;
    double left = b * c * std::pow(1.0, -3.0);
    CHECK(skewt_pdf(zc - 1e-12, p) == doctest::Approx(left).epsilon(1e-8));
    CHECK(skewt_pdf(zc + 1e-12, p) == doctest::Approx(left).epsilon(1e-8));
    (void)a;
}

TEST_CASE("skew-t cdf integrates the density") {
    SkewtParams p{5.0, -0.5};
    // Trapezoid integration of the pdf as an independent check.
    for (double z : {-2.5, -1.0, 0.0, 1.5}) {
        double lo = -60.0;
        int n = 60000;
        double h = (z - lo) / n;
        double acc = 0.5 * (skewt_pdf(lo, p) + skewt_pdf(z, p));
        for (int i = 1; i < n; ++i)
            acc += skewt_pdf(lo + i * h, p);
        acc *= h;
        CHECK(skewt_cdf(z, p) == doctest::Approx(acc).epsilon(5e-6));
    }
    CHECK(skewt_cdf(-1e9, p) == doctest::Approx(0.0));
    CHECK(skewt_cdf(1e9, p) == doctest::Approx(1.0));
}

TEST_CASE("skew-t quantile round trip") {
    SkewtParams p{5.0, -0.5};
    for (double prob : {1e-6, 1e-3, 0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.999}) {
        double z = skewt_quantile(prob, p);
        CHECK(std::abs(skewt_cdf(z, p) - prob) <= 1e-10);
    }
    CHECK_THROWS_AS(skewt_quantile(0.0, p), ValidationError);
    CHECK_THROWS_AS(skewt_quantile(1.0, p), ValidationError);
}

TEST_CASE("skew-t is standardized to zero mean and unit variance") {
    for (double lambda : {-0.5, 0.0, 0.3}) {
        SkewtParams p{5.0, lambda};
        CHECK(std::abs(skewt_mean(p)) <= 1e-6);
        CHECK(skewt_variance(p) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

namespace {

// Closed-form left-tail integral of z * pdf(z) for the skewed
// Student-t, valid below the density join point. Used as an oracle for
// the quadrature-based tail pair.
double skewt_tail_integral_closed(double q, const SkewtParams& p) {
    double c = std::exp(std::lgamma((p.nu + 1.0) / 2.0) - std::lgamma(p.nu / 2.0))
             / std::sqrt(M_PI * (p.nu - 2.0));
    double ah = 4.0 * p.lambda * c * (p.nu - 2.0) / (p.nu - 1.0);
    double bh = std::sqrt(1.0 + 3.0 * p.lambda * p.lambda - ah * ah);
    double side = 1.0 - p.lambda;
    double u = (bh * q + ah) / side;
    double s = std::sqrt(p.nu / (p.nu - 2.0));
    double kernel = std::pow(1.0 + u * u / (p.nu - 2.0), -(p.nu - 1.0) / 2.0);
    return -c * side * side * (p.nu - 2.0) / (bh * (p.nu - 1.0)) * kernel
         - side * ah / bh * student_t_cdf(u * s, p.nu);
}

} // namespace

TEST_CASE("skew-t tail pair against closed form and published values") {
    SkewtParams p{5.0, -0.5};
    AlphaLevel alpha(0.05);
    auto pair = skewt_tail_pair(alpha, p);

    CHECK(pair.a == doctest::Approx(-1.800015).epsilon(2e-5));
    CHECK(pair.b == doctest::Approx(-2.768252).epsilon(2e-5));

    double oracle_b = skewt_tail_integral_closed(pair.a, p) / 0.05;
    CHECK(pair.b == doctest::Approx(oracle_b).epsilon(1e-7));

    // Zero skew reduces to the unit-variance Student-t tail mean.
    SkewtParams sym{5.0, 0.0};
    auto sym_pair = skewt_tail_pair(alpha, sym);
    double c = 0.49007012926381505;
    double expected = -c * (3.0 / 4.0)
                    * std::pow(1.0 + sym_pair.a * sym_pair.a / 3.0, -2.0) / 0.05;
    CHECK(sym_pair.b == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("empirical tail pair hand examples") {
    std::vector<double> data{-2.5, -1.0, -0.5, 0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2};

    auto p10 = edf_tail_pair(data, AlphaLevel(0.10));
    CHECK(p10.a == doctest::Approx(-2.5));
    CHECK(p10.b == doctest::Approx(-2.5));

    auto p25 = edf_tail_pair(data, AlphaLevel(0.25));
    CHECK(p25.a == doctest::Approx(-0.5));
    CHECK(p25.b == doctest::Approx((-2.5 - 1.0 - 0.5) / 3.0));
}

TEST_CASE("empirical quantile uses the ceil(n alpha) order statistic") {
    std::vector<double> data;
    for (int i = 1; i <= 20; ++i)
        data.push_back(static_cast<double>(-i));
    // n * alpha = 1 exactly: rank 1, the sample minimum is excluded only
    // for ranks above one.
    CHECK(empirical_quantile(data, AlphaLevel(0.05)) == doctest::Approx(-20.0));
    CHECK(empirical_quantile(data, AlphaLevel(0.051)) == doctest::Approx(-19.0));
    CHECK(empirical_quantile(data, AlphaLevel(0.10)) == doctest::Approx(-19.0));
}

TEST_CASE("empirical tail pair includes ties at the quantile") {
    std::vector<double> data{-2.0, -2.0, -2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    auto pair = edf_tail_pair(data, AlphaLevel(0.10));
    CHECK(pair.a == doctest::Approx(-2.0));
    CHECK(pair.b == doctest::Approx(-2.0)); // all three ties enter the mean
}

TEST_CASE("empirical tail pair rejects non-negative quantiles") {
    std::vector<double> data{1.0, 2.0, 3.0, 4.0};
    CHECK_THROWS_AS(edf_tail_pair(data, AlphaLevel(0.25)), ValidationError);
}

TEST_CASE("tail pairs agree with large-sample simulation") {
    // Monte Carlo cross-check of the quadrature path.
    SkewtParams p{5.0, -0.5};
    AlphaLevel alpha(0.05);
    Rng rng(2024);
    size_t n = 200000;
    std::vector<double> draws(n);
    for (auto& d : draws)
        d = skewt_quantile(rng.uniform(), p);
    auto sim = edf_tail_pair(draws, alpha);
    auto exact = skewt_tail_pair(alpha, p);
    CHECK(sim.a == doctest::Approx(exact.a).epsilon(0.02));
    CHECK(sim.b == doctest::Approx(exact.b).epsilon(0.02));
}
