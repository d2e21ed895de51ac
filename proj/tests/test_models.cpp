#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fzrisk/distributions.hpp"
#include "fzrisk/errors.hpp"
#include "fzrisk/models.hpp"
#include "fzrisk/rng.hpp"

using namespace fzrisk;

namespace {

const AlphaLevel kAlpha05(0.05);
const AlphaLevel kAlpha25(0.25);

// Volatility-clustered test data: a unit-variance GARCH recursion with
// Gaussian shocks, generated inline so the fixture is self-contained.
std::vector<double> clustered_returns(size_t n, uint64_t seed) {
    Rng rng(seed, 0);
    double s2 = 1.0;
    std::vector<double> y(n);
    for (size_t t = 0; t < n; ++t) {
        y[t] = std::sqrt(s2) * rng.normal();
        s2 = 0.05 + 0.9 * s2 + 0.05 * y[t] * y[t];
    }
    return y;
}

std::vector<double> iid_normals(size_t n, uint64_t seed) {
    Rng rng(seed, 1);
    std::vector<double> y(n);
    for (size_t t = 0; t < n; ++t) y[t] = rng.normal();
    return y;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

} // namespace

// ====================== one-factor filter ======================

TEST_CASE("one-factor single step matches hand arithmetic") {
    // kappa_1 = 0, y_1 = -4 is a hit at v_1 = a: the forcing variable is
    // (-1/-2.06)((1/0.05)(-4) - (-2.06)) = -37.835 and kappa_2 = 0.05 * that.
    Gas1fParams p{0.9, 0.05, -1.64, -2.06};
    std::vector<double> y{-4.0, 0.0};
    RiskPath path = gas1f_filter(y, p, kAlpha05);
    CHECK(path.v[0] == doctest::Approx(-1.64).epsilon(1e-15));
    CHECK(path.e[0] == doctest::Approx(-2.06).epsilon(1e-15));
    CHECK(path.v[1] == doctest::Approx(-0.24732516986124187).epsilon(1e-12));
    CHECK(path.e[1] == doctest::Approx(-0.3106645426305843).epsilon(1e-12));
}

TEST_CASE("one-factor degenerate loadings give a constant path") {
    std::vector<double> y = clustered_returns(300, 11);
    for (double beta : {1.0, 0.9}) {
        Gas1fParams p{beta, 0.0, -1.5, -2.0};
        RiskPath path = gas1f_filter(y, p, kAlpha05);
        for (size_t t = 0; t < path.size(); ++t) {
            CHECK(path.v[t] == -1.5);
            CHECK(path.e[t] == -2.0);
        }
    }
}

TEST_CASE("one-factor path keeps e/v exactly proportional") {
    std::vector<double> y = clustered_returns(2500, 12);
    Gas1fParams p{0.990, -0.010, -1.490, -2.089};
    RiskPath path = gas1f_filter(y, p, kAlpha05);
    validate(path);
    double ratio = p.b / p.a;
    for (size_t t = 0; t < path.size(); ++t)
        CHECK(path.e[t] / path.v[t] == doctest::Approx(ratio).epsilon(1e-12));
}

TEST_CASE("one-factor smoothing converges to the exact indicator") {
    std::vector<double> y = clustered_returns(400, 13);
    Gas1fParams p{0.95, -0.02, -1.5, -2.0};
    RiskPath exact = gas1f_filter(y, p, kAlpha05);
    RiskPath loose = gas1f_filter(y, p, kAlpha05, SmoothingTau::Smoothed(5.0));
    RiskPath tight = gas1f_filter(y, p, kAlpha05, SmoothingTau::Smoothed(1e7));
    double loose_gap = 0.0, tight_gap = 0.0;
    for (size_t t = 0; t < exact.size(); ++t) {
        loose_gap = std::max(loose_gap, std::abs(loose.v[t] - exact.v[t]));
        tight_gap = std::max(tight_gap, std::abs(tight.v[t] - exact.v[t]));
    }
    CHECK(loose_gap > 1e-6);  // smoothing must actually reach the filter
    CHECK(tight_gap < 1e-4);
}

TEST_CASE("one-factor filter rejects invalid inputs") {
    std::vector<double> y{-1.0, 0.5};
    CHECK_THROWS_AS(gas1f_filter(y, Gas1fParams{0.9, 0.0, -2.0, -1.0}, kAlpha05),
                    ValidationError); // needs b < a
    CHECK_THROWS_AS(gas1f_filter(y, Gas1fParams{0.9, 0.0, 1.0, -2.0}, kAlpha05),
                    ValidationError); // needs a < 0
    CHECK_THROWS_AS(gas1f_filter(std::vector<double>{}, Gas1fParams{}, kAlpha05),
                    ValidationError);
    // A huge loading blows the factor out of the safe range.
    std::vector<double> shocks(50, -30.0);
    CHECK_THROWS_AS(gas1f_filter(shocks, Gas1fParams{0.99, 5.0, -1.0, -2.0}, kAlpha05),
                    NumericError);
}

// ====================== two-factor filter ======================

TEST_CASE("two-factor identity dynamics hold the initial pair") {
    Gas2fParams p;
    p.b_v = 1.0;
    p.b_e = 1.0;
    std::vector<double> y = clustered_returns(100, 14);
    RiskPath path = gas2f_filter(y, p, kAlpha05, -1.7, -2.2);
    for (size_t t = 0; t < path.size(); ++t) {
        CHECK(path.v[t] == -1.7);
        CHECK(path.e[t] == -2.2);
    }
}

TEST_CASE("two-factor hand-stepped update") {
    // Persistence near one with small score loadings; the hit at
    // y = -3 moves both measures down via the tail-mean score.
    Gas2fParams p{-0.046, -0.069, 0.977, 0.973, 0.001, 0.007, 0.001, 0.011};
    std::vector<double> y{-3.0, 0.0};
    RiskPath path = gas2f_filter(y, p, kAlpha05, -2.0, -2.5);
    CHECK(path.v[1] == doctest::Approx(-2.4006).epsilon(1e-10));
    CHECK(path.e[1] == doctest::Approx(-3.1321).epsilon(1e-10));
    // The implied long-run pair w / (1 - b) sits near the sample
    // averages these parameters were picked to match.
    CHECK(p.w_v / (1.0 - p.b_v) == doctest::Approx(-2.001).epsilon(0.005));
    CHECK(p.w_e / (1.0 - p.b_e) == doctest::Approx(-2.556).epsilon(0.005));
}

TEST_CASE("two-factor filter reports the first bad step") {
    // Explosive persistence walks v across zero; the error names the index.
    Gas2fParams p;
    p.b_v = -1.5;
    p.b_e = 1.0;
    std::vector<double> y(30, 0.0);
    CHECK_THROWS_AS(gas2f_filter(y, p, kAlpha05, -1.0, -2.0), ValidationError);
    CHECK_THROWS_AS(gas2f_filter(y, p, kAlpha05, -1.0, -0.5), ValidationError);
    CHECK_THROWS_AS(gas2f_filter(y, p, kAlpha05, 1.0, -2.0), ValidationError);
}

// ====================== variance recursions ======================

TEST_CASE("variance recursion matches hand arithmetic") {
    GarchParams p{0.05, 0.9, 0.05};
    std::vector<double> y{1.0, 2.0, 7.0};
    std::vector<double> s2 = garch_variance_path(y, p, 1.0);
    REQUIRE(s2.size() == 3);
    CHECK(s2[0] == 1.0);
    CHECK(s2[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s2[2] == doctest::Approx(1.15).epsilon(1e-14));
}

TEST_CASE("variance recursion degenerates to a constant") {
    GarchParams p{1.0, 0.0, 0.0};
    std::vector<double> y = clustered_returns(50, 15);
    std::vector<double> s2 = garch_variance_path(y, p, 4.0);
    CHECK(s2[0] == 4.0);
    for (size_t t = 1; t < s2.size(); ++t) CHECK(s2[t] == 1.0);
}

TEST_CASE("variance recursion flags explosive paths") {
    GarchParams p{0.05, 2.0, 0.05};
    std::vector<double> y(600, 0.0);
    CHECK_THROWS_AS(garch_variance_path(y, p, 1.0), NumericError);
}

TEST_CASE("scaled-risk filter is the variance path times the levels") {
    GarchFzParams p{1.0, 0.7, 0.2, -1.6, -2.1};
    std::vector<double> y = clustered_returns(200, 16);
    RiskPath path = garchfz_filter(y, p, 1.3);
    std::vector<double> s2 =
        garch_variance_path(y, GarchParams{p.omega, p.beta, p.gamma}, 1.3);
    for (size_t t = 0; t < path.size(); ++t) {
        CHECK(path.v[t] == p.a * std::sqrt(s2[t]));
        CHECK(path.e[t] == p.b * std::sqrt(s2[t]));
    }
    validate(path);
}

// ====================== hybrid filter ======================

TEST_CASE("hybrid single step adds the log-magnitude channel") {
    HybridParams p{0.9, 0.05, 0.02, -1.64, -2.06};
    std::vector<double> y{-4.0, 0.0};
    RiskPath path = hybrid_filter(y, p, kAlpha05);
    // Same forcing as the plain one-factor step plus 0.02 * log(4).
    double kappa2 = -1.8640216855931362;
    CHECK(path.v[1] == doctest::Approx(-1.64 * std::exp(kappa2)).epsilon(1e-12));
    CHECK(path.e[1] == doctest::Approx(-2.06 * std::exp(kappa2)).epsilon(1e-12));
}

TEST_CASE("hybrid with delta = 0 reduces to the one-factor filter") {
    std::vector<double> y = clustered_returns(500, 17);
    HybridParams hp{0.95, -0.02, 0.0, -1.5, -2.0};
    Gas1fParams gp{0.95, -0.02, -1.5, -2.0};
    RiskPath h = hybrid_filter(y, hp, kAlpha05);
    RiskPath g = gas1f_filter(y, gp, kAlpha05);
    for (size_t t = 0; t < h.size(); ++t) {
        CHECK(h.v[t] == g.v[t]);
        CHECK(h.e[t] == g.e[t]);
    }
}

TEST_CASE("hybrid log term vanishes at unit magnitude") {
    std::vector<double> y{-1.0, 0.3};
    HybridParams hp{0.9, 0.05, 0.7, -1.64, -2.06};
    Gas1fParams gp{0.9, 0.05, -1.64, -2.06};
    RiskPath h = hybrid_filter(y, hp, kAlpha05);
    RiskPath g = gas1f_filter(y, gp, kAlpha05);
    CHECK(h.v[1] == g.v[1]);
    CHECK(h.e[1] == g.e[1]);
}

TEST_CASE("hybrid runs stably with fitted-scale parameters") {
    std::vector<double> y = clustered_returns(2500, 18);
    HybridParams p{0.968, -0.011, 0.018, -2.443, -3.389};
    RiskPath path = hybrid_filter(y, p, kAlpha05);
    validate(path);
    double ratio = p.b / p.a;
    for (size_t t = 0; t < path.size(); ++t)
        CHECK(path.e[t] / path.v[t] == doctest::Approx(ratio).epsilon(1e-12));
}

// ====================== rolling window ======================

TEST_CASE("rolling forecast hand example") {
    // Window {-1,-2,-3,-4} at alpha = 0.25: the quantile is the minimum
    // and the current-cutoff tail mean is -4 / (0.25 * 4) = -4.
    std::vector<double> y{-1.0, -2.0, -3.0, -4.0, 0.0};
    RollingForecast rf = rolling_forecast(y, 4, kAlpha25, RollingEsMode::CurrentVar);
    CHECK(rf.start == 4);
    REQUIRE(rf.path.size() == 1);
    CHECK(rf.path.v[0] == -4.0);
    CHECK(rf.path.e[0] == -4.0);
}

TEST_CASE("rolling forecast per-date cutoffs use each date's own quantile") {
    std::vector<double> y{-1.0, -2.0, -3.0, -4.0, -5.0, -6.0, -7.0, -8.0, 0.0};
    RollingForecast past = rolling_forecast(y, 4, kAlpha25, RollingEsMode::PastVar);
    CHECK(past.start == 8);
    REQUIRE(past.path.size() == 1);
    CHECK(past.path.v[0] == -8.0);
    // Every in-window return sits at or below its own rolling quantile,
    // so all four contribute: (-5-6-7-8) / (0.25 * 4) = -26.
    CHECK(past.path.e[0] == doctest::Approx(-26.0).epsilon(1e-14));

    RollingForecast cur = rolling_forecast(y, 4, kAlpha25, RollingEsMode::CurrentVar);
    CHECK(cur.path.v.back() == -8.0);
    CHECK(cur.path.e.back() == doctest::Approx(-8.0).epsilon(1e-14));
}

TEST_CASE("rolling forecast on Gaussian data tracks the normal tail") {
    std::vector<double> y = iid_normals(1000, 19);
    RollingForecast rf = rolling_forecast(y, 500, kAlpha05, RollingEsMode::CurrentVar);
    REQUIRE(rf.path.size() == 500);
    CHECK(mean_of(rf.path.v) == doctest::Approx(-1.645).epsilon(0.06));
    for (size_t t = 0; t < rf.path.size(); ++t) CHECK(rf.path.e[t] <= rf.path.v[t]);
}

TEST_CASE("rolling forecast input validation") {
    std::vector<double> y(30, 1.0);
    CHECK_THROWS_AS(rolling_forecast(y, 8, kAlpha25, RollingEsMode::CurrentVar),
                    ValidationError); // positive quantile
    CHECK_THROWS_AS(rolling_forecast(y, 40, kAlpha25), ValidationError); // short sample
    CHECK_THROWS_AS(rolling_forecast(y, 2, kAlpha05), ValidationError);  // window < 1/alpha
    std::vector<double> neg(30, -2.0);
    RollingForecast rf = rolling_forecast(neg, 4, kAlpha25, RollingEsMode::CurrentVar);
    CHECK(rf.path.v[0] == -2.0);
    // As printed, the tail mean divides the full-window tail sum by
    // alpha * m, so a constant window lands at c / alpha.
    CHECK(rf.path.e[0] == doctest::Approx(-8.0).epsilon(1e-14));
}

// ====================== location-scale forecasts ======================

TEST_CASE("location-scale forecast on iid Gaussian data") {
    std::vector<double> y = iid_normals(10000, 20);
    RiskPath path = armagarch_forecast(y, InnovationDist::Normal, kAlpha05);
    REQUIRE(path.size() == y.size());
    CHECK(mean_of(path.v) == doctest::Approx(-1.645).epsilon(0.03));
    CHECK(mean_of(path.e) == doctest::Approx(-2.063).epsilon(0.03));
}

TEST_CASE("empirical-tail forecast approaches the normal pair on Gaussian data") {
    std::vector<double> y = iid_normals(50000, 21);
    ArmaGarchModel m = armagarch_fit(y, InnovationDist::Edf, kAlpha05);
    CHECK(m.tail.a == doctest::Approx(-1.645).epsilon(0.03));
    CHECK(m.tail.b == doctest::Approx(-2.063).epsilon(0.03));
}

TEST_CASE("skewed-t tail pair approaches the normal pair at high dof") {
    TailPair st = skewt_tail_pair(kAlpha05, SkewtParams{500.0, 0.0});
    TailPair n = normal_tail_pair(kAlpha05);
    CHECK(std::abs(st.a - n.a) < 0.01);
    CHECK(std::abs(st.b - n.b) < 0.01);
}

TEST_CASE("applying a frozen model to a longer span extends the fit") {
    std::vector<double> y = clustered_returns(1500, 22);
    std::span<const double> head(y.data(), 1000);
    ArmaGarchModel m = armagarch_fit(head, InnovationDist::Normal, kAlpha05);
    RiskPath in_sample = armagarch_apply(m, head);
    RiskPath full = armagarch_apply(m, y);
    REQUIRE(full.size() == 1500);
    for (size_t t = 0; t < 1000; ++t) {
        CHECK(full.v[t] == in_sample.v[t]);
        CHECK(full.e[t] == in_sample.e[t]);
    }
    validate(full);
}

// ====================== news impact curves ======================

TEST_CASE("one-factor news impact curve is flat above the quantile") {
    Gas1fParams p{0.9, -0.05, -1.64, -2.06};
    double shift = std::exp(0.1);
    double v = p.a * shift, e = p.b * shift;
    std::vector<double> grid{-6.0, -3.0, v - 1e-6, v + 1e-6, -0.5, 0.0, 2.0, 6.0};
    std::vector<NicPoint> nic = news_impact_curve(p, kAlpha05, v, e, grid);
    REQUIRE(nic.size() == grid.size());
    for (size_t i = 0; i < nic.size(); ++i) {
        if (grid[i] > v) {
            CHECK(nic[i].v_next == nic.back().v_next);
            CHECK(nic[i].e_next == nic.back().e_next);
        }
        CHECK(nic[i].e_next / nic[i].v_next == doctest::Approx(p.b / p.a).epsilon(1e-12));
    }
    // Below the quantile the log-factor response is affine in y.
    std::vector<double> lows{-6.0, -5.0, -4.0, -3.0};
    std::vector<NicPoint> low = news_impact_curve(p, kAlpha05, v, e, lows);
    auto kappa_of = [&](const NicPoint& pt) { return std::log(pt.v_next / p.a); };
    double d1 = kappa_of(low[1]) - kappa_of(low[0]);
    double d2 = kappa_of(low[2]) - kappa_of(low[1]);
    double d3 = kappa_of(low[3]) - kappa_of(low[2]);
    CHECK(d1 == doctest::Approx(d2).epsilon(1e-9));
    CHECK(d2 == doctest::Approx(d3).epsilon(1e-9));
}

TEST_CASE("one-factor news impact curve agrees with the filter") {
    // With state (a, b) the curve must reproduce a two-observation
    // filter run, because the filter also starts at kappa = 0.
    Gas1fParams p{0.9, 0.05, -1.64, -2.06};
    for (double probe : {-4.0, -1.0, 0.0, 3.0}) {
        std::vector<double> y{probe, 0.0};
        RiskPath path = gas1f_filter(y, p, kAlpha05);
        std::vector<double> grid{probe};
        std::vector<NicPoint> nic = news_impact_curve(p, kAlpha05, p.a, p.b, grid);
        CHECK(nic[0].v_next == path.v[1]);
        CHECK(nic[0].e_next == path.e[1]);
    }
}

TEST_CASE("two-factor news impact curve jumps by the score discontinuity") {
    Gas2fParams p{-0.046, -0.069, 0.977, 0.973, 0.001, 0.007, 0.001, 0.011};
    double v = -2.0, e = -2.5;
    double eps = 1e-9;
    std::vector<double> grid{v - eps, v + eps, 1.0, 5.0};
    std::vector<NicPoint> nic = news_impact_curve(p, kAlpha05, v, e, grid);
    // Crossing the quantile turns the hit on: the quantile score jumps
    // by |v| and the tail-mean score by v / alpha.
    double jump_v = p.a_vv * (-v) + p.a_ve * (v / 0.05);
    double jump_e = p.a_ev * (-v) + p.a_ee * (v / 0.05);
    CHECK(nic[0].v_next - nic[1].v_next == doctest::Approx(jump_v).epsilon(1e-5));
    CHECK(nic[0].e_next - nic[1].e_next == doctest::Approx(jump_e).epsilon(1e-5));
    // Flat above the quantile.
    CHECK(nic[1].v_next == nic[2].v_next);
    CHECK(nic[2].v_next == nic[3].v_next);
    CHECK(nic[1].e_next == nic[3].e_next);
}

TEST_CASE("two-factor news impact curve with zero loadings is flat everywhere") {
    Gas2fParams p{-0.05, -0.06, 0.97, 0.97, 0.0, 0.0, 0.0, 0.0};
    std::vector<double> grid{-5.0, -2.0, 0.0, 5.0};
    std::vector<NicPoint> nic = news_impact_curve(p, kAlpha05, -2.0, -2.5, grid);
    for (const NicPoint& pt : nic) {
        CHECK(pt.v_next == nic[0].v_next);
        CHECK(pt.e_next == nic[0].e_next);
    }
}

TEST_CASE("scaled-risk news impact curve is symmetric in the return") {
    GarchFzParams p{1.0, 0.8, 0.1, -1.6, -2.1};
    double v = p.a * 1.2, e = p.b * 1.2;
    std::vector<double> grid{-3.0, -1.0, 0.0, 1.0, 3.0};
    std::vector<NicPoint> nic = news_impact_curve(p, v, e, grid);
    CHECK(nic[0].v_next == nic[4].v_next);
    CHECK(nic[1].v_next == nic[3].v_next);
    CHECK(nic[1].v_next < nic[2].v_next); // larger magnitude, deeper quantile
}

TEST_CASE("news impact curve rejects an inconsistent one-factor state") {
    Gas1fParams p{0.9, 0.05, -1.64, -2.06};
    std::vector<double> grid{0.0};
    CHECK_THROWS_AS(news_impact_curve(p, kAlpha05, -1.64, -2.5, grid), ValidationError);
}

// ====================== location-scale map ======================

TEST_CASE("risk-to-moment map hand values and identities") {
    TailPair tail{-1.5, -2.0};
    RiskPath path;
    path.v = {tail.a, 2.0 * tail.a, tail.a + 1.0, -1.6};
    path.e = {tail.b, 2.0 * tail.b, tail.b + 1.0, -2.25};
    LocScalePath ls = locscale_from_risk(path, tail);
    CHECK(ls.mu[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(ls.sigma[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(ls.mu[1] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(ls.sigma[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(ls.mu[2] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(ls.sigma[2] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(ls.mu[3] == doctest::Approx(0.35).epsilon(1e-12));
    CHECK(ls.sigma[3] == doctest::Approx(1.3).epsilon(1e-12));
}

TEST_CASE("risk-to-moment map round-trips random paths") {
    Rng rng(23, 0);
    TailPair tail{-1.644853626951473, -2.0627128425948743};
    RiskPath path;
    for (int i = 0; i < 200; ++i) {
        double sigma = 0.2 + 2.0 * rng.uniform();
        double mu = 0.4 * rng.normal();
        double v = mu + tail.a * sigma;
        double e = mu + tail.b * sigma;
        if (!(v < 0.0)) continue;
        path.v.push_back(v);
        path.e.push_back(e);
    }
    REQUIRE(path.size() > 100);
    LocScalePath ls = locscale_from_risk(path, tail);
    for (size_t t = 0; t < path.size(); ++t) {
        CHECK(ls.mu[t] + tail.a * ls.sigma[t] == doctest::Approx(path.v[t]).epsilon(1e-12));
        CHECK(ls.mu[t] + tail.b * ls.sigma[t] == doctest::Approx(path.e[t]).epsilon(1e-12));
    }
}

TEST_CASE("risk-to-moment map needs distinct tail multipliers") {
    TailPair tail{-2.0, -2.0};
    RiskPath path;
    path.v = {-2.0};
    path.e = {-2.0};
    CHECK_THROWS_AS(locscale_from_risk(path, tail), ValidationError);
}

// ====================== determinism ======================

TEST_CASE("filters are bit-identical across repeated runs") {
    std::vector<double> y = clustered_returns(1000, 24);
    Gas1fParams p{0.95, -0.02, -1.5, -2.0};
    RiskPath first = gas1f_filter(y, p, kAlpha05);
    RiskPath second = gas1f_filter(y, p, kAlpha05);
    CHECK(first.v == second.v);
    CHECK(first.e == second.e);
}
