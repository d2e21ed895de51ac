#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "fzrisk/backtest.hpp"
#include "fzrisk/errors.hpp"
#include "fzrisk/fz_loss.hpp"
#include "fzrisk/models.hpp"
#include "fzrisk/rng.hpp"

using namespace fzrisk;

namespace {

const AlphaLevel kAlpha05(0.05);

std::vector<double> simulated_garch(size_t n, uint64_t seed, double omega = 0.05,
                                    double beta = 0.9, double gamma = 0.05) {
    Rng rng(seed, 0);
    double s2 = omega / (1.0 - beta - gamma);
    std::vector<double> y(n);
    for (size_t t = 0; t < n; ++t) {
        y[t] = std::sqrt(s2) * rng.normal();
        s2 = omega + beta * s2 + gamma * y[t] * y[t];
    }
    return y;
}

// One-factor DGP with its true forecast path: scale exp(kappa_t) times
// standard normal shocks, levels at the Gaussian tail pair.
struct SimulatedWorld {
    std::vector<double> y;
    RiskPath truth;
};

SimulatedWorld simulated_gas1f_world(size_t n, uint64_t seed) {
    const double alpha = 0.05;
    const Gas1fParams p{0.95, -0.03, -1.6448536269514722, -2.0627128425948743};
    Rng rng(seed, 2);
    SimulatedWorld w;
    w.y.resize(n);
    w.truth.v.resize(n);
    w.truth.e.resize(n);
    double kappa = 0.0;
    for (size_t t = 0; t < n; ++t) {
        double scale = std::exp(kappa);
        w.truth.v[t] = p.a * scale;
        w.truth.e[t] = p.b * scale;
        w.y[t] = scale * rng.normal();
        double hit = w.y[t] <= w.truth.v[t] ? 1.0 : 0.0;
        double forcing = -(hit * w.y[t] / alpha - w.truth.e[t]) / w.truth.e[t];
        kappa = p.beta * kappa + p.gamma * forcing;
    }
    return w;
}

RiskPath constant_path(size_t n, double v, double e) {
    RiskPath path;
    path.v.assign(n, v);
    path.e.assign(n, e);
    return path;
}

double mean_of(const std::vector<double>& xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

double stdev_of(const std::vector<double>& xs) {
    double m = mean_of(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

} // namespace

// ====================== standardized residuals ======================

TEST_CASE("residuals with no exceedances are constant") {
    std::vector<double> y(50, 1.0);
    RiskPath path = constant_path(50, -1.0, -2.0);
    StdResiduals r = std_residuals(y, path, kAlpha05);
    REQUIRE(r.lam_v.size() == 50);
    for (size_t t = 0; t < 50; ++t) {
        CHECK(r.lam_v[t] == -0.05);
        CHECK(r.lam_e[t] == -1.0);
    }
}

TEST_CASE("an exceedance sitting exactly at the tail mean") {
    std::vector<double> y(40, 1.0);
    RiskPath path = constant_path(40, -1.0, -2.0);
    y[10] = -1.0000001; // just below the quantile
    path.e[10] = y[10]; // tail mean equal to the observation
    StdResiduals r = std_residuals(y, path, kAlpha05);
    CHECK(r.lam_v[10] == 0.95);
    CHECK(r.lam_e[10] == doctest::Approx(1.0 / 0.05 - 1.0).epsilon(1e-12));
    CHECK(r.lam_v[11] == -0.05);
}

TEST_CASE("residual means vanish under the true model") {
    SimulatedWorld w = simulated_gas1f_world(10000, 71);
    StdResiduals r = std_residuals(w.y, w.truth, kAlpha05);
    double se_v = stdev_of(r.lam_v) / std::sqrt(10000.0);
    double se_e = stdev_of(r.lam_e) / std::sqrt(10000.0);
    CHECK(std::fabs(mean_of(r.lam_v)) < 3.0 * se_v);
    CHECK(std::fabs(mean_of(r.lam_e)) < 3.0 * se_e);
}

TEST_CASE("residuals reject mismatched lengths") {
    std::vector<double> y(10, 1.0);
    RiskPath path = constant_path(11, -1.0, -2.0);
    CHECK_THROWS_AS(std_residuals(y, path, kAlpha05), ValidationError);
}

// ====================== calibration regressions ======================

TEST_CASE("calibration test holds size on independent hit residuals") {
    // the lag coefficient is driven by the count of adjacent exceedance
    // pairs, roughly Poisson(n alpha^2), so the chi-square approximation
    // needs n large enough for that count to normalize
    const size_t sims = 500, n = 4000;
    RiskPath path = constant_path(n, -1.6448536269514722, -2.0627128425948743);
    size_t rejections = 0;
    bool checked_shape = false;
    for (size_t s = 0; s < sims; ++s) {
        Rng rng(900 + s, 3);
        StdResiduals resid;
        resid.lam_v.resize(n);
        resid.lam_e.resize(n);
        for (size_t t = 0; t < n; ++t) {
            double hit = rng.uniform() < 0.05 ? 1.0 : 0.0;
            resid.lam_v[t] = hit - 0.05;
            resid.lam_e[t] = 0.0;
        }
        GofResult g = dq_test(resid, path, GofKind::Dq);
        if (!checked_shape) {
            // constant forecast column duplicates the intercept
            CHECK(g.dropped_collinear);
            CHECK(g.df >= 1);
            CHECK(g.df <= 2);
            CHECK(g.coefficients[2] == 0.0);
            checked_shape = true;
        }
        if (g.p_value < 0.05) ++rejections;
    }
    double rate = static_cast<double>(rejections) / static_cast<double>(sims);
    CHECK(rate >= 0.02);
    CHECK(rate <= 0.09);
}

TEST_CASE("calibration test finds strong serial correlation") {
    const size_t sims = 200, n = 4000;
    RiskPath path = constant_path(n, -1.6448536269514722, -2.0627128425948743);
    size_t rejections = 0;
    for (size_t s = 0; s < sims; ++s) {
        Rng rng(1700 + s, 4);
        StdResiduals resid;
        resid.lam_v.resize(n);
        resid.lam_e.resize(n);
        double prev = 0.0;
        for (size_t t = 0; t < n; ++t) {
            prev = 0.5 * prev + rng.normal();
            resid.lam_v[t] = prev;
            resid.lam_e[t] = 0.0;
        }
        GofResult g = dq_test(resid, path, GofKind::Dq);
        if (g.p_value < 0.05) ++rejections;
    }
    CHECK(static_cast<double>(rejections) >= 0.9 * static_cast<double>(sims));
}

TEST_CASE("all-zero residuals are accepted trivially") {
    const size_t n = 100;
    RiskPath path = constant_path(n, -1.5, -2.0);
    StdResiduals resid;
    resid.lam_v.assign(n, 0.0);
    resid.lam_e.assign(n, 0.0);
    GofResult g = dq_test(resid, path, GofKind::Des);
    CHECK(g.wald == 0.0);
    CHECK(g.p_value == 1.0);
}

TEST_CASE("a constant nonzero residual is rejected outright") {
    const size_t n = 100;
    RiskPath path = constant_path(n, -1.5, -2.0);
    StdResiduals resid;
    resid.lam_v.assign(n, 0.3);
    resid.lam_e.assign(n, 0.3);
    GofResult g = dq_test(resid, path, GofKind::Dq);
    CHECK(std::isinf(g.wald));
    CHECK(g.p_value == 0.0);
}

TEST_CASE("a perfectly fitting lag cell shrinks the tested rank") {
    // hits spaced so an exceedance never follows an exceedance: the
    // lag-one cell is fit exactly and its direction has zero estimated
    // variance, leaving a one-dimensional test
    const size_t n = 1000;
    RiskPath path = constant_path(n, -1.5, -2.0);
    StdResiduals resid;
    resid.lam_v.resize(n);
    resid.lam_e.assign(n, 0.0);
    for (size_t t = 0; t < n; ++t)
        resid.lam_v[t] = (t % 40 == 0 ? 1.0 : 0.0) - 0.05;
    GofResult g = dq_test(resid, path, GofKind::Dq);
    CHECK(g.df == 1);
    CHECK(g.wald >= 0.0);
    CHECK(std::isfinite(g.wald));
    CHECK(g.p_value > 0.0);
    CHECK(g.p_value <= 1.0);
}

TEST_CASE("calibration test needs enough observations") {
    RiskPath path = constant_path(30, -1.5, -2.0);
    StdResiduals resid;
    resid.lam_v.assign(30, 0.0);
    resid.lam_e.assign(30, 0.0);
    CHECK_THROWS_AS(dq_test(resid, path, GofKind::Dq), ValidationError);
}

// ====================== loss-difference comparison ======================

TEST_CASE("identical loss series compare to exactly zero") {
    std::vector<double> a(200);
    Rng rng(5, 5);
    for (double& x : a) x = rng.normal();
    DmResult r = dm_test(a, a);
    CHECK(r.t_stat == 0.0);
    CHECK(r.mean_diff == 0.0);
    CHECK(r.lrv == 0.0);
    CHECK(!r.degenerate);
}

TEST_CASE("comparison statistic is exactly antisymmetric") {
    std::vector<double> a(500), b(500);
    Rng rng(6, 6);
    for (size_t t = 0; t < 500; ++t) {
        a[t] = rng.normal() + 0.02;
        b[t] = rng.normal();
    }
    DmResult ab = dm_test(a, b);
    DmResult ba = dm_test(b, a);
    CHECK(ab.t_stat == -ba.t_stat);
    CHECK(ab.mean_diff == -ba.mean_diff);
    CHECK(ab.lrv == ba.lrv);
}

TEST_CASE("a tenth-of-a-sigma mean difference scores near ten sigma") {
    const size_t n = 10000;
    std::vector<double> a(n), b(n, 0.0);
    Rng rng(7, 7);
    for (size_t t = 0; t < n; ++t) a[t] = 0.1 + rng.normal();
    DmResult r = dm_test(a, b);
    CHECK(r.t_stat == doctest::Approx(10.0).epsilon(0.15));
    CHECK(r.lrv > 0.0);
    CHECK((r.t_stat > 0.0) == (r.mean_diff > 0.0));
}

TEST_CASE("comparison ignores a level shift common to both series") {
    std::vector<double> a(800), b(800);
    Rng rng(8, 8);
    for (size_t t = 0; t < 800; ++t) {
        a[t] = rng.normal() + 0.05;
        b[t] = 0.7 * rng.normal();
    }
    DmResult base = dm_test(a, b);
    std::vector<double> a2 = a, b2 = b;
    for (size_t t = 0; t < 800; ++t) {
        a2[t] += 3.25;
        b2[t] += 3.25;
    }
    DmResult shifted = dm_test(a2, b2);
    CHECK(shifted.t_stat == doctest::Approx(base.t_stat).epsilon(1e-9));
}

TEST_CASE("constant nonzero difference flags a degenerate comparison") {
    std::vector<double> a(100, 1.5), b(100, 1.0);
    DmResult r = dm_test(a, b);
    CHECK(r.degenerate);
    CHECK(std::isinf(r.t_stat));
    CHECK(r.t_stat > 0.0);
    DmResult rev = dm_test(b, a);
    CHECK(rev.t_stat < 0.0);
}

TEST_CASE("comparison validates its inputs") {
    std::vector<double> a(40, 1.0), b(41, 1.0), c(20, 1.0);
    CHECK_THROWS_AS(dm_test(a, b), ValidationError);
    CHECK_THROWS_AS(dm_test(c, c), ValidationError);
    std::vector<double> d(40, 1.0);
    d[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(dm_test(a, d), ValidationError);
}

// ====================== model names ======================

TEST_CASE("comparison model names round-trip") {
    auto models = default_oos_models();
    CHECK(models.size() == 10);
    for (OosModel m : models) CHECK(oos_model_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(oos_model_from_string("garch"), ValidationError);
}

// ====================== out-of-sample harness ======================

TEST_CASE("duplicated models tie exactly") {
    ReturnSeries y;
    y.values = simulated_garch(600, 31);
    const OosModel models[] = {OosModel::GarchNormal, OosModel::GarchNormal};
    BacktestReport rep = oos_harness(y, 300, models, kAlpha05);
    REQUIRE(rep.models.size() == 2);
    CHECK(rep.models[0].ok);
    CHECK(rep.models[1].ok);
    CHECK(rep.models[0].avg_loss == rep.models[1].avg_loss);
    CHECK(rep.models[0].losses == rep.models[1].losses);
    CHECK(rep.dm(0, 1) == 0.0);
    CHECK(rep.dm(1, 0) == 0.0);
    CHECK(rep.dm(0, 0) == 0.0);
    CHECK(rep.ranks[0] == 1);
    CHECK(rep.ranks[1] == 2);
}

TEST_CASE("reported averages match the stored paths") {
    ReturnSeries y;
    y.values = simulated_garch(1600, 32);
    const OosModel models[] = {OosModel::Rw250, OosModel::GarchNormal,
                               OosModel::GarchFz};
    OosConfig cfg;
    cfg.fixed_omega = 0.05;
    BacktestReport rep = oos_harness(y, 800, models, kAlpha05, cfg);
    REQUIRE(rep.models.size() == 3);
    CHECK(rep.n_oos == 800);
    std::span<const double> oos_y(y.values.data() + 800, 800);
    for (size_t i = 0; i < 3; ++i) {
        const OosModelReport& m = rep.models[i];
        REQUIRE(m.ok);
        CHECK(m.avg_loss == average_loss(oos_y, m.oos_path, kAlpha05));
        REQUIRE(m.losses.size() == 800);
        CHECK(m.losses[17] ==
              fz0_loss({oos_y[17], m.oos_path.v[17], m.oos_path.e[17]}, kAlpha05));
        CHECK(m.dq.p_value >= 0.0);
        CHECK(m.dq.p_value <= 1.0);
        CHECK(m.des.p_value >= 0.0);
        CHECK(m.des.p_value <= 1.0);
    }
    // pairwise statistics agree with direct recomputation and each other
    for (Eigen::Index i = 0; i < 3; ++i) {
        CHECK(rep.dm(i, i) == 0.0);
        for (Eigen::Index j = 0; j < 3; ++j) {
            CHECK(rep.dm(i, j) == -rep.dm(j, i));
            if (i != j)
                CHECK(rep.dm(i, j) ==
                      dm_test(rep.models[static_cast<size_t>(i)].losses,
                              rep.models[static_cast<size_t>(j)].losses)
                          .t_stat);
        }
    }
    std::vector<int> sorted = rep.ranks;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>({1, 2, 3}));
}

TEST_CASE("a model that cannot run is reported, not fatal") {
    ReturnSeries y;
    y.values = simulated_garch(1200, 33);
    // the 500-window needs 1000 warm-up points, more than the split
    const OosModel models[] = {OosModel::Rw500, OosModel::GarchNormal};
    BacktestReport rep = oos_harness(y, 600, models, kAlpha05);
    CHECK(!rep.models[0].ok);
    CHECK(!rep.models[0].error.empty());
    CHECK(std::isnan(rep.models[0].avg_loss));
    CHECK(rep.models[1].ok);
    CHECK(rep.ranks[0] == 0);
    CHECK(rep.ranks[1] == 1);
    CHECK(std::isnan(rep.dm(0, 1)));
    CHECK(std::isnan(rep.dm(1, 0)));
    CHECK(rep.dm(1, 1) == 0.0);
}

TEST_CASE("harness validates the split") {
    ReturnSeries y;
    y.values = simulated_garch(400, 34);
    const OosModel models[] = {OosModel::GarchNormal};
    CHECK_THROWS_AS(oos_harness(y, 0, models, kAlpha05), ValidationError);
    CHECK_THROWS_AS(oos_harness(y, 400, models, kAlpha05), ValidationError);
    CHECK_THROWS_AS(oos_harness(y, 380, models, kAlpha05), ValidationError);
    const std::vector<OosModel> empty;
    CHECK_THROWS_AS(oos_harness(y, 200, empty, kAlpha05), ValidationError);
}

// ====================== serialization ======================

TEST_CASE("report JSON round-trips byte for byte") {
    ReturnSeries y;
    y.values = simulated_garch(1200, 35);
    // include a failed model so NaN entries exercise the encoding
    const OosModel models[] = {OosModel::Rw500, OosModel::GarchNormal,
                               OosModel::GarchEdf};
    BacktestReport rep = oos_harness(y, 600, models, kAlpha05);
    std::string text = to_json_string(rep);
    BacktestReport back = backtest_report_from_json(text);
    CHECK(to_json_string(back) == text);
    CHECK(back.alpha == rep.alpha);
    CHECK(back.split == rep.split);
    CHECK(back.n_oos == rep.n_oos);
    REQUIRE(back.models.size() == rep.models.size());
    for (size_t i = 0; i < rep.models.size(); ++i) {
        CHECK(back.models[i].name == rep.models[i].name);
        CHECK(back.models[i].ok == rep.models[i].ok);
        CHECK(back.models[i].losses == rep.models[i].losses);
        CHECK(back.models[i].oos_path.v == rep.models[i].oos_path.v);
        if (rep.models[i].ok)
            CHECK(back.models[i].avg_loss == rep.models[i].avg_loss);
        else
            CHECK(std::isnan(back.models[i].avg_loss));
    }
    CHECK(back.ranks == rep.ranks);
    CHECK_THROWS_AS(backtest_report_from_json("{\"alpha\": }"), ParseError);
    CHECK_THROWS_AS(backtest_report_from_json("{}"), ParseError);
}

TEST_CASE("text rendering lists every model") {
    ReturnSeries y;
    y.values = simulated_garch(1200, 36);
    const OosModel models[] = {OosModel::Rw500, OosModel::GarchNormal};
    BacktestReport rep = oos_harness(y, 600, models, kAlpha05);
    std::string text = render_text(rep);
    CHECK(text.find("rw-500") != std::string::npos);
    CHECK(text.find("garch-n") != std::string::npos);
    CHECK(text.find("failed:") != std::string::npos);
    CHECK(text.find("rank") != std::string::npos);
    CHECK(text.find("row minus column") != std::string::npos);
}
