#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fzrisk/fz_loss.hpp"
#include "fzrisk/rng.hpp"

using namespace fzrisk;

namespace {

const AlphaLevel kAlpha05(0.05);

// Random valid loss sample with the observation kept away from the
// quantile kink.
LossSample random_sample(Rng& rng) {
    LossSample s;
    s.v = -0.2 - 2.8 * rng.uniform();
    s.e = s.v - 0.01 - std::abs(rng.normal());
    do {
        s.y = 5.0 * (2.0 * rng.uniform() - 1.0);
    } while (std::abs(s.y - s.v) < 1e-4);
    return s;
}

} // namespace

TEST_CASE("fz0 loss hand-checked values") {
    // A forecast of (-1, -1) with y = 0 has zero hit term, v/e = 1 and
    // log(-e) = 0, so the loss is exactly 1 + 0 - 1 = 0.
    CHECK(fz0_loss({0.0, -1.0, -1.0}, kAlpha05) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(fz0_loss({-1.0, -1.64, -2.06}, kAlpha05)
          == doctest::Approx(0.5188224876558587).epsilon(1e-12));
    CHECK(fz0_loss({-3.0, -1.64, -2.06}, kAlpha05)
          == doctest::Approx(13.72270598280149).epsilon(1e-12));
    // y == v counts as a hit, but the hit term vanishes there.
    CHECK(fz0_loss({-1.64, -1.64, -2.06}, kAlpha05)
          == doctest::Approx(0.5188224876558587).epsilon(1e-12));
}

TEST_CASE("fz0 loss input validation") {
    CHECK_THROWS_AS(fz0_loss({0.0, 1.0, -2.0}, kAlpha05), ValidationError);
    CHECK_THROWS_AS(fz0_loss({0.0, -1.0, -0.5}, kAlpha05), ValidationError);
    CHECK_THROWS_AS(fz0_loss({std::nan(""), -1.0, -2.0}, kAlpha05), ValidationError);
}

TEST_CASE("general scoring family reproduces fz0 with the 1/x pair") {
    auto g1 = [](double) { return 0.0; };
    auto g2 = [](double x) { return -1.0 / x; };
    auto g2_int = [](double x) { return -std::log(-x); };
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        auto s = random_sample(rng);
        double general = fz_loss_general(s, kAlpha05, g1, g2, g2_int);
        double direct = fz0_loss(s, kAlpha05);
        CHECK(general == doctest::Approx(direct).epsilon(1e-13));
    }
}

TEST_CASE("general scoring family with a different g1 still penalizes misses") {
    // g1(x) = x gives the quantile part its own tick-loss contribution.
    auto g1 = [](double x) { return x; };
    auto g2 = [](double x) { return -1.0 / x; };
    auto g2_int = [](double x) { return -std::log(-x); };
    LossSample s{-2.0, -1.0, -2.2};
    double expected = fz0_loss(s, kAlpha05) + (1.0 - 0.05) * (s.v - s.y);
    CHECK(fz_loss_general(s, kAlpha05, g1, g2, g2_int)
          == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("scaling differences and level shift") {
    Rng rng(23);
    double worst_shift = 0.0;
    double worst_diff = 0.0;
    for (int i = 0; i < 10000; ++i) {
        auto s1 = random_sample(rng);
        LossSample s2 = s1;
        s2.v = -0.2 - 2.8 * rng.uniform();
        s2.e = s2.v - 0.01 - std::abs(rng.normal());
        while (std::abs(s1.y - s2.v) < 1e-4)
            s2.v -= 1e-3;
        double k = std::exp(std::log(0.01) + rng.uniform() * std::log(1e4));

        double l1 = fz0_loss(s1, kAlpha05);
        double l2 = fz0_loss(s2, kAlpha05);
        LossSample s1k{k * s1.y, k * s1.v, k * s1.e};
        LossSample s2k{k * s1.y, k * s2.v, k * s2.e};
        double l1k = fz0_loss(s1k, kAlpha05);
        double l2k = fz0_loss(s2k, kAlpha05);

        double shift_err = std::abs(l1k - l1 - std::log(k))
                         / std::max(1.0, std::abs(l1) + std::abs(std::log(k)));
        double diff_err = std::abs((l1k - l2k) - (l1 - l2))
                        / std::max(1.0, std::abs(l1 - l2));
        worst_shift = std::max(worst_shift, shift_err);
        worst_diff = std::max(worst_diff, diff_err);
    }
    CHECK(worst_shift <= 1e-12);
    CHECK(worst_diff <= 1e-12);
}

TEST_CASE("smoothed loss hand-checked value and limits") {
    auto tau5 = SmoothingTau::Smoothed(5.0);
    LossSample s{-1.8, -1.64, -2.06};
    CHECK(tau5.weight(s.y, s.v) == doctest::Approx(0.6899744811276126).epsilon(1e-12));
    CHECK(fz0_smoothed(s, kAlpha05, tau5)
          == doctest::Approx(1.590627506883219).epsilon(1e-12));

    // Exact smoothing reproduces the hard-indicator loss.
    CHECK(fz0_smoothed(s, kAlpha05, SmoothingTau::Exact())
          == fz0_loss(s, kAlpha05));

    // Large tau converges to the hard indicator away from the kink.
    auto tau_big = SmoothingTau::Smoothed(1e6);
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        auto r = random_sample(rng);
        CHECK(std::abs(fz0_smoothed(r, kAlpha05, tau_big) - fz0_loss(r, kAlpha05))
              <= 1e-4);
    }

    CHECK_THROWS_AS(SmoothingTau::Smoothed(0.0), ValidationError);
    CHECK_THROWS_AS(SmoothingTau::Smoothed(-3.0), ValidationError);
}

TEST_CASE("exact gradient hand-checked values") {
    auto g_miss = fz0_gradient({0.0, -1.64, -2.06}, kAlpha05);
    CHECK(g_miss.d_v == doctest::Approx(-0.4854368932038835).epsilon(1e-12));
    CHECK(g_miss.d_e == doctest::Approx(-0.09897257045904423).epsilon(1e-12));

    auto g_hit = fz0_gradient({-3.0, -1.64, -2.06}, kAlpha05);
    CHECK(g_hit.d_v == doctest::Approx(9.223300970873785).epsilon(1e-12));
    CHECK(g_hit.d_e == doctest::Approx(6.310679611650484).epsilon(1e-12));

    CHECK_THROWS_AS(fz0_gradient({-1.64, -1.64, -2.06}, kAlpha05), ValidationError);
}

TEST_CASE("exact gradient matches finite differences away from the kink") {
    Rng rng(37);
    for (int i = 0; i < 300; ++i) {
        auto s = random_sample(rng);
        auto g = fz0_gradient(s, kAlpha05);
        double h = 1e-7;
        LossSample vp = s, vm = s, ep = s, em = s;
        vp.v += h;
        vm.v -= h;
        ep.e += h;
        em.e -= h;
        double fd_v = (fz0_loss(vp, kAlpha05) - fz0_loss(vm, kAlpha05)) / (2 * h);
        double fd_e = (fz0_loss(ep, kAlpha05) - fz0_loss(em, kAlpha05)) / (2 * h);
        CHECK(g.d_v == doctest::Approx(fd_v).epsilon(1e-5));
        CHECK(g.d_e == doctest::Approx(fd_e).epsilon(1e-5));
    }
}

TEST_CASE("smoothed gradient matches finite differences everywhere") {
    Rng rng(41);
    for (double tau_val : {5.0, 20.0}) {
        auto tau = SmoothingTau::Smoothed(tau_val);
        double worst = 0.0;
        for (int i = 0; i < 300; ++i) {
            LossSample s;
            s.v = -0.2 - 2.8 * rng.uniform();
            s.e = s.v - 0.01 - std::abs(rng.normal());
            s.y = 5.0 * (2.0 * rng.uniform() - 1.0); // kink allowed here
            auto g = fz0_smoothed_gradient(s, kAlpha05, tau);
            double h = 1e-6 * std::max(1.0, std::abs(s.v));
            LossSample vp = s, vm = s, ep = s, em = s;
            vp.v += h;
            vm.v -= h;
            ep.e += h;
            em.e -= h;
            double fd_v = (fz0_smoothed(vp, kAlpha05, tau) - fz0_smoothed(vm, kAlpha05, tau)) / (2 * h);
            double fd_e = (fz0_smoothed(ep, kAlpha05, tau) - fz0_smoothed(em, kAlpha05, tau)) / (2 * h);
            double denom_v = std::max(1e-8, std::abs(fd_v));
            double denom_e = std::max(1e-8, std::abs(fd_e));
            worst = std::max(worst, std::abs(g.d_v - fd_v) / denom_v);
            worst = std::max(worst, std::abs(g.d_e - fd_e) / denom_e);
        }
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("forcing variables") {
    auto f_miss = forcing_vars({0.0, -1.0, -2.0}, kAlpha05);
    CHECK(f_miss.lam_v == doctest::Approx(-0.05).epsilon(1e-14));
    CHECK(f_miss.lam_e == doctest::Approx(2.0).epsilon(1e-14));

    auto f_hit = forcing_vars({-2.0, -1.0, -2.2}, kAlpha05);
    CHECK(f_hit.lam_v == doctest::Approx(0.95).epsilon(1e-14));
    CHECK(f_hit.lam_e == doctest::Approx(-37.8).epsilon(1e-13));

    // The smoothed indicator sits at one half exactly on the kink.
    auto f_kink = forcing_vars({-1.0, -1.0, -2.0}, kAlpha05, SmoothingTau::Smoothed(5.0));
    CHECK(f_kink.lam_v == doctest::Approx(-(-1.0) * (0.5 - 0.05)).epsilon(1e-13));
    CHECK(f_kink.lam_e == doctest::Approx(0.5 * (-1.0) / 0.05 + 2.0).epsilon(1e-13));
}

TEST_CASE("expected-loss hessian against closed-form oracle") {
    // Frozen from the closed-form expected loss
    //   E[L] = -(v Phi(v) + phi(v)) / (alpha e) + v/e + log(-e) - 1
    // differentiated analytically and cross-checked by finite
    // differences below.
    auto h = expected_loss_hessian_normal(-1.6449, -2.0627, kAlpha05);
    CHECK(h.vv == doctest::Approx(0.9999299335816729).epsilon(1e-10));
    CHECK(h.ve == doctest::Approx(-2.248100445225155e-05).epsilon(1e-6));
    CHECK(h.ee == doctest::Approx(0.2350353881801475).epsilon(1e-10));

    double step = 1e-5;
    auto el = [&](double v, double e) {
        return expected_fz0_loss_normal(v, e, kAlpha05);
    };
    double v = -1.6449, e = -2.0627;
    double fd_vv = (el(v + step, e) - 2 * el(v, e) + el(v - step, e)) / (step * step);
    double fd_ee = (el(v, e + step) - 2 * el(v, e) + el(v, e - step)) / (step * step);
    double fd_ve = (el(v + step, e + step) - el(v + step, e - step)
                    - el(v - step, e + step) + el(v - step, e - step))
                 / (4 * step * step);
    CHECK(h.vv == doctest::Approx(fd_vv).epsilon(1e-4));
    CHECK(h.ee == doctest::Approx(fd_ee).epsilon(1e-4));
    CHECK(std::abs(h.ve - fd_ve) <= 1e-6);
}

TEST_CASE("expected-loss hessian at the true pair") {
    // At the exact normal tail pair the cross term vanishes and the
    // (e,e) entry equals 1/e^2.
    double a = -1.6448536269514729;
    double b = -2.0627128075074253;
    auto h = expected_loss_hessian_normal(a, b, kAlpha05);
    CHECK(std::abs(h.ve) <= 1e-10);
    CHECK(h.ee == doctest::Approx(1.0 / (b * b)).epsilon(1e-10));
    CHECK(h.vv > 0.0);
}

TEST_CASE("tick loss") {
    CHECK(tick_loss(-2.0, -1.0, kAlpha05) == doctest::Approx(0.95).epsilon(1e-14));
    CHECK(tick_loss(0.0, -1.0, kAlpha05) == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(tick_loss(-1.0, -1.0, kAlpha05) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("average loss equals the mean of pointwise losses") {
    Rng rng(55);
    std::vector<double> y;
    RiskPath path;
    for (int i = 0; i < 64; ++i) {
        auto s = random_sample(rng);
        y.push_back(s.y);
        path.v.push_back(s.v);
        path.e.push_back(s.e);
    }
    double direct = 0.0;
    for (size_t t = 0; t < y.size(); ++t)
        direct += fz0_loss({y[t], path.v[t], path.e[t]}, kAlpha05);
    direct /= static_cast<double>(y.size());
    CHECK(average_loss(y, path, kAlpha05) == doctest::Approx(direct).epsilon(1e-13));

    std::vector<double> short_y(y.begin(), y.end() - 1);
    CHECK_THROWS_AS(average_loss(short_y, path, kAlpha05), ValidationError);
}
