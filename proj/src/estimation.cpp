#include "fzrisk/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <tuple>
#include <utility>

#include "fzrisk/errors.hpp"
#include "fzrisk/mathutil.hpp"
#include "fzrisk/optim.hpp"
#include "fzrisk/parallel.hpp"
#include "fzrisk/rng.hpp"

namespace fzrisk {

// ====================== names and configuration ======================

std::string to_string(FzModel model) {
    switch (model) {
        case FzModel::Gas1f: return "gas1f";
        case FzModel::Gas2f: return "gas2f";
        case FzModel::GarchFz: return "garch-fz";
        case FzModel::Hybrid: return "hybrid";
    }
    throw ValidationError("unknown model selector");
}

FzModel fz_model_from_string(const std::string& name) {
    if (name == "gas1f") return FzModel::Gas1f;
    if (name == "gas2f") return FzModel::Gas2f;
    if (name == "garch-fz") return FzModel::GarchFz;
    if (name == "hybrid") return FzModel::Hybrid;
    throw ValidationError(strprintf("unknown model name '%s'", name.c_str()));
}

std::vector<SmoothingTau> EstimationConfig::default_stages() {
    return {SmoothingTau::Smoothed(5.0), SmoothingTau::Smoothed(20.0),
            SmoothingTau::Exact()};
}

void EstimationConfig::validate() const {
    if (stages.empty())
        throw ValidationError("stage schedule is empty");
    if (!stages.back().exact())
        throw ValidationError("stage schedule must end with the exact indicator");
    double prev = 0.0;
    for (size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].exact()) {
            if (i + 1 != stages.size())
                throw ValidationError("exact stage must come last in the schedule");
        } else if (stages[i].tau() <= prev) {
            throw ValidationError("smoothing stages must have increasing tau");
        } else {
            prev = stages[i].tau();
        }
    }
    if (!(tol_f > 0.0) || !(tol_x > 0.0))
        throw ValidationError("tolerances must be positive");
    if (multistarts < 1)
        throw ValidationError("need at least one start");
    if (max_iter < 0)
        throw ValidationError("max_iter must be nonnegative");
    if (!(penalty > 0.0) || !std::isfinite(penalty))
        throw ValidationError("penalty must be positive and finite");
}

// ====================== internal coordinates ======================

namespace {

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

double logit(double p) {
    p = std::clamp(p, 1e-12, 1.0 - 1e-12);
    return std::log(p / (1.0 - p));
}

// (-1, 1) squashing for persistence parameters.
double sym_squash(double u) { return 2.0 * sigmoid(u) - 1.0; }
double sym_unsquash(double b) { return logit((std::clamp(b, -1.0 + 1e-12, 1.0 - 1e-12) + 1.0) / 2.0); }

double neg_exp(double u) { return -std::exp(u); }
double neg_log(double x) { return std::log(-x); }

// Maps between unconstrained optimizer coordinates and the reported
// parameter vector.
struct Transform {
    int dim = 0;
    std::vector<std::string> names;
    Eigen::VectorXd (*to_theta)(const Eigen::VectorXd&) = nullptr;
    Eigen::VectorXd (*to_u)(const Eigen::VectorXd&) = nullptr;
};

Eigen::VectorXd gas1f_to_theta(const Eigen::VectorXd& u) {
    Eigen::VectorXd t(4);
    t << sym_squash(u[0]), u[1], neg_exp(u[2]), sigmoid(u[3]);
    return t;
}
Eigen::VectorXd gas1f_to_u(const Eigen::VectorXd& t) {
    Eigen::VectorXd u(4);
    u << sym_unsquash(t[0]), t[1], neg_log(t[2]), logit(t[3]);
    return u;
}

Eigen::VectorXd garchfz_to_theta(const Eigen::VectorXd& u) {
    Eigen::VectorXd t(4);
    t << sigmoid(u[0]), sigmoid(u[1]), neg_exp(u[2]), sigmoid(u[3]);
    return t;
}
Eigen::VectorXd garchfz_to_u(const Eigen::VectorXd& t) {
    Eigen::VectorXd u(4);
    u << logit(t[0]), logit(t[1]), neg_log(t[2]), logit(t[3]);
    return u;
}

Eigen::VectorXd hybrid_to_theta(const Eigen::VectorXd& u) {
    Eigen::VectorXd t(5);
    t << sym_squash(u[0]), u[1], u[2], neg_exp(u[3]), sigmoid(u[4]);
    return t;
}
Eigen::VectorXd hybrid_to_u(const Eigen::VectorXd& t) {
    Eigen::VectorXd u(5);
    u << sym_unsquash(t[0]), t[1], t[2], neg_log(t[3]), logit(t[4]);
    return u;
}

Eigen::VectorXd gas2f_to_theta(const Eigen::VectorXd& u) {
    Eigen::VectorXd t(8);
    t << u[0], u[1], sym_squash(u[2]), sym_squash(u[3]), u[4], u[5], u[6], u[7];
    return t;
}
Eigen::VectorXd gas2f_to_u(const Eigen::VectorXd& t) {
    Eigen::VectorXd u(8);
    u << t[0], t[1], sym_unsquash(t[2]), sym_unsquash(t[3]), t[4], t[5], t[6], t[7];
    return u;
}

Eigen::VectorXd caviar_to_theta(const Eigen::VectorXd& u) {
    Eigen::VectorXd t(3);
    t << sigmoid(u[0]), sigmoid(u[1]), neg_exp(u[2]);
    return t;
}
Eigen::VectorXd caviar_to_u(const Eigen::VectorXd& t) {
    Eigen::VectorXd u(3);
    u << logit(t[0]), logit(t[1]), neg_log(t[2]);
    return u;
}

Eigen::VectorXd qmle_to_theta(const Eigen::VectorXd& u) {
    Eigen::VectorXd t(3);
    t << std::exp(u[0]), sigmoid(u[1]), sigmoid(u[2]);
    return t;
}
Eigen::VectorXd qmle_to_u(const Eigen::VectorXd& t) {
    Eigen::VectorXd u(3);
    u << std::log(std::max(t[0], 1e-12)), logit(t[1]), logit(t[2]);
    return u;
}

Transform make_transform(FzModel model) {
    switch (model) {
        case FzModel::Gas1f:
            return {4, {"beta", "gamma", "b", "c"}, gas1f_to_theta, gas1f_to_u};
        case FzModel::Gas2f:
            return {8, {"w_v", "w_e", "b_v", "b_e", "a_vv", "a_ve", "a_ev", "a_ee"},
                    gas2f_to_theta, gas2f_to_u};
        case FzModel::GarchFz:
            return {4, {"beta", "gamma", "b", "c"}, garchfz_to_theta, garchfz_to_u};
        case FzModel::Hybrid:
            return {5, {"beta", "gamma", "delta", "b", "c"}, hybrid_to_theta,
                    hybrid_to_u};
    }
    throw ValidationError("unknown model selector");
}

// ====================== theta -> filter parameters ======================

bool level_pair_ok(double b, double c) {
    return std::isfinite(b) && b < -1e-12 && b > -1e9 && std::isfinite(c)
        && c > 1e-12 && c < 1.0 - 1e-12;
}

bool theta_quick_ok(FzModel model, const Eigen::VectorXd& t) {
    for (int i = 0; i < t.size(); ++i)
        if (!std::isfinite(t[i])) return false;
    switch (model) {
        case FzModel::Gas1f:
            return std::abs(t[0]) < 1.0 && level_pair_ok(t[2], t[3]);
        case FzModel::Gas2f:
            return std::abs(t[2]) < 1.0 && std::abs(t[3]) < 1.0;
        case FzModel::GarchFz:
            return t[0] > 0.0 && t[0] < 1.0 && t[1] > 0.0 && t[1] < 1.0
                && level_pair_ok(t[2], t[3]);
        case FzModel::Hybrid:
            return std::abs(t[0]) < 1.0 && level_pair_ok(t[3], t[4]);
    }
    return false;
}

Gas1fParams gas1f_from_theta(const Eigen::VectorXd& t) {
    return {t[0], t[1], t[2] * t[3], t[2]};
}
Gas2fParams gas2f_from_theta(const Eigen::VectorXd& t) {
    return {t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7]};
}
GarchFzParams garchfz_from_theta(const Eigen::VectorXd& t, double omega) {
    return {omega, t[0], t[1], t[2] * t[3], t[2]};
}
HybridParams hybrid_from_theta(const Eigen::VectorXd& t) {
    return {t[0], t[1], t[2], t[3] * t[4], t[3]};
}

// ====================== objective ======================

// Mean loss evaluator with reusable scratch. Each optimizer task owns
// its own copy so parallel multistarts never share state.
struct FzProblem {
    std::span<const double> y;
    FzModel model;
    double alpha = 0.05;
    double omega = 1.0;
    FzFilterState state;
    double penalty = 1e10;
    bool tick_only = false; // caviar: tick loss on the quantile alone
    RiskPath scratch;

    long fill(const Eigen::VectorXd& t, SmoothingTau tau) {
        switch (model) {
            case FzModel::Gas1f:
                return detail::gas1f_fill(y, gas1f_from_theta(t), AlphaLevel(alpha),
                                          tau, scratch);
            case FzModel::Gas2f:
                return detail::gas2f_fill(y, gas2f_from_theta(t), AlphaLevel(alpha),
                                          state.v1, state.e1, tau, scratch);
            case FzModel::GarchFz:
                return detail::garchfz_fill(y, garchfz_from_theta(t, omega),
                                            state.sigma2_init, scratch);
            case FzModel::Hybrid:
                return detail::hybrid_fill(y, hybrid_from_theta(t), AlphaLevel(alpha),
                                           tau, scratch);
        }
        return 0;
    }

    double operator()(const Eigen::VectorXd& t, SmoothingTau tau) {
        if (!theta_quick_ok(model, t)) return penalty;
        if (fill(t, tau) >= 0) return penalty;
        double a = alpha;
        size_t n = y.size();
        CompensatedSum acc;
        if (tick_only) {
            for (size_t i = 0; i < n; ++i) {
                double v = scratch.v[i];
                double w = tau.weight(y[i], v);
                acc.add((w - a) * (v - y[i]));
            }
        } else {
            for (size_t i = 0; i < n; ++i) {
                double v = scratch.v[i];
                double e = scratch.e[i];
                double w = tau.weight(y[i], v);
                acc.add(-w * (v - y[i]) / (a * e) + v / e + std::log(-e) - 1.0);
            }
        }
        double mean = acc.value() / static_cast<double>(n);
        return std::isfinite(mean) ? mean : penalty;
    }
};

// ====================== multistart driver ======================

struct MultistartOutcome {
    Eigen::VectorXd u;
    double f = std::numeric_limits<double>::infinity();
    bool converged = false;
    int best_start = -1;
    std::vector<StageRecord> trace;
};

// A factory hands each parallel task a private objective (own scratch).
using StageObjective = std::function<double(const Eigen::VectorXd&, SmoothingTau)>;
using ObjectiveFactory = std::function<StageObjective()>;

MultistartOutcome run_multistart(const ObjectiveFactory& make_objective,
                                 const std::vector<Eigen::VectorXd>& starts,
                                 const EstimationConfig& cfg) {
    struct StartOutcome {
        Eigen::VectorXd u;
        double f = std::numeric_limits<double>::infinity();
        bool converged = false;
        std::vector<StageRecord> trace;
    };
    std::vector<StartOutcome> outcomes(starts.size());

    parallel_for(starts.size(), cfg.threads, [&](size_t k) {
        StageObjective obj = make_objective();
        StartOutcome& out = outcomes[k];
        out.u = starts[k];
        int dim = static_cast<int>(out.u.size());
        OptimOptions opts{cfg.tol_f, cfg.tol_x,
                          cfg.max_iter > 0 ? cfg.max_iter : 200 * dim};
        for (size_t si = 0; si < cfg.stages.size(); ++si) {
            SmoothingTau tau = cfg.stages[si];
            Objective stage_obj = [&](const Eigen::VectorXd& uu) { return obj(uu, tau); };
            StageRecord rec;
            rec.start = static_cast<int>(k);
            rec.stage = static_cast<int>(si);
            rec.exact = tau.exact();
            rec.tau = tau.exact() ? 0.0 : tau.tau();
            rec.f_initial = stage_obj(out.u);
            OptimResult r = (cfg.optimizer == OptimizerKind::GradientSmoothed
                             && !tau.exact())
                                ? bfgs_numeric(stage_obj, out.u, opts)
                                : nelder_mead(stage_obj, out.u, opts);
            if (tau.exact()) {
                // A collapsed simplex can satisfy the spread tolerances away
                // from a minimum; restarting with a fresh simplex at the
                // candidate until it stops improving fixes that cheaply.
                for (int restart = 0; restart < 3; ++restart) {
                    OptimResult rr = nelder_mead(stage_obj, r.x, opts);
                    rr.iterations += r.iterations;
                    rr.evaluations += r.evaluations;
                    bool improved = rr.f < r.f - 10.0 * cfg.tol_f;
                    r = rr;
                    if (!improved) break;
                }
            }
            out.u = r.x;
            rec.f_final = r.f;
            rec.iterations = r.iterations;
            rec.converged = r.converged;
            out.trace.push_back(rec);
            out.f = r.f;
            out.converged = r.converged;
        }
    });

    MultistartOutcome best;
    for (size_t k = 0; k < outcomes.size(); ++k) {
        best.trace.insert(best.trace.end(), outcomes[k].trace.begin(),
                          outcomes[k].trace.end());
        if (outcomes[k].f < best.f) {
            best.f = outcomes[k].f;
            best.u = outcomes[k].u;
            best.converged = outcomes[k].converged;
            best.best_start = static_cast<int>(k);
        }
    }
    return best;
}

std::vector<Eigen::VectorXd> perturbed_starts(const Eigen::VectorXd& u0, int count,
                                              std::uint64_t seed) {
    std::vector<Eigen::VectorXd> starts{u0};
    Rng rng(seed, 7701);
    for (int k = 1; k < count; ++k) {
        Eigen::VectorXd u = u0;
        for (int i = 0; i < u.size(); ++i) u[i] += 0.3 * rng.normal();
        starts.push_back(u);
    }
    return starts;
}

double sample_variance(std::span<const double> y) {
    double mean = compensated_mean(y);
    CompensatedSum acc;
    for (double x : y) acc.add((x - mean) * (x - mean));
    return acc.value() / static_cast<double>(y.size());
}

double sample_stdev(std::span<const double> y) { return std::sqrt(sample_variance(y)); }

void check_estimation_input(std::span<const double> y, const char* who) {
    if (y.size() < 250)
        throw ValidationError(strprintf("%s: need at least 250 observations, got %zu",
                                        who, y.size()));
    for (size_t t = 0; t < y.size(); ++t)
        if (!std::isfinite(y[t]))
            throw ValidationError(strprintf("%s: non-finite return at t=%zu", who, t));
}

} // namespace

// ====================== filter state and paths ======================

FzFilterState fz_filter_state(std::span<const double> y, FzModel model,
                              AlphaLevel alpha) {
    if (y.empty()) throw ValidationError("fz_filter_state: empty sample");
    FzFilterState state;
    state.sigma2_init = sample_variance(y);
    if (model == FzModel::Gas2f) {
        TailPair pair = edf_tail_pair(y, alpha);
        state.v1 = pair.a;
        state.e1 = pair.b;
    }
    return state;
}

RiskPath fz_path(std::span<const double> y, FzModel model,
                 const Eigen::VectorXd& theta, AlphaLevel alpha, double fixed_omega,
                 const FzFilterState& state, SmoothingTau tau) {
    int want = make_transform(model).dim;
    if (theta.size() != want)
        throw ValidationError(strprintf("fz_path: expected %d parameters, got %ld",
                                        want, static_cast<long>(theta.size())));
    switch (model) {
        case FzModel::Gas1f:
            return gas1f_filter(y, gas1f_from_theta(theta), alpha, tau);
        case FzModel::Gas2f:
            return gas2f_filter(y, gas2f_from_theta(theta), alpha, state.v1, state.e1,
                                tau);
        case FzModel::GarchFz:
            return garchfz_filter(y, garchfz_from_theta(theta, fixed_omega),
                                  state.sigma2_init);
        case FzModel::Hybrid:
            return hybrid_filter(y, hybrid_from_theta(theta), alpha, tau);
    }
    throw ValidationError("unknown model selector");
}

std::vector<double> caviar_var_path(std::span<const double> y,
                                    const Eigen::VectorXd& theta, double fixed_omega,
                                    const FzFilterState& state, SmoothingTau tau) {
    (void)tau; // the variance recursion has no indicator terms
    if (theta.size() != 3)
        throw ValidationError("caviar_var_path: expected [beta, gamma, a]");
    GarchParams p{fixed_omega, theta[0], theta[1]};
    validate(p);
    if (!(theta[2] < 0.0) || !std::isfinite(theta[2]))
        throw ValidationError(strprintf("caviar level a=%g must be negative", theta[2]));
    std::vector<double> sigma2 = garch_variance_path(y, p, state.sigma2_init);
    std::vector<double> v(sigma2.size());
    for (size_t t = 0; t < sigma2.size(); ++t) v[t] = theta[2] * std::sqrt(sigma2[t]);
    return v;
}

// ====================== data-driven starts ======================

namespace {

// Moment-matched initial parameters: persistence prior plus the sample
// tail pair, rescaled to the recursion's own units where needed.
Eigen::VectorXd data_driven_start(std::span<const double> y, FzModel model,
                                  AlphaLevel alpha, double fixed_omega,
                                  std::vector<std::string>& warnings) {
    TailPair pair = edf_tail_pair(y, alpha);
    double c0 = std::clamp(pair.a / pair.b, 0.05, 0.95);
    switch (model) {
        case FzModel::Gas1f: {
            Eigen::VectorXd t(4);
            t << 0.95, -0.005, pair.b, c0;
            return t;
        }
        case FzModel::Hybrid: {
            Eigen::VectorXd t(5);
            t << 0.95, -0.005, 0.01, pair.b, c0;
            return t;
        }
        case FzModel::Gas2f: {
            Eigen::VectorXd t(8);
            t << 0.05 * pair.a, 0.05 * pair.b, 0.95, 0.95, 0.001, 0.007, 0.001, 0.010;
            return t;
        }
        case FzModel::GarchFz: {
            double beta0 = 0.9, gamma0 = 0.05;
            double b0;
            try {
                EstimationResult q = qmle_garch(y);
                beta0 = std::clamp(q.theta[1], 0.05, 0.98);
                gamma0 = std::clamp(q.theta[2], 0.005, 0.5);
                GarchParams gp{q.theta[0], q.theta[1], q.theta[2]};
                std::vector<double> demeaned(y.begin(), y.end());
                for (double& x : demeaned) x -= q.mu;
                std::vector<double> sigma2 =
                    garch_variance_path(demeaned, gp, q.state.sigma2_init);
                std::vector<double> resid(demeaned.size());
                for (size_t t = 0; t < resid.size(); ++t)
                    resid[t] = demeaned[t] / std::sqrt(sigma2[t]);
                TailPair rp = edf_tail_pair(resid, alpha);
                double scale = std::sqrt(q.theta[0] / fixed_omega);
                b0 = rp.b * scale;
                c0 = std::clamp(rp.a / rp.b, 0.05, 0.95);
            } catch (const Error& err) {
                warnings.push_back(strprintf("quasi-likelihood start failed (%s); "
                                             "falling back to unconditional moments",
                                             err.what()));
                double kappa_inf = std::sqrt(fixed_omega / (1.0 - beta0 - gamma0));
                b0 = pair.b / kappa_inf;
            }
            Eigen::VectorXd t(4);
            t << beta0, gamma0, b0, c0;
            return t;
        }
    }
    throw ValidationError("unknown model selector");
}

} // namespace

// ====================== covariance ======================

namespace {

// Clamp eigenvalues from below so the matrix is usable as a PSD
// covariance even when near-singular.
Eigen::MatrixXd floor_psd(const Eigen::MatrixXd& m, double floor) {
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(floor);
    Eigen::MatrixXd out =
        eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose()); // reconstruction rounds asymmetrically
}

// Central finite-difference gradients of the filtered (v, e) paths with
// respect to theta, columns indexed by parameter.
struct PathGradients {
    Eigen::MatrixXd dv; // T x p
    Eigen::MatrixXd de;
};

PathGradients path_gradients(std::span<const double> y, FzModel model,
                             const Eigen::VectorXd& theta, AlphaLevel alpha,
                             double fixed_omega, const FzFilterState& state) {
    const int p = static_cast<int>(theta.size());
    const auto n = static_cast<Eigen::Index>(y.size());
    PathGradients g{Eigen::MatrixXd(n, p), Eigen::MatrixXd(n, p)};
    for (int i = 0; i < p; ++i) {
        double h = 1e-5 * std::max(1.0, std::abs(theta[i]));
        RiskPath up, down;
        for (int attempt = 0;; ++attempt) {
            try {
                Eigen::VectorXd tp = theta, tm = theta;
                tp[i] += h;
                tm[i] -= h;
                up = fz_path(y, model, tp, alpha, fixed_omega, state);
                down = fz_path(y, model, tm, alpha, fixed_omega, state);
                break;
            } catch (const Error&) {
                if (attempt >= 3) throw;
                h *= 0.1; // step crossed a validity boundary; shrink
            }
        }
        for (Eigen::Index t = 0; t < n; ++t) {
            g.dv(t, i) = (up.v[t] - down.v[t]) / (2.0 * h);
            g.de(t, i) = (up.e[t] - down.e[t]) / (2.0 * h);
        }
    }
    return g;
}

} // namespace

FzVcov fz_vcov(std::span<const double> y, FzModel model, const Eigen::VectorXd& theta,
               AlphaLevel alpha, double fixed_omega, const FzFilterState& state,
               double bandwidth) {
    check_estimation_input(y, "fz_vcov");
    const double a = alpha.value();
    const size_t n = y.size();
    const int p = static_cast<int>(theta.size());
    const double c_t =
        bandwidth > 0.0 ? bandwidth : std::pow(static_cast<double>(n), -1.0 / 3.0);

    RiskPath path = fz_path(y, model, theta, alpha, fixed_omega, state);
    PathGradients grad = path_gradients(y, model, theta, alpha, fixed_omega, state);

    Eigen::MatrixXd a_hat = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd d_hat = Eigen::MatrixXd::Zero(p, p);
    for (size_t t = 0; t < n; ++t) {
        double v = path.v[t];
        double e = path.e[t];
        double hit = y[t] <= v ? 1.0 : 0.0;
        double d_v = -(hit - a) / (a * e);
        double d_e = hit * (v - y[t]) / (a * e * e) - v / (e * e) + 1.0 / e;
        Eigen::VectorXd score =
            d_v * grad.dv.row(t).transpose() + d_e * grad.de.row(t).transpose();
        a_hat.noalias() += score * score.transpose();

        double kern = std::abs(y[t] - v) < c_t ? 1.0 / (2.0 * c_t) : 0.0;
        if (kern > 0.0)
            d_hat.noalias() += kern / (-a * e)
                             * (grad.dv.row(t).transpose() * grad.dv.row(t));
        d_hat.noalias() += grad.de.row(t).transpose() * grad.de.row(t) / (e * e);
    }
    a_hat /= static_cast<double>(n);
    d_hat /= static_cast<double>(n);
    a_hat = 0.5 * (a_hat + a_hat.transpose()).eval();
    d_hat = 0.5 * (d_hat + d_hat.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(d_hat);
    double lo = eig.eigenvalues().minCoeff();
    double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12)
        throw NumericError(strprintf("curvature matrix is near-singular "
                                     "(condition number %.3g)",
                                     lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()));
    Eigen::MatrixXd d_inv = eig.eigenvectors()
                          * eig.eigenvalues().cwiseInverse().asDiagonal()
                          * eig.eigenvectors().transpose();

    FzVcov out;
    out.a_hat = a_hat;
    out.d_hat = d_hat;
    out.vcov = floor_psd(d_inv * a_hat * d_inv, 1e-12);
    return out;
}

// ====================== loss-minimization fits ======================

EstimationResult fz_estimate(std::span<const double> y, FzModel model,
                             AlphaLevel alpha, const EstimationConfig& cfg,
                             double fixed_omega) {
    cfg.validate();
    check_estimation_input(y, "fz_estimate");
    if (model == FzModel::GarchFz && (!(fixed_omega > 0.0) || !std::isfinite(fixed_omega)))
        throw ValidationError(strprintf("fixed omega=%g must be positive", fixed_omega));

    EstimationResult res;
    res.method = "fz-" + to_string(model);
    res.alpha = alpha.value();
    res.omega = fixed_omega;
    res.n_obs = y.size();
    res.state = fz_filter_state(y, model, alpha);
    if (sample_stdev(y) < 0.25)
        res.warnings.push_back("sample standard deviation below 0.25; inputs look "
                               "like decimal returns, percent units expected");

    Transform tr = make_transform(model);
    res.param_names = tr.names;
    Eigen::VectorXd theta0 = data_driven_start(y, model, alpha, fixed_omega, res.warnings);
    std::vector<Eigen::VectorXd> starts =
        perturbed_starts(tr.to_u(theta0), cfg.multistarts, cfg.seed);

    FzProblem proto{y, model, alpha.value(), fixed_omega, res.state, cfg.penalty};
    auto factory = [&proto, &tr]() -> StageObjective {
        return [problem = proto,
                to_theta = tr.to_theta](const Eigen::VectorXd& u,
                                        SmoothingTau tau) mutable {
            return problem(to_theta(u), tau);
        };
    };
    MultistartOutcome best = run_multistart(factory, starts, cfg);
    if (!(best.f < cfg.penalty))
        throw EstimationError(strprintf("%s: every start ended in the penalty region",
                                        res.method.c_str()));

    res.theta = tr.to_theta(best.u);
    res.avg_loss = best.f;
    res.converged = best.converged;
    res.best_start = best.best_start;
    res.trace = std::move(best.trace);

    try {
        FzVcov cov = fz_vcov(y, model, res.theta, alpha, fixed_omega, res.state);
        res.vcov = cov.vcov;
    } catch (const Error& err) {
        res.warnings.push_back(strprintf("covariance unavailable: %s", err.what()));
        res.vcov = Eigen::MatrixXd::Constant(tr.dim, tr.dim,
                                             std::numeric_limits<double>::quiet_NaN());
    }
    res.std_errors.resize(tr.dim);
    for (int i = 0; i < tr.dim; ++i)
        res.std_errors[i] = std::sqrt(res.vcov(i, i) / static_cast<double>(res.n_obs));
    return res;
}

// ====================== quasi-likelihood comparator ======================

EstimationResult qmle_garch(std::span<const double> y, const EstimationConfig& cfg) {
    cfg.validate();
    check_estimation_input(y, "qmle_garch");

    EstimationResult res;
    res.method = "garch-qmle";
    res.n_obs = y.size();
    res.mu = compensated_mean(y);
    std::vector<double> d(y.begin(), y.end());
    for (double& x : d) x -= res.mu;
    res.state.sigma2_init = sample_variance(y);

    const double s2 = res.state.sigma2_init;
    const size_t n = d.size();
    auto factory = [&]() -> StageObjective {
        return [&d, s2, n, penalty = cfg.penalty,
                sigma2 = std::vector<double>()](const Eigen::VectorXd& u,
                                                SmoothingTau) mutable {
            Eigen::VectorXd t = qmle_to_theta(u);
            if (!(t[0] > 1e-12) || !(t[0] < 1e6) || !(t[1] < 1.0) || !(t[2] < 1.0))
                return penalty;
            GarchParams p{t[0], t[1], t[2]};
            if (detail::garch_fill(d, p, s2, sigma2) >= 0) return penalty;
            CompensatedSum acc;
            for (size_t i = 0; i < n; ++i)
                acc.add(std::log(sigma2[i]) + d[i] * d[i] / sigma2[i]);
            double nll =
                0.5 * (acc.value() / static_cast<double>(n) + std::log(2.0 * M_PI));
            return std::isfinite(nll) ? nll : penalty;
        };
    };

    // The likelihood is smooth, so a fixed fan of moment-scaled starts
    // replaces the seeded perturbations.
    std::vector<Eigen::VectorXd> starts;
    for (auto [w0, b0, g0] : {std::tuple{0.05 * s2, 0.90, 0.05},
                              std::tuple{0.10 * s2, 0.80, 0.10},
                              std::tuple{0.40 * s2, 0.50, 0.30}}) {
        Eigen::VectorXd t(3);
        t << std::max(w0, 1e-8), b0, g0;
        starts.push_back(qmle_to_u(t));
    }
    EstimationConfig stage_cfg = cfg;
    stage_cfg.stages = {SmoothingTau::Exact()}; // no indicator to smooth
    MultistartOutcome best = run_multistart(factory, starts, stage_cfg);
    if (!(best.f < cfg.penalty))
        throw EstimationError("garch-qmle: every start ended in the penalty region");

    res.param_names = {"omega", "beta", "gamma"};
    res.theta = qmle_to_theta(best.u);
    res.avg_loss = best.f;
    res.converged = best.converged;
    res.best_start = best.best_start;
    res.trace = std::move(best.trace);
    if (res.theta[1] + res.theta[2] >= 1.0)
        res.warnings.push_back(strprintf("beta + gamma = %.4f >= 1: fitted variance "
                                         "recursion is nonstationary",
                                         res.theta[1] + res.theta[2]));

    // Sandwich covariance from numeric per-observation scores and a
    // numeric Hessian of the mean objective.
    auto per_obs_nll = [&](const Eigen::VectorXd& t, std::vector<double>& out) {
        GarchParams p{t[0], t[1], t[2]};
        std::vector<double> sigma2;
        if (detail::garch_fill(d, p, s2, sigma2) >= 0)
            throw NumericError("variance path invalid near the optimum");
        out.resize(n);
        for (size_t i = 0; i < n; ++i)
            out[i] = 0.5 * (std::log(2.0 * M_PI) + std::log(sigma2[i])
                            + d[i] * d[i] / sigma2[i]);
    };
    try {
        const Eigen::VectorXd& t = res.theta;
        Eigen::MatrixXd scores(n, 3);
        std::vector<double> lp, lm;
        for (int i = 0; i < 3; ++i) {
            double h = 1e-5 * std::max(1.0, std::abs(t[i]));
            Eigen::VectorXd tp = t, tm = t;
            tp[i] += h;
            tm[i] -= h;
            per_obs_nll(tp, lp);
            per_obs_nll(tm, lm);
            for (size_t k = 0; k < n; ++k)
                scores(static_cast<Eigen::Index>(k), i) = (lp[k] - lm[k]) / (2.0 * h);
        }
        auto mean_nll = [&](const Eigen::VectorXd& tt) {
            per_obs_nll(tt, lp);
            CompensatedSum acc;
            for (double x : lp) acc.add(x);
            return acc.value() / static_cast<double>(n);
        };
        Eigen::MatrixXd hess(3, 3);
        double f0 = mean_nll(t);
        Eigen::Vector3d h;
        for (int i = 0; i < 3; ++i) h[i] = 1e-3 * std::max(0.01, std::abs(t[i]));
        for (int i = 0; i < 3; ++i) {
            Eigen::VectorXd tp = t, tm = t;
            tp[i] += h[i];
            tm[i] -= h[i];
            hess(i, i) = (mean_nll(tp) - 2.0 * f0 + mean_nll(tm)) / (h[i] * h[i]);
        }
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) {
                Eigen::VectorXd tpp = t, tpm = t, tmp = t, tmm = t;
                tpp[i] += h[i]; tpp[j] += h[j];
                tpm[i] += h[i]; tpm[j] -= h[j];
                tmp[i] -= h[i]; tmp[j] += h[j];
                tmm[i] -= h[i]; tmm[j] -= h[j];
                hess(i, j) = hess(j, i) = (mean_nll(tpp) - mean_nll(tpm)
                                           - mean_nll(tmp) + mean_nll(tmm))
                                        / (4.0 * h[i] * h[j]);
            }
        Eigen::MatrixXd b_mat = scores.transpose() * scores / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (hess + hess.transpose()));
        if (!(eig.eigenvalues().minCoeff() > 0.0))
            throw NumericError("likelihood Hessian is not positive definite");
        Eigen::MatrixXd h_inv = eig.eigenvectors()
                              * eig.eigenvalues().cwiseInverse().asDiagonal()
                              * eig.eigenvectors().transpose();
        res.vcov = floor_psd(h_inv * b_mat * h_inv, 1e-12);
    } catch (const Error& err) {
        res.warnings.push_back(strprintf("covariance unavailable: %s", err.what()));
        res.vcov = Eigen::MatrixXd::Constant(3, 3,
                                             std::numeric_limits<double>::quiet_NaN());
    }
    res.std_errors.resize(3);
    for (int i = 0; i < 3; ++i)
        res.std_errors[i] = std::sqrt(res.vcov(i, i) / static_cast<double>(n));
    return res;
}

// ====================== quantile-only comparator ======================

EstimationResult caviar_estimate(std::span<const double> y, AlphaLevel alpha,
                                 const EstimationConfig& cfg, double fixed_omega) {
    cfg.validate();
    check_estimation_input(y, "caviar_estimate");
    if (!(fixed_omega > 0.0) || !std::isfinite(fixed_omega))
        throw ValidationError(strprintf("fixed omega=%g must be positive", fixed_omega));

    EstimationResult res;
    res.method = "caviar";
    res.alpha = alpha.value();
    res.omega = fixed_omega;
    res.n_obs = y.size();
    res.state = fz_filter_state(y, FzModel::GarchFz, alpha);
    res.param_names = {"beta", "gamma", "a"};

    // Reuse the scaled-variance start and keep only the quantile level.
    Eigen::VectorXd t4 =
        data_driven_start(y, FzModel::GarchFz, alpha, fixed_omega, res.warnings);
    Eigen::VectorXd theta0(3);
    theta0 << t4[0], t4[1], t4[2] * t4[3]; // a = b * c
    std::vector<Eigen::VectorXd> starts =
        perturbed_starts(caviar_to_u(theta0), cfg.multistarts, cfg.seed);

    const double a_lvl = alpha.value();
    const double s2 = res.state.sigma2_init;
    auto factory = [&]() -> StageObjective {
        return [y, a_lvl, s2, omega = fixed_omega, penalty = cfg.penalty,
                sigma2 = std::vector<double>()](const Eigen::VectorXd& u,
                                                SmoothingTau tau) mutable {
            Eigen::VectorXd t = caviar_to_theta(u);
            if (!std::isfinite(t[2]) || !(t[2] < -1e-12) || t[2] < -1e9
                || !(t[0] < 1.0) || !(t[1] < 1.0))
                return penalty;
            GarchParams p{omega, t[0], t[1]};
            if (detail::garch_fill(y, p, s2, sigma2) >= 0) return penalty;
            CompensatedSum acc;
            for (size_t i = 0; i < y.size(); ++i) {
                double v = t[2] * std::sqrt(sigma2[i]);
                double w = tau.weight(y[i], v);
                acc.add((w - a_lvl) * (v - y[i]));
            }
            double mean = acc.value() / static_cast<double>(y.size());
            return std::isfinite(mean) ? mean : penalty;
        };
    };
    MultistartOutcome best = run_multistart(factory, starts, cfg);
    if (!(best.f < cfg.penalty))
        throw EstimationError("caviar: every start ended in the penalty region");

    res.theta = caviar_to_theta(best.u);
    res.avg_loss = best.f;
    res.converged = best.converged;
    res.best_start = best.best_start;
    res.trace = std::move(best.trace);

    // Sandwich covariance: scores (hit - alpha) * grad v, curvature from
    // a kernel density of y at the quantile.
    try {
        const size_t n = y.size();
        const double c_t = std::pow(static_cast<double>(n), -1.0 / 3.0);
        std::vector<double> v = caviar_var_path(y, res.theta, fixed_omega, res.state);
        Eigen::MatrixXd dv(n, 3);
        for (int i = 0; i < 3; ++i) {
            double h = 1e-5 * std::max(1.0, std::abs(res.theta[i]));
            Eigen::VectorXd tp = res.theta, tm = res.theta;
            tp[i] += h;
            tm[i] -= h;
            std::vector<double> vp = caviar_var_path(y, tp, fixed_omega, res.state);
            std::vector<double> vm = caviar_var_path(y, tm, fixed_omega, res.state);
            for (size_t k = 0; k < n; ++k)
                dv(static_cast<Eigen::Index>(k), i) = (vp[k] - vm[k]) / (2.0 * h);
        }
        Eigen::MatrixXd a_hat = Eigen::MatrixXd::Zero(3, 3);
        Eigen::MatrixXd d_hat = Eigen::MatrixXd::Zero(3, 3);
        for (size_t t = 0; t < n; ++t) {
            double hit = y[t] <= v[t] ? 1.0 : 0.0;
            Eigen::Vector3d row = dv.row(static_cast<Eigen::Index>(t)).transpose();
            a_hat.noalias() += (hit - a_lvl) * (hit - a_lvl) * row * row.transpose();
            if (std::abs(y[t] - v[t]) < c_t)
                d_hat.noalias() += row * row.transpose() / (2.0 * c_t);
        }
        a_hat /= static_cast<double>(n);
        d_hat /= static_cast<double>(n);
        a_hat = 0.5 * (a_hat + a_hat.transpose()).eval();
        d_hat = 0.5 * (d_hat + d_hat.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(d_hat);
        if (!(eig.eigenvalues().minCoeff() > 0.0))
            throw NumericError("quantile curvature matrix is singular");
        Eigen::MatrixXd d_inv = eig.eigenvectors()
                              * eig.eigenvalues().cwiseInverse().asDiagonal()
                              * eig.eigenvectors().transpose();
        res.vcov = floor_psd(d_inv * a_hat * d_inv, 1e-12);
    } catch (const Error& err) {
        res.warnings.push_back(strprintf("covariance unavailable: %s", err.what()));
        res.vcov = Eigen::MatrixXd::Constant(3, 3,
                                             std::numeric_limits<double>::quiet_NaN());
    }
    res.std_errors.resize(3);
    for (int i = 0; i < 3; ++i)
        res.std_errors[i] = std::sqrt(res.vcov(i, i) / static_cast<double>(y.size()));
    return res;
}

// ====================== innovation-distribution fit ======================

SkewtParams skewt_fit(std::span<const double> z) {
    if (z.size() < 50)
        throw ValidationError(strprintf("skewt_fit: need at least 50 residuals, got %zu",
                                        z.size()));
    for (size_t t = 0; t < z.size(); ++t)
        if (!std::isfinite(z[t]))
            throw ValidationError(strprintf("skewt_fit: non-finite residual at t=%zu", t));

    auto unpack = [](const Eigen::VectorXd& u) {
        return SkewtParams{2.01 + std::exp(std::min(u[0], 12.0)), sym_squash(u[1])};
    };
    auto objective = [&](const Eigen::VectorXd& u) {
        SkewtParams p = unpack(u);
        CompensatedSum acc;
        for (double x : z) {
            double pdf = skewt_pdf(x, p);
            if (!(pdf > 0.0)) return 1e10;
            acc.add(std::log(pdf));
        }
        double nll = -acc.value() / static_cast<double>(z.size());
        return std::isfinite(nll) ? nll : 1e10;
    };

    OptimResult best;
    best.f = std::numeric_limits<double>::infinity();
    for (auto [nu0, lam0] : {std::pair{6.0, -0.2}, std::pair{4.0, 0.1},
                             std::pair{12.0, 0.0}}) {
        Eigen::VectorXd u(2);
        u << std::log(nu0 - 2.01), sym_unsquash(lam0);
        OptimResult r = nelder_mead(objective, u);
        if (r.f < best.f) best = r;
    }
    if (!(best.f < 1e10))
        throw EstimationError("skewt_fit: likelihood not usable at any start");
    return unpack(best.x);
}

// ====================== path accuracy ======================

AccuracySummary fitted_accuracy(const RiskPath& fitted, const RiskPath& reference) {
    if (fitted.size() != reference.size())
        throw ValidationError(strprintf("fitted_accuracy: %zu vs %zu points",
                                        fitted.size(), reference.size()));
    if (fitted.size() == 0)
        throw ValidationError("fitted_accuracy: empty paths");
    CompensatedSum av, ae;
    for (size_t t = 0; t < fitted.size(); ++t) {
        av.add(std::abs(fitted.v[t] - reference.v[t]));
        ae.add(std::abs(fitted.e[t] - reference.e[t]));
    }
    double n = static_cast<double>(fitted.size());
    return {av.value() / n, ae.value() / n};
}

} // namespace fzrisk
