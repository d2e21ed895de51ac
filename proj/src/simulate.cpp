#include "fzrisk/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "fzrisk/errors.hpp"
#include "fzrisk/mathutil.hpp"
#include "fzrisk/parallel.hpp"
#include "fzrisk/rng.hpp"

namespace fzrisk {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

} // namespace

// ====================== data-generating process ======================

std::string to_string(Innovation innovation) {
    switch (innovation) {
    case Innovation::Normal: return "normal";
    case Innovation::Skewt: return "skewt";
    }
    throw ValidationError("unknown innovation law");
}

Innovation innovation_from_string(const std::string& name) {
    if (name == "normal") return Innovation::Normal;
    if (name == "skewt") return Innovation::Skewt;
    throw ValidationError(strprintf("unknown innovation law '%s'", name.c_str()));
}

void validate(const DgpConfig& cfg) {
    GarchParams p{cfg.omega, cfg.beta, cfg.gamma};
    validate(p);
    if (!is_stationary(p))
        throw ValidationError(strprintf(
            "DGP needs a stationary variance recursion, got beta + gamma = %g",
            cfg.beta + cfg.gamma));
    if (cfg.T < 250)
        throw ValidationError(strprintf("simulated length %zu below the minimum 250",
                                        cfg.T));
    if (cfg.innovation == Innovation::Skewt) validate(cfg.skewt);
}

TailPair dgp_tail_pair(const DgpConfig& cfg, AlphaLevel alpha) {
    return cfg.innovation == Innovation::Normal ? normal_tail_pair(alpha)
                                                : skewt_tail_pair(alpha, cfg.skewt);
}

SimulatedSeries simulate_dgp(const DgpConfig& cfg, AlphaLevel alpha,
                             std::uint64_t stream) {
    validate(cfg);
    const TailPair tail = dgp_tail_pair(cfg, alpha);
    Rng rng(cfg.seed, stream);

    SimulatedSeries out;
    out.y.values.resize(cfg.T);
    out.truth.v.resize(cfg.T);
    out.truth.e.resize(cfg.T);
    out.sigma.resize(cfg.T);

    double s2 = cfg.omega / (1.0 - cfg.beta - cfg.gamma);
    const std::size_t total = cfg.burn_in + cfg.T;
    for (std::size_t t = 0; t < total; ++t) {
        double sd = std::sqrt(s2);
        double eta = cfg.innovation == Innovation::Normal
                         ? rng.normal()
                         : skewt_quantile(rng.uniform(), cfg.skewt);
        double y = sd * eta;
        if (t >= cfg.burn_in) {
            std::size_t i = t - cfg.burn_in;
            out.y.values[i] = y;
            out.sigma[i] = sd;
            out.truth.v[i] = tail.a * sd;
            out.truth.e[i] = tail.b * sd;
        }
        s2 = cfg.omega + cfg.beta * s2 + cfg.gamma * y * y;
    }
    return out;
}

// ====================== Monte Carlo study ======================

std::string to_string(McEstimator estimator) {
    switch (estimator) {
    case McEstimator::Fz: return "fz";
    case McEstimator::Qmle: return "qmle";
    case McEstimator::Caviar: return "caviar";
    }
    throw ValidationError("unknown estimator");
}

McEstimator mc_estimator_from_string(const std::string& name) {
    if (name == "fz") return McEstimator::Fz;
    if (name == "qmle") return McEstimator::Qmle;
    if (name == "caviar") return McEstimator::Caviar;
    throw ValidationError(strprintf("unknown estimator '%s'", name.c_str()));
}

void McConfig::validate() const {
    if (replications < 1) throw ValidationError("replications must be >= 1");
    if (alphas.empty()) throw ValidationError("no coverage levels requested");
    for (double a : alphas) static_cast<void>(AlphaLevel(a)); // throws when invalid
    if (T_list.empty()) throw ValidationError("no sample lengths requested");
    for (std::size_t t : T_list)
        if (t < 250)
            throw ValidationError(strprintf("sample length %zu below the minimum 250", t));
    if (estimators.empty()) throw ValidationError("no estimators requested");
    if (threads < 0) throw ValidationError("threads must be >= 0");
    est.validate();
}

namespace {

struct FitOutcome {
    bool ok = false;
    Eigen::VectorXd theta;
    std::vector<double> se;
    double mae_v = kNan;
    double mae_e = kNan;
};

struct RepResult {
    std::vector<FitOutcome> fits; // alpha-major, then estimator
};

RiskPath truth_at(const TailPair& tail, const std::vector<double>& sigma) {
    RiskPath truth;
    truth.v.resize(sigma.size());
    truth.e.resize(sigma.size());
    for (std::size_t t = 0; t < sigma.size(); ++t) {
        truth.v[t] = tail.a * sigma[t];
        truth.e[t] = tail.b * sigma[t];
    }
    return truth;
}

double median_of(std::vector<double> xs) {
    if (xs.empty()) return kNan;
    std::sort(xs.begin(), xs.end());
    std::size_t mid = xs.size() / 2;
    return xs.size() % 2 == 1 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

// Dispersion ratio on parameters shared by name with a comparator cell.
Eigen::VectorXd shared_stdev_ratio(const McCell& cell, const McCell& other) {
    Eigen::VectorXd out = Eigen::VectorXd::Constant(
        static_cast<Eigen::Index>(cell.param_names.size()), kNan);
    for (std::size_t i = 0; i < cell.param_names.size(); ++i) {
        const std::string& name = cell.param_names[i];
        if (name != "beta" && name != "gamma") continue;
        for (std::size_t j = 0; j < other.param_names.size(); ++j) {
            if (other.param_names[j] != name) continue;
            double denom = other.stdev[static_cast<Eigen::Index>(j)];
            if (denom > 0.0)
                out[static_cast<Eigen::Index>(i)] =
                    cell.stdev[static_cast<Eigen::Index>(i)] / denom;
        }
    }
    return out;
}

} // namespace

McStudy run_mc_study(const McConfig& mc, const DgpConfig& dgp) {
    mc.validate();
    validate(dgp);

    const std::size_t n_alpha = mc.alphas.size();
    const std::size_t n_est = mc.estimators.size();
    const double z95 = norm_quantile(0.975);
    const InnovationDist qmle_dist = dgp.innovation == Innovation::Normal
                                         ? InnovationDist::Normal
                                         : InnovationDist::SkewT;
    const bool want_qmle_paths =
        std::find(mc.estimators.begin(), mc.estimators.end(), McEstimator::Qmle) !=
        mc.estimators.end();

    McStudy study;
    study.dgp = dgp;
    study.replications = mc.replications;

    for (std::size_t T : mc.T_list) {
        DgpConfig cfg = dgp;
        cfg.T = T;
        std::vector<TailPair> tails;
        tails.reserve(n_alpha);
        for (double a : mc.alphas) tails.push_back(dgp_tail_pair(cfg, AlphaLevel(a)));

        std::vector<RepResult> reps(mc.replications);
        parallel_for(mc.replications, mc.threads, [&](std::size_t r) {
            SimulatedSeries sim = simulate_dgp(cfg, AlphaLevel(mc.alphas[0]), r);
            RepResult& rep = reps[r];
            rep.fits.resize(n_alpha * n_est);

            // the variance fit and the residual tail shape are shared
            // across coverage levels, so fit them once per replication
            ArmaGarchModel qmle_base;
            bool qmle_base_ok = false;
            if (want_qmle_paths) {
                try {
                    qmle_base = armagarch_fit(sim.y.values, qmle_dist,
                                              AlphaLevel(mc.alphas[0]));
                    qmle_base_ok = true;
                } catch (const Error&) {
                }
            }

            for (std::size_t ai = 0; ai < n_alpha; ++ai) {
                AlphaLevel alpha(mc.alphas[ai]);
                RiskPath truth = truth_at(tails[ai], sim.sigma);
                for (std::size_t ei = 0; ei < n_est; ++ei) {
                    FitOutcome& fo = rep.fits[ai * n_est + ei];
                    try {
                        switch (mc.estimators[ei]) {
                        case McEstimator::Fz: {
                            EstimationResult res =
                                fz_estimate(sim.y.values, FzModel::GarchFz, alpha,
                                            mc.est, dgp.omega);
                            RiskPath path =
                                fz_path(sim.y.values, FzModel::GarchFz, res.theta,
                                        alpha, dgp.omega, res.state);
                            AccuracySummary acc = fitted_accuracy(path, truth);
                            fo = {true, res.theta, res.std_errors, acc.mae_v,
                                  acc.mae_e};
                            break;
                        }
                        case McEstimator::Qmle: {
                            EstimationResult res = qmle_garch(sim.y.values, mc.est);
                            if (!qmle_base_ok)
                                throw EstimationError(
                                    "innovation tail fit failed for the "
                                    "likelihood path");
                            ArmaGarchModel m = qmle_base;
                            m.tail = qmle_dist == InnovationDist::Normal
                                         ? normal_tail_pair(alpha)
                                         : skewt_tail_pair(alpha, qmle_base.skewt);
                            AccuracySummary acc = fitted_accuracy(
                                armagarch_apply(m, sim.y.values), truth);
                            fo = {true, res.theta, res.std_errors, acc.mae_v,
                                  acc.mae_e};
                            break;
                        }
                        case McEstimator::Caviar: {
                            EstimationResult res = caviar_estimate(
                                sim.y.values, alpha, mc.est, dgp.omega);
                            std::vector<double> v = caviar_var_path(
                                sim.y.values, res.theta, dgp.omega, res.state);
                            RiskPath path;
                            path.v = v;
                            path.e = std::move(v); // quantile-only model
                            AccuracySummary acc = fitted_accuracy(path, truth);
                            fo = {true, res.theta, res.std_errors, acc.mae_v, kNan};
                            break;
                        }
                        }
                    } catch (const Error&) {
                        fo.ok = false;
                    }
                }
            }
        });

        // aggregation in replication order
        for (std::size_t ai = 0; ai < n_alpha; ++ai) {
            for (std::size_t ei = 0; ei < n_est; ++ei) {
                McCell cell;
                cell.T = T;
                cell.alpha = mc.alphas[ai];
                cell.estimator = mc.estimators[ei];
                switch (cell.estimator) {
                case McEstimator::Fz:
                    cell.param_names = {"beta", "gamma", "b", "c"};
                    cell.truth = Eigen::Vector4d(dgp.beta, dgp.gamma, tails[ai].b,
                                                 tails[ai].a / tails[ai].b);
                    break;
                case McEstimator::Qmle:
                    cell.param_names = {"omega", "beta", "gamma"};
                    cell.truth = Eigen::Vector3d(dgp.omega, dgp.beta, dgp.gamma);
                    break;
                case McEstimator::Caviar:
                    cell.param_names = {"beta", "gamma", "a"};
                    cell.truth = Eigen::Vector3d(dgp.beta, dgp.gamma, tails[ai].a);
                    break;
                }
                const auto p = static_cast<Eigen::Index>(cell.param_names.size());

                std::vector<std::vector<double>> draws(cell.param_names.size());
                Eigen::VectorXd bias_sum = Eigen::VectorXd::Zero(p);
                Eigen::VectorXd covered = Eigen::VectorXd::Zero(p);
                double mae_v_sum = 0.0, mae_e_sum = 0.0;
                std::size_t n_ok = 0, n_mae_e = 0;
                for (std::size_t r = 0; r < mc.replications; ++r) {
                    const FitOutcome& fo = reps[r].fits[ai * n_est + ei];
                    if (!fo.ok) {
                        ++cell.failures;
                        continue;
                    }
                    ++n_ok;
                    for (Eigen::Index i = 0; i < p; ++i) {
                        double th = fo.theta[i];
                        draws[static_cast<std::size_t>(i)].push_back(th);
                        bias_sum[i] += th - cell.truth[i];
                        if (std::fabs(th - cell.truth[i]) <=
                            z95 * fo.se[static_cast<std::size_t>(i)])
                            covered[i] += 1.0;
                    }
                    mae_v_sum += fo.mae_v;
                    if (std::isfinite(fo.mae_e)) {
                        mae_e_sum += fo.mae_e;
                        ++n_mae_e;
                    }
                }

                cell.median = Eigen::VectorXd::Constant(p, kNan);
                cell.mean_bias = Eigen::VectorXd::Constant(p, kNan);
                cell.stdev = Eigen::VectorXd::Constant(p, kNan);
                cell.coverage = Eigen::VectorXd::Constant(p, kNan);
                if (n_ok > 0) {
                    const auto dn = static_cast<double>(n_ok);
                    for (Eigen::Index i = 0; i < p; ++i) {
                        const auto& xs = draws[static_cast<std::size_t>(i)];
                        cell.median[i] = median_of(xs);
                        cell.mean_bias[i] = bias_sum[i] / dn;
                        cell.coverage[i] = covered[i] / dn;
                        if (n_ok > 1) {
                            double mean = cell.mean_bias[i] + cell.truth[i];
                            double ss = 0.0;
                            for (double x : xs) ss += (x - mean) * (x - mean);
                            cell.stdev[i] = std::sqrt(ss / (dn - 1.0));
                        }
                    }
                    cell.mae_v = mae_v_sum / dn;
                    if (n_mae_e > 0)
                        cell.mae_e = mae_e_sum / static_cast<double>(n_mae_e);
                }
                cell.stdev_ratio_vs_qmle = Eigen::VectorXd::Constant(p, kNan);
                cell.stdev_ratio_vs_caviar = Eigen::VectorXd::Constant(p, kNan);
                cell.flagged = static_cast<double>(cell.failures) >
                               0.02 * static_cast<double>(mc.replications);
                study.failures += cell.failures;
                study.flagged = study.flagged || cell.flagged;
                study.cells.push_back(std::move(cell));
            }
        }
    }

    // cross-estimator comparisons within each (T, alpha) block
    for (std::size_t block = 0; block < study.cells.size(); block += n_est) {
        const McCell* qmle = nullptr;
        const McCell* caviar = nullptr;
        for (std::size_t ei = 0; ei < n_est; ++ei) {
            McCell& cell = study.cells[block + ei];
            if (cell.estimator == McEstimator::Qmle) qmle = &cell;
            if (cell.estimator == McEstimator::Caviar) caviar = &cell;
        }
        for (std::size_t ei = 0; ei < n_est; ++ei) {
            McCell& cell = study.cells[block + ei];
            if (qmle != nullptr) {
                if (cell.estimator == McEstimator::Qmle) {
                    if (std::isfinite(cell.mae_v)) cell.mae_ratio_v = 1.0;
                    if (std::isfinite(cell.mae_e)) cell.mae_ratio_e = 1.0;
                } else {
                    cell.stdev_ratio_vs_qmle = shared_stdev_ratio(cell, *qmle);
                    if (qmle->mae_v > 0.0) cell.mae_ratio_v = cell.mae_v / qmle->mae_v;
                    if (qmle->mae_e > 0.0) cell.mae_ratio_e = cell.mae_e / qmle->mae_e;
                }
            }
            if (caviar != nullptr && cell.estimator == McEstimator::Fz)
                cell.stdev_ratio_vs_caviar = shared_stdev_ratio(cell, *caviar);
        }
    }
    return study;
}

// ====================== emission ======================

namespace {

std::string csv_row(const McCell& cell, const std::string& statistic,
                    const std::vector<std::string>& values) {
    std::string row = strprintf("%s,%zu,%s,%s", format_roundtrip(cell.alpha).c_str(),
                                cell.T, to_string(cell.estimator).c_str(),
                                statistic.c_str());
    for (std::size_t i = 0; i < 4; ++i)
        row += "," + (i < values.size() ? values[i] : std::string());
    return row + "\n";
}

std::vector<std::string> formatted(const Eigen::VectorXd& xs) {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < xs.size(); ++i)
        out.push_back(format_roundtrip(xs[i]));
    return out;
}

} // namespace

std::string mc_to_csv(const McStudy& study) {
    std::string out = "alpha,T,estimator,statistic,c1,c2,c3,c4\n";
    for (const McCell& cell : study.cells) {
        out += csv_row(cell, "names", cell.param_names);
        out += csv_row(cell, "truth", formatted(cell.truth));
        out += csv_row(cell, "median", formatted(cell.median));
        out += csv_row(cell, "mean_bias", formatted(cell.mean_bias));
        out += csv_row(cell, "stdev", formatted(cell.stdev));
        out += csv_row(cell, "coverage", formatted(cell.coverage));
        out += csv_row(cell, "stdev_ratio_vs_qmle", formatted(cell.stdev_ratio_vs_qmle));
        out += csv_row(cell, "stdev_ratio_vs_caviar",
                       formatted(cell.stdev_ratio_vs_caviar));
        out += csv_row(cell, "mae",
                       {format_roundtrip(cell.mae_v), format_roundtrip(cell.mae_e)});
        out += csv_row(cell, "mae_ratio_vs_qmle",
                       {format_roundtrip(cell.mae_ratio_v),
                        format_roundtrip(cell.mae_ratio_e)});
        out += csv_row(cell, "failures", {strprintf("%zu", cell.failures)});
    }
    return out;
}

std::string mc_render_text(const McStudy& study) {
    std::string out = strprintf(
        "simulation study: omega=%g beta=%g gamma=%g, %s innovations\n",
        study.dgp.omega, study.dgp.beta, study.dgp.gamma,
        to_string(study.dgp.innovation).c_str());
    if (study.dgp.innovation == Innovation::Skewt)
        out += strprintf("  shape: nu=%g lambda=%g\n", study.dgp.skewt.nu,
                         study.dgp.skewt.lambda);
    out += strprintf("replications=%zu  failed fits=%zu%s\n", study.replications,
                     study.failures,
                     study.flagged ? "  [FLAGGED: failures exceed 2%]" : "");
    for (const McCell& cell : study.cells) {
        out += strprintf("\nT=%zu  alpha=%.3f  %s  (failures %zu%s)\n", cell.T,
                         cell.alpha, to_string(cell.estimator).c_str(), cell.failures,
                         cell.flagged ? ", FLAGGED" : "");
        out += strprintf("  %-10s", "");
        for (const std::string& name : cell.param_names)
            out += strprintf("  %10s", name.c_str());
        out += "\n";
        auto line = [&](const char* label, const Eigen::VectorXd& xs) {
            out += strprintf("  %-10s", label);
            for (Eigen::Index i = 0; i < xs.size(); ++i)
                out += strprintf("  %10.4f", xs[i]);
            out += "\n";
        };
        line("truth", cell.truth);
        line("median", cell.median);
        line("avg bias", cell.mean_bias);
        line("st dev", cell.stdev);
        line("coverage", cell.coverage);
        out += strprintf("  mae         v %.4f  e %.4f", cell.mae_v, cell.mae_e);
        out += strprintf("  (vs qmle: %.3f / %.3f)\n", cell.mae_ratio_v,
                         cell.mae_ratio_e);
    }
    return out;
}

} // namespace fzrisk
