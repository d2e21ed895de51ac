#include "fzrisk/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "json.hpp"

#include "fzrisk/errors.hpp"
#include "fzrisk/fz_loss.hpp"
#include "fzrisk/mathutil.hpp"

namespace fzrisk {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace

// ====================== standardized residuals ======================

StdResiduals std_residuals(std::span<const double> y, const RiskPath& path,
                           AlphaLevel alpha) {
    if (y.size() != path.size())
        throw ValidationError(strprintf("std_residuals: %zu returns for %zu forecasts",
                                        y.size(), path.size()));
    validate(path);
    const double a = alpha.value();
    StdResiduals out;
    out.lam_v.resize(y.size());
    out.lam_e.resize(y.size());
    for (size_t t = 0; t < y.size(); ++t) {
        double hit = y[t] <= path.v[t] ? 1.0 : 0.0;
        out.lam_v[t] = hit - a;
        out.lam_e[t] = hit * y[t] / (a * path.e[t]) - 1.0;
    }
    return out;
}

// ====================== calibration regressions ======================

GofResult dq_test(const StdResiduals& resid, const RiskPath& path, GofKind kind) {
    const std::vector<double>& r = kind == GofKind::Dq ? resid.lam_v : resid.lam_e;
    const std::vector<double>& level = kind == GofKind::Dq ? path.v : path.e;
    if (r.size() != level.size())
        throw ValidationError(strprintf("dq_test: %zu residuals for %zu forecasts",
                                        r.size(), level.size()));
    if (r.size() < 31)
        throw ValidationError(strprintf(
            "dq_test: needs at least 30 usable observations after lagging, got %zu",
            r.size() > 0 ? r.size() - 1 : 0));

    const auto m = static_cast<Eigen::Index>(r.size() - 1);
    Eigen::MatrixXd x(m, 3);
    Eigen::VectorXd dep(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        size_t t = static_cast<size_t>(i) + 1;
        x(i, 0) = 1.0;
        x(i, 1) = r[t - 1];
        x(i, 2) = level[t];
        dep(i) = r[t];
    }

    // Drop columns that are numerically dependent on earlier ones
    // (e.g. a constant forecast column duplicating the intercept).
    std::vector<int> keep;
    Eigen::MatrixXd q(m, 3);
    for (int j = 0; j < 3; ++j) {
        Eigen::VectorXd col = x.col(j);
        for (size_t i = 0; i < keep.size(); ++i)
            col -= q.col(static_cast<Eigen::Index>(i)).dot(x.col(j))
                 * q.col(static_cast<Eigen::Index>(i));
        double norm = col.norm();
        if (norm <= 1e-10 * std::max(1.0, x.col(j).norm()))
            continue;
        q.col(static_cast<Eigen::Index>(keep.size())) = col / norm;
        keep.push_back(j);
    }
    const int k = static_cast<int>(keep.size());

    Eigen::MatrixXd xk(m, k);
    for (int j = 0; j < k; ++j) xk.col(j) = x.col(keep[static_cast<size_t>(j)]);

    Eigen::MatrixXd xtx = xk.transpose() * xk;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    Eigen::VectorXd beta = ldlt.solve(xk.transpose() * dep);
    Eigen::VectorXd u = dep - xk * beta;

    GofResult out;
    out.df = k;
    out.dropped_collinear = k < 3;
    for (int j = 0; j < k; ++j) out.coefficients[keep[static_cast<size_t>(j)]] = beta[j];

    // A perfect fit has no sampling noise to test against: zero
    // coefficients are trivially accepted, nonzero ones are an
    // unambiguous rejection.
    if (u.cwiseAbs().maxCoeff() <= 1e-12) {
        if (beta.cwiseAbs().maxCoeff() <= 1e-12) {
            out.wald = 0.0;
            out.p_value = 1.0;
        } else {
            out.wald = kInf;
            out.p_value = 0.0;
        }
        return out;
    }

    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < m; ++i) {
        Eigen::VectorXd row = xk.row(i).transpose();
        meat.noalias() += u[i] * u[i] * row * row.transpose();
    }
    meat = 0.5 * (meat + meat.transpose()).eval();
    Eigen::MatrixXd xtx_inv = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    Eigen::MatrixXd vcov = xtx_inv * meat * xtx_inv;
    vcov = 0.5 * (vcov + vcov.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(vcov);
    double hi = eig.eigenvalues().maxCoeff();
    if (!(hi > 0.0))
        throw NumericError("dq_test: robust covariance has no positive variance");

    // Pseudo-inverse Wald: directions whose variance is estimated as
    // exactly zero (finite-sample artifact of a perfectly fitting cell)
    // carry no usable sampling noise, so they are excluded and the
    // chi-square df shrinks to the tested rank.
    double wald = 0.0;
    int rank = 0;
    for (int i = 0; i < k; ++i) {
        double lambda = eig.eigenvalues()[i];
        if (lambda <= 1e-12 * hi) continue;
        double proj = eig.eigenvectors().col(i).dot(beta);
        wald += proj * proj / lambda;
        ++rank;
    }
    out.wald = wald;
    out.df = rank;
    out.p_value = chi2_sf(out.wald, rank);
    return out;
}

// ====================== loss-difference comparison ======================

DmResult dm_test(std::span<const double> loss_a, std::span<const double> loss_b) {
    if (loss_a.size() != loss_b.size())
        throw ValidationError(strprintf("dm_test: loss series lengths differ (%zu vs %zu)",
                                        loss_a.size(), loss_b.size()));
    const size_t n = loss_a.size();
    if (n < 30)
        throw ValidationError(strprintf("dm_test: needs at least 30 periods, got %zu", n));
    for (size_t t = 0; t < n; ++t)
        if (!std::isfinite(loss_a[t]) || !std::isfinite(loss_b[t]))
            throw ValidationError(strprintf("dm_test: non-finite loss at t=%zu", t));

    std::vector<double> d(n);
    bool all_zero = true;
    for (size_t t = 0; t < n; ++t) {
        d[t] = loss_a[t] - loss_b[t];
        all_zero = all_zero && d[t] == 0.0;
    }
    DmResult out;
    if (all_zero) return out; // t = 0 exactly

    out.mean_diff = compensated_mean(d);
    const auto tn = static_cast<double>(n);
    const size_t lags = static_cast<size_t>(std::floor(std::cbrt(tn) + 1e-9));
    auto gamma = [&](size_t lag) {
        CompensatedSum acc;
        for (size_t t = lag; t < n; ++t)
            acc.add((d[t] - out.mean_diff) * (d[t - lag] - out.mean_diff));
        return acc.value() / tn;
    };
    double lrv = gamma(0);
    for (size_t l = 1; l <= lags; ++l)
        lrv += 2.0 * (1.0 - static_cast<double>(l) / static_cast<double>(lags + 1))
             * gamma(l);
    out.lrv = std::max(lrv, 0.0);
    if (out.lrv == 0.0) {
        out.degenerate = true;
        out.t_stat = out.mean_diff > 0.0 ? kInf : -kInf;
        return out;
    }
    out.t_stat = out.mean_diff / std::sqrt(out.lrv / tn);
    return out;
}

// ====================== model names ======================

std::string to_string(OosModel model) {
    switch (model) {
    case OosModel::Rw125: return "rw-125";
    case OosModel::Rw250: return "rw-250";
    case OosModel::Rw500: return "rw-500";
    case OosModel::GarchNormal: return "garch-n";
    case OosModel::GarchSkewt: return "garch-skt";
    case OosModel::GarchEdf: return "garch-edf";
    case OosModel::Fz2f: return "fz-2f";
    case OosModel::Fz1f: return "fz-1f";
    case OosModel::GarchFz: return "garch-fz";
    case OosModel::Hybrid: return "hybrid";
    }
    throw ValidationError("unknown comparison model");
}

OosModel oos_model_from_string(const std::string& name) {
    for (OosModel m : default_oos_models())
        if (to_string(m) == name) return m;
    throw ValidationError(strprintf("unknown comparison model '%s'", name.c_str()));
}

std::vector<OosModel> default_oos_models() {
    return {OosModel::Rw125,       OosModel::Rw250,    OosModel::Rw500,
            OosModel::GarchNormal, OosModel::GarchSkewt, OosModel::GarchEdf,
            OosModel::Fz2f,        OosModel::Fz1f,     OosModel::GarchFz,
            OosModel::Hybrid};
}

// ====================== out-of-sample harness ======================

namespace {

// Full-sample forecast path plus the first index it covers.
struct BuiltPath {
    RiskPath path;
    size_t start = 0;
};

BuiltPath build_model_path(OosModel model, std::span<const double> y, size_t split,
                           AlphaLevel alpha, const OosConfig& cfg) {
    std::span<const double> in_sample(y.data(), split);
    switch (model) {
    case OosModel::Rw125:
    case OosModel::Rw250:
    case OosModel::Rw500: {
        size_t window = model == OosModel::Rw125 ? 125 : model == OosModel::Rw250 ? 250 : 500;
        RollingForecast rf = rolling_forecast(y, window, alpha, cfg.rolling_mode);
        if (rf.start > split)
            throw ValidationError(strprintf(
                "rolling window %zu starts forecasting at t=%zu, after the split %zu",
                window, rf.start, split));
        return {std::move(rf.path), rf.start};
    }
    case OosModel::GarchNormal:
    case OosModel::GarchSkewt:
    case OosModel::GarchEdf: {
        InnovationDist dist = model == OosModel::GarchNormal ? InnovationDist::Normal
                            : model == OosModel::GarchSkewt  ? InnovationDist::SkewT
                                                             : InnovationDist::Edf;
        ArmaGarchModel fit = armagarch_fit(in_sample, dist, alpha);
        return {armagarch_apply(fit, y), 0};
    }
    case OosModel::Fz2f:
    case OosModel::Fz1f:
    case OosModel::GarchFz:
    case OosModel::Hybrid: {
        FzModel fm = model == OosModel::Fz2f      ? FzModel::Gas2f
                   : model == OosModel::Fz1f      ? FzModel::Gas1f
                   : model == OosModel::GarchFz   ? FzModel::GarchFz
                                                  : FzModel::Hybrid;
        double omega = fm == FzModel::GarchFz ? cfg.fixed_omega : 1.0;
        EstimationResult est = fz_estimate(in_sample, fm, alpha, cfg.est, omega);
        return {fz_path(y, fm, est.theta, alpha, omega, est.state), 0};
    }
    }
    throw ValidationError("unknown comparison model");
}

} // namespace

BacktestReport oos_harness(const ReturnSeries& y, size_t split,
                           std::span<const OosModel> models, AlphaLevel alpha,
                           const OosConfig& cfg) {
    validate(y);
    const size_t n = y.values.size();
    if (split == 0 || split >= n)
        throw ValidationError(strprintf("oos_harness: split %zu outside series of %zu",
                                        split, n));
    if (n - split < 31)
        throw ValidationError(strprintf(
            "oos_harness: %zu out-of-sample observations, need at least 31", n - split));
    if (models.empty())
        throw ValidationError("oos_harness: empty model set");

    const size_t n_oos = n - split;
    std::span<const double> oos_y(y.values.data() + split, n_oos);

    BacktestReport report;
    report.alpha = alpha.value();
    report.split = split;
    report.n_oos = n_oos;
    report.models.resize(models.size());

    for (size_t i = 0; i < models.size(); ++i) {
        OosModelReport& mr = report.models[i];
        mr.name = to_string(models[i]);
        try {
            BuiltPath built = build_model_path(models[i], y.values, split, alpha, cfg);
            RiskPath oos;
            oos.v.assign(built.path.v.begin() + static_cast<long>(split - built.start),
                         built.path.v.end());
            oos.e.assign(built.path.e.begin() + static_cast<long>(split - built.start),
                         built.path.e.end());
            mr.avg_loss = average_loss(oos_y, oos, alpha);
            mr.losses.resize(n_oos);
            for (size_t t = 0; t < n_oos; ++t)
                mr.losses[t] = fz0_loss({oos_y[t], oos.v[t], oos.e[t]}, alpha);
            StdResiduals resid = std_residuals(oos_y, oos, alpha);
            mr.oos_path = std::move(oos);
            mr.ok = true;
            try {
                mr.dq = dq_test(resid, mr.oos_path, GofKind::Dq);
            } catch (const Error& err) {
                mr.dq.wald = kNan;
                mr.dq.p_value = kNan;
                mr.error = strprintf("dq: %s", err.what());
            }
            try {
                mr.des = dq_test(resid, mr.oos_path, GofKind::Des);
            } catch (const Error& err) {
                mr.des.wald = kNan;
                mr.des.p_value = kNan;
                mr.error += strprintf("%sdes: %s", mr.error.empty() ? "" : "; ",
                                      err.what());
            }
        } catch (const Error& err) {
            mr.ok = false;
            mr.error = err.what();
            mr.avg_loss = kNan;
        }
    }

    const auto count = static_cast<Eigen::Index>(models.size());
    report.dm = Eigen::MatrixXd::Constant(count, count, kNan);
    for (Eigen::Index i = 0; i < count; ++i) {
        if (!report.models[static_cast<size_t>(i)].ok) continue;
        for (Eigen::Index j = 0; j < count; ++j) {
            if (!report.models[static_cast<size_t>(j)].ok) continue;
            report.dm(i, j) = dm_test(report.models[static_cast<size_t>(i)].losses,
                                      report.models[static_cast<size_t>(j)].losses)
                                  .t_stat;
        }
    }

    std::vector<size_t> ok_idx;
    for (size_t i = 0; i < report.models.size(); ++i)
        if (report.models[i].ok) ok_idx.push_back(i);
    std::stable_sort(ok_idx.begin(), ok_idx.end(), [&](size_t a, size_t b) {
        return report.models[a].avg_loss < report.models[b].avg_loss;
    });
    report.ranks.assign(report.models.size(), 0);
    for (size_t pos = 0; pos < ok_idx.size(); ++pos)
        report.ranks[ok_idx[pos]] = static_cast<int>(pos) + 1;
    return report;
}

// ====================== serialization ======================

namespace {

using ordered_json = nlohmann::ordered_json;

// JSON has no literals for NaN or infinities, so they travel as strings.
ordered_json enc(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

double dec(const ordered_json& j) {
    if (j.is_string()) {
        const std::string& s = j.get_ref<const std::string&>();
        if (s == "nan") return kNan;
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        throw ParseError(strprintf("unexpected numeric literal '%s'", s.c_str()));
    }
    return j.get<double>();
}

ordered_json enc_vector(const std::vector<double>& xs) {
    ordered_json arr = ordered_json::array();
    for (double x : xs) arr.push_back(enc(x));
    return arr;
}

std::vector<double> dec_vector(const ordered_json& arr) {
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& j : arr) out.push_back(dec(j));
    return out;
}

ordered_json enc_gof(const GofResult& g) {
    ordered_json j;
    j["wald"] = enc(g.wald);
    j["p_value"] = enc(g.p_value);
    j["coefficients"] = ordered_json::array({enc(g.coefficients[0]),
                                             enc(g.coefficients[1]),
                                             enc(g.coefficients[2])});
    j["df"] = g.df;
    j["dropped_collinear"] = g.dropped_collinear;
    return j;
}

GofResult dec_gof(const ordered_json& j) {
    GofResult g;
    g.wald = dec(j.at("wald"));
    g.p_value = dec(j.at("p_value"));
    for (int i = 0; i < 3; ++i) g.coefficients[i] = dec(j.at("coefficients").at(i));
    g.df = j.at("df").get<int>();
    g.dropped_collinear = j.at("dropped_collinear").get<bool>();
    return g;
}

} // namespace

std::string to_json_string(const BacktestReport& report) {
    ordered_json j;
    j["alpha"] = enc(report.alpha);
    j["split"] = report.split;
    j["n_oos"] = report.n_oos;
    j["models"] = ordered_json::array();
    for (const OosModelReport& m : report.models) {
        ordered_json mj;
        mj["name"] = m.name;
        mj["ok"] = m.ok;
        mj["error"] = m.error;
        mj["avg_loss"] = enc(m.avg_loss);
        mj["dq"] = enc_gof(m.dq);
        mj["des"] = enc_gof(m.des);
        mj["v"] = enc_vector(m.oos_path.v);
        mj["e"] = enc_vector(m.oos_path.e);
        mj["losses"] = enc_vector(m.losses);
        j["models"].push_back(std::move(mj));
    }
    ordered_json dm = ordered_json::array();
    for (Eigen::Index i = 0; i < report.dm.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index k = 0; k < report.dm.cols(); ++k) row.push_back(enc(report.dm(i, k)));
        dm.push_back(std::move(row));
    }
    j["dm"] = std::move(dm);
    j["ranks"] = report.ranks;
    return j.dump(2) + "\n";
}

BacktestReport backtest_report_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& err) {
        throw ParseError(strprintf("backtest report JSON: %s", err.what()));
    }
    try {
        BacktestReport report;
        report.alpha = dec(j.at("alpha"));
        report.split = j.at("split").get<size_t>();
        report.n_oos = j.at("n_oos").get<size_t>();
        for (const auto& mj : j.at("models")) {
            OosModelReport m;
            m.name = mj.at("name").get<std::string>();
            m.ok = mj.at("ok").get<bool>();
            m.error = mj.at("error").get<std::string>();
            m.avg_loss = dec(mj.at("avg_loss"));
            m.dq = dec_gof(mj.at("dq"));
            m.des = dec_gof(mj.at("des"));
            m.oos_path.v = dec_vector(mj.at("v"));
            m.oos_path.e = dec_vector(mj.at("e"));
            m.losses = dec_vector(mj.at("losses"));
            report.models.push_back(std::move(m));
        }
        const auto& dm = j.at("dm");
        const auto count = static_cast<Eigen::Index>(dm.size());
        report.dm = Eigen::MatrixXd::Constant(count, count, kNan);
        for (Eigen::Index i = 0; i < count; ++i)
            for (Eigen::Index k = 0; k < count; ++k)
                report.dm(i, k) = dec(dm.at(static_cast<size_t>(i)).at(static_cast<size_t>(k)));
        report.ranks = j.at("ranks").get<std::vector<int>>();
        return report;
    } catch (const nlohmann::json::exception& err) {
        throw ParseError(strprintf("backtest report JSON: %s", err.what()));
    }
}

// ====================== text rendering ======================

std::string render_text(const BacktestReport& report) {
    std::string out;
    out += strprintf("out-of-sample backtest  alpha=%.3f  split=%zu  oos=%zu\n\n",
                     report.alpha, report.split, report.n_oos);
    out += strprintf("%-10s  %10s  %8s  %8s  %5s\n", "model", "avg loss", "DQ p",
                     "DES p", "rank");
    for (size_t i = 0; i < report.models.size(); ++i) {
        const OosModelReport& m = report.models[i];
        if (!m.ok) {
            out += strprintf("%-10s  failed: %s\n", m.name.c_str(), m.error.c_str());
            continue;
        }
        out += strprintf("%-10s  %10.4f  %8.3f  %8.3f  %5d\n", m.name.c_str(), m.avg_loss,
                         m.dq.p_value, m.des.p_value, report.ranks[i]);
    }
    out += "\npairwise loss t-statistics (row minus column; positive favors column)\n";
    out += strprintf("%-10s", "");
    for (const OosModelReport& m : report.models) out += strprintf("  %8s", m.name.c_str());
    out += "\n";
    for (Eigen::Index i = 0; i < report.dm.rows(); ++i) {
        out += strprintf("%-10s", report.models[static_cast<size_t>(i)].name.c_str());
        for (Eigen::Index k = 0; k < report.dm.cols(); ++k) {
            if (i == k)
                out += strprintf("  %8s", ".");
            else if (std::isnan(report.dm(i, k)))
                out += strprintf("  %8s", "-");
            else
                out += strprintf("  %8.2f", report.dm(i, k));
        }
        out += "\n";
    }
    return out;
}

} // namespace fzrisk
