#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "CLI11.hpp"
#include "json.hpp"

#include "fzrisk/backtest.hpp"
#include "fzrisk/core.hpp"
#include "fzrisk/distributions.hpp"
#include "fzrisk/errors.hpp"
#include "fzrisk/estimation.hpp"
#include "fzrisk/fz_loss.hpp"
#include "fzrisk/mathutil.hpp"
#include "fzrisk/models.hpp"
#include "fzrisk/simulate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace fzrisk;

namespace {

// ====================== parsing helpers ======================

std::string trim_copy(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text, const std::string& what) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text + ",") {
        if (c != ',') {
            cur.push_back(c);
            continue;
        }
        std::string token = trim_copy(cur);
        cur.clear();
        if (token.empty())
            throw ValidationError(what + ": empty entry in comma-separated list");
        out.push_back(token);
    }
    if (out.empty())
        throw ValidationError(what + ": list is empty");
    return out;
}

double parse_double(const std::string& token, const std::string& what) {
    const char* first = token.data();
    const char* last = token.data() + token.size();
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw ValidationError(what + ": cannot parse number '" + token + "'");
    return value;
}

std::size_t parse_size(const std::string& token, const std::string& what) {
    const char* first = token.data();
    const char* last = token.data() + token.size();
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw ValidationError(what + ": cannot parse count '" + token + "'");
    return value;
}

// Stage schedule: comma-separated tau values in increasing order with a
// final "exact" token, e.g. "5,20,exact".
std::vector<SmoothingTau> parse_tau_schedule(const std::string& text) {
    std::vector<SmoothingTau> stages;
    for (const std::string& token : split_list(text, "tau schedule")) {
        if (token == "exact")
            stages.push_back(SmoothingTau::Exact());
        else
            stages.push_back(SmoothingTau::Smoothed(parse_double(token, "tau schedule")));
    }
    return stages;
}

ReturnScale parse_scale(const std::string& name) {
    if (name == "percent") return ReturnScale::Percent;
    if (name == "decimal") return ReturnScale::Decimal;
    throw ValidationError("scale must be 'percent' or 'decimal', got '" + name + "'");
}

RollingEsMode parse_rolling_mode(const std::string& name) {
    if (name == "past-var") return RollingEsMode::PastVar;
    if (name == "current-var") return RollingEsMode::CurrentVar;
    throw ValidationError("rolling mode must be 'past-var' or 'current-var', got '" +
                          name + "'");
}

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "simplex") return OptimizerKind::Simplex;
    if (name == "gradient") return OptimizerKind::GradientSmoothed;
    throw ValidationError("optimizer must be 'simplex' or 'gradient', got '" + name +
                          "'");
}

InnovationDist parse_innovation_dist(const std::string& name) {
    if (name == "normal") return InnovationDist::Normal;
    if (name == "skewt") return InnovationDist::SkewT;
    if (name == "edf") return InnovationDist::Edf;
    throw ValidationError("unknown innovation distribution '" + name + "'");
}

// ====================== config file merge ======================

// Converts a config-file value to the type of the bound flag variable.
// Arrays of numbers or strings collapse to the comma-separated form the
// flags use, so lists can be written either way.
void assign_config(double& var, const json& v, const std::string& key) {
    if (!v.is_number())
        throw ValidationError("config key '" + key + "': expected a number");
    var = v.get<double>();
}

void assign_config(int& var, const json& v, const std::string& key) {
    if (!v.is_number_integer())
        throw ValidationError("config key '" + key + "': expected an integer");
    var = v.get<int>();
}

void assign_config(std::uint64_t& var, const json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ValidationError("config key '" + key + "': expected a nonnegative integer");
    var = v.get<std::uint64_t>();
}

void assign_config(std::string& var, const json& v, const std::string& key) {
    if (v.is_string()) {
        var = v.get<std::string>();
        return;
    }
    if (v.is_array()) {
        std::string joined;
        for (const json& item : v) {
            if (!joined.empty()) joined += ",";
            if (item.is_string())
                joined += item.get<std::string>();
            else if (item.is_number())
                joined += format_roundtrip(item.get<double>());
            else
                throw ValidationError("config key '" + key +
                                      "': array entries must be numbers or strings");
        }
        var = joined;
        return;
    }
    throw ValidationError("config key '" + key + "': expected a string or array");
}

// Flag set of one subcommand with three extras layered on CLI11:
// a JSON config file whose keys mirror the long flag names (explicit
// flags win), an echo of the merged effective values for provenance,
// and an output-directory prefix. --threads is deliberately not part
// of the echo: results are independent of it by construction.
struct OptionSet {
    CLI::App* cmd = nullptr;
    std::string config_path;
    std::string out_dir;
    int threads = 0;

    struct Binding {
        std::string key;
        CLI::Option* opt;
        std::function<void(const json&)> apply;
        std::function<json()> dump;
    };
    std::vector<Binding> bindings;

    explicit OptionSet(CLI::App* c) : cmd(c) {
        cmd->add_option("--config", config_path,
                        "JSON config file; keys mirror long flag names, explicit "
                        "flags override");
        cmd->add_option("--threads", threads,
                        "worker threads (0 = all cores); never changes results");
        bind("out-dir", "--out-dir", out_dir, "directory prefix for relative output paths");
    }

    template <typename T>
    CLI::Option* bind(const std::string& key, const std::string& flag, T& var,
                      const std::string& help) {
        CLI::Option* opt = cmd->add_option(flag, var, help);
        bindings.push_back(
            {key, opt, [&var, key](const json& v) { assign_config(var, v, key); },
             [&var]() { return json(var); }});
        return opt;
    }

    const Binding* find(const std::string& key) const {
        for (const Binding& b : bindings)
            if (b.key == key) return &b;
        return nullptr;
    }

    bool given(const std::string& key) const {
        const Binding* b = find(key);
        return b != nullptr && b->opt->count() > 0;
    }

    // Applies the config file under flag precedence and rejects unknown
    // keys. Call once after CLI11 parsing, before reading any bound value.
    void merge_config() {
        if (config_path.empty()) return;
        if (!fs::exists(config_path))
            throw ValidationError("config file not found: " + config_path);
        std::ifstream in(config_path);
        if (!in)
            throw IoError("cannot read config file: " + config_path);
        json j;
        try {
            j = json::parse(in);
        } catch (const std::exception& e) {
            throw ParseError("config file " + config_path + ": " + e.what());
        }
        if (!j.is_object())
            throw ValidationError("config file must hold a JSON object: " + config_path);
        for (auto it = j.begin(); it != j.end(); ++it) {
            const Binding* b = find(it.key());
            if (b == nullptr)
                throw ValidationError("unknown config key '" + it.key() + "' in " +
                                      config_path);
            if (b->opt->count() == 0) b->apply(it.value());
        }
    }

    json echo() const {
        json j = json::object();
        for (const Binding& b : bindings) j[b.key] = b.dump();
        return j;
    }

    // Joins relative output paths onto --out-dir and creates parents.
    std::string out_path(const std::string& p) const {
        fs::path path(p);
        if (!out_dir.empty() && path.is_relative()) path = fs::path(out_dir) / path;
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        return path.string();
    }
};

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

// ====================== file plumbing ======================

std::string require_input(const std::string& path, const std::string& flag) {
    if (path.empty())
        throw ValidationError("missing required input file (" + flag + ")");
    if (!fs::exists(path))
        throw ValidationError("input file not found: " + path);
    return path;
}

// Default for a companion output derived from the primary --out value.
std::string derived_name(const std::string& primary, const std::string& suffix,
                         const std::string& ext) {
    fs::path p(primary);
    return (p.parent_path() / (p.stem().string() + suffix + ext)).string();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write file: " + path);
    out << text;
    if (!out)
        throw IoError("write failed: " + path);
}

void write_json_file(const std::string& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path))
        throw ValidationError(what + " not found: " + path);
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot read " + what + ": " + path);
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw ParseError(what + " " + path + ": " + e.what());
    }
}

// Quantile-only series (the caviar model carries no tail-mean path).
void write_quantile_csv(const std::string& path, const std::vector<double>& v,
                        std::span<const std::string> dates, const std::string& comment) {
    if (!dates.empty() && dates.size() != v.size())
        throw ValidationError("date labels do not match quantile path length");
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write quantile path file: " + path);
    if (!comment.empty()) out << "# " << comment << '\n';
    out << (dates.empty() ? "v\n" : "date,v\n");
    for (size_t t = 0; t < v.size(); ++t) {
        if (!dates.empty()) out << dates[t] << ',';
        out << format_roundtrip(v[t]) << '\n';
    }
    if (!out)
        throw IoError("write failed: " + path);
}

// ====================== estimation options ======================

struct EstOpts {
    std::string tau = "5,20,exact";
    double tol_f = 1e-8;
    double tol_x = 1e-6;
    int max_iter = 0;
    int multistarts = 5;
    std::uint64_t seed = 1;
    std::string optimizer = "simplex";
};

void add_est_options(OptionSet& opts, EstOpts& eo, const std::string& seed_flag) {
    opts.bind("tau-schedule", "--tau-schedule", eo.tau,
              "smoothing stages, e.g. '5,20,exact'");
    opts.bind("tol-f", "--tol-f", eo.tol_f, "objective tolerance");
    opts.bind("tol-x", "--tol-x", eo.tol_x, "parameter tolerance");
    opts.bind("max-iter", "--max-iter", eo.max_iter,
              "iteration cap per stage (0 = 200 x dimension)");
    opts.bind("multistarts", "--multistarts", eo.multistarts, "number of start points");
    opts.bind(seed_flag.substr(2), seed_flag, eo.seed, "seed for start perturbations");
    opts.bind("optimizer", "--optimizer", eo.optimizer, "'simplex' or 'gradient'");
}

EstimationConfig est_config(const EstOpts& eo, int threads) {
    EstimationConfig cfg;
    cfg.stages = parse_tau_schedule(eo.tau);
    cfg.tol_f = eo.tol_f;
    cfg.tol_x = eo.tol_x;
    cfg.max_iter = eo.max_iter;
    cfg.multistarts = eo.multistarts;
    cfg.seed = eo.seed;
    cfg.threads = threads;
    cfg.optimizer = parse_optimizer(eo.optimizer);
    cfg.validate();
    return cfg;
}

// ====================== fit artifacts ======================

bool is_fz_model(const std::string& name) {
    return name == "gas1f" || name == "gas2f" || name == "garch-fz" ||
           name == "hybrid";
}

bool is_qmle_model(const std::string& name) {
    return name == "garch-qmle-normal" || name == "garch-qmle-skewt" ||
           name == "garch-qmle-edf";
}

// Parameters in reporting order with delta-method standard errors for
// derived entries. One-factor families estimate (b, c) with a = c * b.
struct NaturalParams {
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<double> ses;
};

double delta_se_a(const EstimationResult& res, int ib, int ic) {
    double b = res.theta[ib];
    double c = res.theta[ic];
    double var = c * c * res.vcov(ib, ib) + b * b * res.vcov(ic, ic) +
                 2.0 * b * c * res.vcov(ib, ic);
    return std::sqrt(std::max(var, 0.0) / static_cast<double>(res.n_obs));
}

NaturalParams natural_params(const std::string& model, const EstimationResult& res) {
    NaturalParams np;
    if (model == "gas1f" || model == "garch-fz") {
        np.names = {"beta", "gamma", "a", "b"};
        np.values = {res.theta[0], res.theta[1], res.theta[3] * res.theta[2],
                     res.theta[2]};
        np.ses = {res.std_errors[0], res.std_errors[1], delta_se_a(res, 2, 3),
                  res.std_errors[2]};
    } else if (model == "hybrid") {
        np.names = {"beta", "gamma", "delta", "a", "b"};
        np.values = {res.theta[0], res.theta[1], res.theta[2],
                     res.theta[4] * res.theta[3], res.theta[3]};
        np.ses = {res.std_errors[0], res.std_errors[1], res.std_errors[2],
                  delta_se_a(res, 3, 4), res.std_errors[3]};
    } else {
        np.names = res.param_names;
        np.values.assign(res.theta.data(), res.theta.data() + res.theta.size());
        np.ses = res.std_errors;
    }
    return np;
}

json result_internal(const EstimationResult& res, const std::string& model) {
    json j = json::object();
    j["model"] = model;
    j["method"] = res.method;
    j["param_names"] = res.param_names;
    j["theta"] = std::vector<double>(res.theta.data(),
                                     res.theta.data() + res.theta.size());
    j["std_errors"] = res.std_errors;
    j["fixed_omega"] = res.omega;
    j["mu"] = res.mu;
    j["state"] = {{"v1", res.state.v1},
                  {"e1", res.state.e1},
                  {"sigma2_init", res.state.sigma2_init}};
    j["best_start"] = res.best_start;
    return j;
}

// Frozen fit reloaded from a fit JSON, enough to filter new data.
struct SavedFit {
    std::string model;
    double alpha = 0.0;
    Eigen::VectorXd theta;
    FzFilterState state;
    double fixed_omega = 1.0;
    double mu = 0.0;
    InnovationDist dist = InnovationDist::Normal;
    TailPair tail;
    SkewtParams skewt;
};

const json& need_key(const json& j, const std::string& key, const std::string& what) {
    auto it = j.find(key);
    if (it == j.end())
        throw ParseError(what + ": missing key '" + key + "'");
    return *it;
}

SavedFit load_fit(const std::string& path) {
    json j = read_json_file(path, "fit file");
    const std::string what = "fit file " + path;
    try {
        const json& internal = need_key(j, "internal", what);
        SavedFit fit;
        fit.model = need_key(internal, "model", what).get<std::string>();
        fit.alpha = need_key(j, "alpha", what).get<double>();
        std::vector<double> theta =
            need_key(internal, "theta", what).get<std::vector<double>>();
        fit.theta = Eigen::Map<const Eigen::VectorXd>(
            theta.data(), static_cast<Eigen::Index>(theta.size()));
        const json& state = need_key(internal, "state", what);
        fit.state.v1 = need_key(state, "v1", what).get<double>();
        fit.state.e1 = need_key(state, "e1", what).get<double>();
        fit.state.sigma2_init = need_key(state, "sigma2_init", what).get<double>();
        fit.fixed_omega = need_key(internal, "fixed_omega", what).get<double>();
        fit.mu = need_key(internal, "mu", what).get<double>();
        if (is_qmle_model(fit.model)) {
            fit.dist = parse_innovation_dist(
                need_key(internal, "dist", what).get<std::string>());
            const json& tail = need_key(internal, "tail", what);
            fit.tail.a = need_key(tail, "a", what).get<double>();
            fit.tail.b = need_key(tail, "b", what).get<double>();
            if (internal.contains("skewt")) {
                fit.skewt.nu = need_key(internal["skewt"], "nu", what).get<double>();
                fit.skewt.lambda =
                    need_key(internal["skewt"], "lambda", what).get<double>();
            }
        }
        return fit;
    } catch (const json::exception& e) {
        throw ParseError(what + ": " + e.what());
    }
}

ArmaGarchModel armagarch_from_fit(const SavedFit& fit) {
    ArmaGarchModel m;
    m.mu = fit.mu;
    m.garch = GarchParams{fit.theta[0], fit.theta[1], fit.theta[2]};
    m.sigma2_init = fit.state.sigma2_init;
    m.dist = fit.dist;
    m.tail = fit.tail;
    m.skewt = fit.skewt;
    return m;
}

// ====================== subcommand: simulate ======================

struct SimulateArgs {
    OptionSet opts;
    std::string dgp = "garch";
    double omega = 0.05;
    double beta = 0.9;
    double gamma = 0.05;
    std::string dist = "normal";
    double nu = 5.0;
    double lambda = -0.5;
    std::size_t T = 2500;
    std::size_t burn_in = 1000;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    std::string out = "sim.csv";
    std::string truth_out;

    explicit SimulateArgs(CLI::App* cmd) : opts(cmd) {
        opts.bind("dgp", "--dgp", dgp, "data-generating process (only 'garch')");
        opts.bind("omega", "--omega", omega, "variance intercept");
        opts.bind("beta", "--beta", beta, "variance persistence");
        opts.bind("gamma", "--gamma", gamma, "squared-return loading");
        opts.bind("dist", "--dist", dist, "innovation law: 'normal' or 'skewt'");
        opts.bind("nu", "--nu", nu, "skew-t degrees of freedom");
        opts.bind("lambda", "--lambda", lambda, "skew-t asymmetry");
        opts.bind("T", "--T,-T", T, "sample length after burn-in");
        opts.bind("burn-in", "--burn-in", burn_in, "discarded warm-up draws");
        opts.bind("seed", "--seed", seed, "RNG seed");
        opts.bind("alpha", "--alpha", alpha, "tail level of the truth path");
        opts.bind("out", "--out", out, "returns CSV");
        opts.bind("truth-out", "--truth-out", truth_out,
                  "truth (v,e) CSV (default: <out>_truth.csv)");
    }
};

int run_simulate(SimulateArgs& a) {
    a.opts.merge_config();
    if (a.dgp != "garch")
        throw ValidationError("unknown dgp '" + a.dgp + "' (only 'garch')");
    if (a.truth_out.empty()) a.truth_out = derived_name(a.out, "_truth", ".csv");
    json cfg = a.opts.echo();
    std::string comment = "config: " + cfg.dump();

    DgpConfig dgp;
    dgp.omega = a.omega;
    dgp.beta = a.beta;
    dgp.gamma = a.gamma;
    dgp.innovation = innovation_from_string(a.dist);
    dgp.skewt = SkewtParams{a.nu, a.lambda};
    dgp.T = a.T;
    dgp.burn_in = a.burn_in;
    dgp.seed = a.seed;
    SimulatedSeries sim = simulate_dgp(dgp, AlphaLevel(a.alpha));

    std::string out = a.opts.out_path(a.out);
    std::string truth_out = a.opts.out_path(a.truth_out);
    write_returns(out, sim.y, comment);
    write_risk_path(truth_out, sim.truth, {}, comment);
    std::cout << strprintf("simulate: T=%zu dist=%s seed=%llu -> %s, %s\n", a.T,
                           a.dist.c_str(),
                           static_cast<unsigned long long>(a.seed), out.c_str(),
                           truth_out.c_str());
    return 0;
}

// ====================== subcommand: fit ======================

struct FitArgs {
    OptionSet opts;
    std::string model;
    double alpha = 0.05;
    std::string in;
    std::string column = "return";
    std::string scale = "percent";
    double fixed_omega = 1.0;
    EstOpts est;
    std::string out = "fit.json";
    std::string path_out;

    explicit FitArgs(CLI::App* cmd) : opts(cmd) {
        opts.bind("model", "--model", model,
                  "gas1f | gas2f | garch-fz | hybrid | garch-qmle-normal | "
                  "garch-qmle-skewt | garch-qmle-edf | caviar");
        opts.bind("alpha", "--alpha", alpha, "tail level");
        opts.bind("in", "--in", in, "input returns CSV");
        opts.bind("column", "--column", column, "return column name");
        opts.bind("scale", "--scale", scale, "input units: 'percent' or 'decimal'");
        opts.bind("fixed-omega", "--fixed-omega", fixed_omega,
                  "pinned variance intercept (garch-fz, caviar)");
        add_est_options(opts, est, "--seed");
        opts.bind("out", "--out", out, "fit JSON");
        opts.bind("path-out", "--path-out", path_out,
                  "fitted path CSV (default: <out>_path.csv)");
    }
};

int run_fit(FitArgs& a) {
    a.opts.merge_config();
    if (a.model.empty())
        throw ValidationError("missing required --model");
    require_input(a.in, "--in");
    if (a.path_out.empty()) a.path_out = derived_name(a.out, "_path", ".csv");
    json cfg = a.opts.echo();
    std::string comment = "config: " + cfg.dump();

    ReturnSeries series = load_returns(a.in, a.column, parse_scale(a.scale));
    EstimationConfig ec = est_config(a.est, resolve_threads(a.opts.threads));
    AlphaLevel alpha(a.alpha);

    json out_json = json::object();
    out_json["command"] = "fit";
    out_json["model"] = a.model;
    out_json["alpha"] = a.alpha;

    EstimationResult res;
    RiskPath path;
    std::vector<double> quantile_path; // caviar has no tail-mean column
    json internal;

    if (is_fz_model(a.model)) {
        FzModel m = fz_model_from_string(a.model);
        res = fz_estimate(series.values, m, alpha, ec, a.fixed_omega);
        path = fz_path(series.values, m, res.theta, alpha, res.omega, res.state);
        out_json["avg_loss"] = res.avg_loss;
        internal = result_internal(res, a.model);
    } else if (is_qmle_model(a.model)) {
        res = qmle_garch(series.values, ec);
        ArmaGarchModel m;
        m.mu = res.mu;
        m.garch = GarchParams{res.theta[0], res.theta[1], res.theta[2]};
        m.sigma2_init = res.state.sigma2_init;
        m.dist = parse_innovation_dist(a.model.substr(std::string("garch-qmle-").size()));
        std::vector<double> demeaned(series.values.begin(), series.values.end());
        for (double& x : demeaned) x -= m.mu;
        std::vector<double> sigma2 =
            garch_variance_path(demeaned, m.garch, m.sigma2_init);
        std::vector<double> resid(demeaned.size());
        for (size_t t = 0; t < resid.size(); ++t)
            resid[t] = demeaned[t] / std::sqrt(sigma2[t]);
        switch (m.dist) {
            case InnovationDist::Normal: m.tail = normal_tail_pair(alpha); break;
            case InnovationDist::Edf: m.tail = edf_tail_pair(resid, alpha); break;
            case InnovationDist::SkewT:
                m.skewt = skewt_fit(resid);
                m.tail = skewt_tail_pair(alpha, m.skewt);
                break;
        }
        path = armagarch_apply(m, series.values);
        out_json["avg_loss"] = average_loss(series.values, path, alpha);
        out_json["avg_nll"] = res.avg_loss;
        internal = result_internal(res, a.model);
        internal["dist"] = a.model.substr(std::string("garch-qmle-").size());
        internal["tail"] = {{"a", m.tail.a}, {"b", m.tail.b}};
        if (m.dist == InnovationDist::SkewT)
            internal["skewt"] = {{"nu", m.skewt.nu}, {"lambda", m.skewt.lambda}};
    } else if (a.model == "caviar") {
        res = caviar_estimate(series.values, alpha, ec, a.fixed_omega);
        quantile_path = caviar_var_path(series.values, res.theta, res.omega, res.state);
        out_json["avg_tick_loss"] = res.avg_loss;
        internal = result_internal(res, a.model);
    } else {
        throw ValidationError("unknown model '" + a.model + "'");
    }

    NaturalParams np = natural_params(a.model, res);
    for (size_t i = 0; i < np.names.size(); ++i) out_json[np.names[i]] = np.values[i];
    for (size_t i = 0; i < np.names.size(); ++i)
        out_json["se_" + np.names[i]] = np.ses[i];
    out_json["n_obs"] = res.n_obs;
    out_json["converged"] = res.converged;
    out_json["warnings"] = res.warnings;
    out_json["internal"] = internal;
    out_json["config"] = cfg;

    std::string out = a.opts.out_path(a.out);
    std::string path_out = a.opts.out_path(a.path_out);
    write_json_file(out, out_json);
    if (a.model == "caviar")
        write_quantile_csv(path_out, quantile_path, series.dates, comment);
    else
        write_risk_path(path_out, path, series.dates, comment);

    std::cout << strprintf("fit: model=%s alpha=%s n=%zu converged=%s -> %s, %s\n",
                           a.model.c_str(), format_roundtrip(a.alpha).c_str(),
                           res.n_obs, res.converged ? "yes" : "no", out.c_str(),
                           path_out.c_str());
    return 0;
}

// ====================== subcommand: forecast ======================

struct ForecastArgs {
    OptionSet opts;
    std::string fit_path;
    std::string model;
    double alpha = std::numeric_limits<double>::quiet_NaN();
    std::string rolling_mode = "past-var";
    std::string in;
    std::string column = "return";
    std::string scale = "percent";
    std::string out = "forecast.csv";

    explicit ForecastArgs(CLI::App* cmd) : opts(cmd) {
        opts.bind("fit", "--fit", fit_path,
                  "fit JSON to apply with frozen parameters");
        opts.bind("model", "--model", model,
                  "rolling-window alternative: rw-125 | rw-250 | rw-500");
        opts.bind("alpha", "--alpha", alpha,
                  "tail level (rolling only; default 0.05)");
        opts.bind("rolling-mode", "--rolling-mode", rolling_mode,
                  "'past-var' or 'current-var'");
        opts.bind("in", "--in", in, "input returns CSV");
        opts.bind("column", "--column", column, "return column name");
        opts.bind("scale", "--scale", scale, "input units: 'percent' or 'decimal'");
        opts.bind("out", "--out", out, "forecast path CSV");
    }
};

int run_forecast(ForecastArgs& a) {
    a.opts.merge_config();
    if (a.fit_path.empty() == a.model.empty())
        throw ValidationError("need exactly one of --fit or --model");
    require_input(a.in, "--in");
    ReturnSeries series = load_returns(a.in, a.column, parse_scale(a.scale));
    std::string out = a.opts.out_path(a.out);

    if (!a.fit_path.empty()) {
        if (!std::isnan(a.alpha))
            throw ValidationError("--alpha conflicts with --fit (the fit file "
                                  "carries its own level)");
        SavedFit fit = load_fit(a.fit_path);
        a.alpha = fit.alpha; // echoed as the effective level
        json cfg = a.opts.echo();
        std::string comment = "config: " + cfg.dump();
        if (is_fz_model(fit.model)) {
            RiskPath path =
                fz_path(series.values, fz_model_from_string(fit.model), fit.theta,
                        AlphaLevel(fit.alpha), fit.fixed_omega, fit.state);
            write_risk_path(out, path, series.dates, comment);
        } else if (is_qmle_model(fit.model)) {
            RiskPath path = armagarch_apply(armagarch_from_fit(fit), series.values);
            write_risk_path(out, path, series.dates, comment);
        } else if (fit.model == "caviar") {
            std::vector<double> v = caviar_var_path(series.values, fit.theta,
                                                    fit.fixed_omega, fit.state);
            write_quantile_csv(out, v, series.dates, comment);
        } else {
            throw ValidationError("fit file has unknown model '" + fit.model + "'");
        }
        std::cout << strprintf("forecast: fit=%s alpha=%s n=%zu -> %s\n",
                               fit.model.c_str(),
                               format_roundtrip(fit.alpha).c_str(),
                               series.values.size(), out.c_str());
        return 0;
    }

    if (a.model.rfind("rw-", 0) != 0)
        throw ValidationError("--model must name a rolling window (rw-125, rw-250, "
                              "rw-500), got '" + a.model + "'");
    size_t window = parse_size(a.model.substr(3), "rolling window");
    if (std::isnan(a.alpha)) a.alpha = 0.05;
    json cfg = a.opts.echo();
    std::string comment = "config: " + cfg.dump();
    RollingForecast rf = rolling_forecast(series.values, window, AlphaLevel(a.alpha),
                                          parse_rolling_mode(a.rolling_mode));
    std::span<const std::string> dates;
    if (!series.dates.empty())
        dates = std::span<const std::string>(series.dates).subspan(rf.start);
    write_risk_path(out, rf.path, dates, comment);
    std::cout << strprintf("forecast: model=%s alpha=%s n=%zu start=%zu -> %s\n",
                           a.model.c_str(), format_roundtrip(a.alpha).c_str(),
                           series.values.size(), rf.start, out.c_str());
    return 0;
}

// ====================== subcommand: backtest ======================

struct BacktestArgs {
    OptionSet opts;
    std::string in;
    std::string column = "return";
    std::string scale = "percent";
    std::size_t split = 0;
    std::string models;
    double alpha = 0.05;
    double fixed_omega = 1.0;
    std::string rolling_mode = "past-var";
    EstOpts est;
    std::string out = "backtest.json";
    std::string text_out;

    explicit BacktestArgs(CLI::App* cmd) : opts(cmd) {
        for (OosModel m : default_oos_models()) {
            if (!models.empty()) models += ",";
            models += to_string(m);
        }
        opts.bind("in", "--in", in, "input returns CSV");
        opts.bind("column", "--column", column, "return column name");
        opts.bind("scale", "--scale", scale, "input units: 'percent' or 'decimal'");
        opts.bind("split", "--split", split, "in-sample length (required)");
        opts.bind("models", "--models", models, "comma-separated model list");
        opts.bind("alpha", "--alpha", alpha, "tail level");
        opts.bind("fixed-omega", "--fixed-omega", fixed_omega,
                  "pinned variance intercept (garch-fz)");
        opts.bind("rolling-mode", "--rolling-mode", rolling_mode,
                  "'past-var' or 'current-var'");
        add_est_options(opts, est, "--seed");
        opts.bind("out", "--out", out, "report JSON");
        opts.bind("text-out", "--text-out", text_out,
                  "report text (default: <out>.txt)");
    }
};

int run_backtest(BacktestArgs& a) {
    a.opts.merge_config();
    require_input(a.in, "--in");
    if (a.split == 0)
        throw ValidationError("missing required --split (in-sample length)");
    if (a.text_out.empty()) a.text_out = derived_name(a.out, "", ".txt");
    json cfg = a.opts.echo();

    ReturnSeries series = load_returns(a.in, a.column, parse_scale(a.scale));
    std::vector<OosModel> models;
    for (const std::string& name : split_list(a.models, "--models"))
        models.push_back(oos_model_from_string(name));

    OosConfig oc;
    oc.est = est_config(a.est, resolve_threads(a.opts.threads));
    oc.fixed_omega = a.fixed_omega;
    oc.rolling_mode = parse_rolling_mode(a.rolling_mode);
    BacktestReport report = oos_harness(series, a.split, models, AlphaLevel(a.alpha), oc);

    json out_json = json::object();
    out_json["command"] = "backtest";
    out_json["config"] = cfg;
    out_json["report"] = json::parse(to_json_string(report));

    std::string text = render_text(report);
    std::string out = a.opts.out_path(a.out);
    std::string text_out = a.opts.out_path(a.text_out);
    write_json_file(out, out_json);
    write_text_file(text_out, "# config: " + cfg.dump() + "\n\n" + text);

    std::cout << strprintf("backtest: alpha=%s split=%zu oos=%zu models=%zu -> %s, %s\n",
                           format_roundtrip(a.alpha).c_str(), a.split, report.n_oos,
                           models.size(), out.c_str(), text_out.c_str());
    std::cout << text;
    return 0;
}

// ====================== subcommand: mc ======================

struct McArgs {
    OptionSet opts;
    std::size_t reps = 200;
    std::string alphas = "0.05";
    std::string T_list = "2500";
    std::string estimators = "fz,qmle,caviar";
    double omega = 0.05;
    double beta = 0.9;
    double gamma = 0.05;
    std::string dist = "normal";
    double nu = 5.0;
    double lambda = -0.5;
    std::size_t burn_in = 1000;
    std::uint64_t seed = 0;
    EstOpts est;
    std::string out = "mc.csv";
    std::string text_out;

    explicit McArgs(CLI::App* cmd) : opts(cmd) {
        opts.bind("reps", "--reps", reps, "replications per cell");
        opts.bind("alpha", "--alpha", alphas, "comma-separated tail levels");
        opts.bind("T", "--T,-T", T_list, "comma-separated sample lengths");
        opts.bind("estimators", "--estimators", estimators,
                  "comma-separated subset of fz,qmle,caviar");
        opts.bind("omega", "--omega", omega, "DGP variance intercept");
        opts.bind("beta", "--beta", beta, "DGP variance persistence");
        opts.bind("gamma", "--gamma", gamma, "DGP squared-return loading");
        opts.bind("dist", "--dist", dist, "DGP innovations: 'normal' or 'skewt'");
        opts.bind("nu", "--nu", nu, "skew-t degrees of freedom");
        opts.bind("lambda", "--lambda", lambda, "skew-t asymmetry");
        opts.bind("burn-in", "--burn-in", burn_in, "discarded warm-up draws");
        opts.bind("seed", "--seed", seed, "DGP seed (replication r uses stream r)");
        add_est_options(opts, est, "--est-seed");
        opts.bind("out", "--out", out, "study CSV");
        opts.bind("text-out", "--text-out", text_out,
                  "study text (default: <out>.txt)");
    }
};

int run_mc(McArgs& a) {
    a.opts.merge_config();
    if (a.text_out.empty()) a.text_out = derived_name(a.out, "", ".txt");
    json cfg = a.opts.echo();

    McConfig mc;
    mc.replications = a.reps;
    mc.alphas.clear();
    for (const std::string& t : split_list(a.alphas, "--alpha"))
        mc.alphas.push_back(parse_double(t, "--alpha"));
    mc.T_list.clear();
    for (const std::string& t : split_list(a.T_list, "--T"))
        mc.T_list.push_back(parse_size(t, "--T"));
    mc.estimators.clear();
    for (const std::string& t : split_list(a.estimators, "--estimators"))
        mc.estimators.push_back(mc_estimator_from_string(t));
    mc.est = est_config(a.est, 1); // parallelism lives at the replication level
    mc.threads = resolve_threads(a.opts.threads);

    DgpConfig dgp;
    dgp.omega = a.omega;
    dgp.beta = a.beta;
    dgp.gamma = a.gamma;
    dgp.innovation = innovation_from_string(a.dist);
    dgp.skewt = SkewtParams{a.nu, a.lambda};
    dgp.T = mc.T_list.empty() ? std::size_t{2500} : mc.T_list.front();
    dgp.burn_in = a.burn_in;
    dgp.seed = a.seed;

    McStudy study = run_mc_study(mc, dgp);

    std::string header = "# config: " + cfg.dump() + "\n";
    std::string out = a.opts.out_path(a.out);
    std::string text_out = a.opts.out_path(a.text_out);
    write_text_file(out, header + mc_to_csv(study));
    write_text_file(text_out, header + "\n" + mc_render_text(study));

    std::cout << strprintf("mc: reps=%zu cells=%zu failures=%zu%s -> %s, %s\n",
                           study.replications, study.cells.size(), study.failures,
                           study.flagged ? " (flagged)" : "", out.c_str(),
                           text_out.c_str());
    return 0;
}

// ====================== subcommand: nic ======================

struct NicArgs {
    OptionSet opts;
    std::string fit_path;
    std::string model;
    double alpha = std::numeric_limits<double>::quiet_NaN();
    double state_shift = 0.0;
    double grid_min = -5.0;
    double grid_max = 5.0;
    std::size_t grid_points = 201;
    std::string out = "nic.csv";
    // model-mode parameters; NaN means "use the model default"
    double beta = std::numeric_limits<double>::quiet_NaN();
    double gamma = std::numeric_limits<double>::quiet_NaN();
    double delta = std::numeric_limits<double>::quiet_NaN();
    double a_level = std::numeric_limits<double>::quiet_NaN();
    double b_level = std::numeric_limits<double>::quiet_NaN();
    double omega = std::numeric_limits<double>::quiet_NaN();
    double w_v = std::numeric_limits<double>::quiet_NaN();
    double w_e = std::numeric_limits<double>::quiet_NaN();
    double b_v = std::numeric_limits<double>::quiet_NaN();
    double b_e = std::numeric_limits<double>::quiet_NaN();
    double a_vv = std::numeric_limits<double>::quiet_NaN();
    double a_ve = std::numeric_limits<double>::quiet_NaN();
    double a_ev = std::numeric_limits<double>::quiet_NaN();
    double a_ee = std::numeric_limits<double>::quiet_NaN();

    explicit NicArgs(CLI::App* cmd) : opts(cmd) {
        opts.bind("fit", "--fit", fit_path, "fit JSON supplying model and parameters");
        opts.bind("model", "--model", model,
                  "gas1f | gas2f | garch-fz | hybrid (parameters from flags)");
        opts.bind("alpha", "--alpha", alpha, "tail level (default 0.05)");
        opts.bind("state-shift", "--state-shift", state_shift,
                  "scales the long-run (v,e) state by 1 + shift");
        opts.bind("grid-min", "--grid-min", grid_min, "lowest hypothetical return");
        opts.bind("grid-max", "--grid-max", grid_max, "highest hypothetical return");
        opts.bind("grid-points", "--grid-points", grid_points, "grid resolution");
        opts.bind("out", "--out", out, "curve CSV (y, v_next, e_next)");
        opts.bind("beta", "--beta", beta, "persistence");
        opts.bind("gamma", "--gamma", gamma, "score loading");
        opts.bind("delta", "--delta", delta, "absolute-return loading (hybrid)");
        opts.bind("a", "--a", a_level, "quantile level parameter");
        opts.bind("b", "--b", b_level, "tail-mean level parameter");
        opts.bind("omega", "--omega", omega, "variance intercept (garch-fz)");
        opts.bind("w-v", "--w-v", w_v, "two-factor v intercept");
        opts.bind("w-e", "--w-e", w_e, "two-factor e intercept");
        opts.bind("b-v", "--b-v", b_v, "two-factor v persistence");
        opts.bind("b-e", "--b-e", b_e, "two-factor e persistence");
        opts.bind("a-vv", "--a-vv", a_vv, "v loading on the quantile score");
        opts.bind("a-ve", "--a-ve", a_ve, "v loading on the tail-mean score");
        opts.bind("a-ev", "--a-ev", a_ev, "e loading on the quantile score");
        opts.bind("a-ee", "--a-ee", a_ee, "e loading on the tail-mean score");
    }
};

double pick(double flag_value, double fallback) {
    return std::isnan(flag_value) ? fallback : flag_value;
}

int run_nic(NicArgs& a) {
    a.opts.merge_config();
    if (a.fit_path.empty() == a.model.empty())
        throw ValidationError("need exactly one of --fit or --model");
    if (!(a.grid_min < a.grid_max) || a.grid_points < 2)
        throw ValidationError("grid needs min < max and at least two points");
    if (!(a.state_shift > -1.0))
        throw ValidationError("state shift must exceed -1 (the state keeps its sign)");

    std::string model = a.model;
    Gas1fParams g1;
    Gas2fParams g2;
    GarchFzParams gf;
    HybridParams hy;

    if (!a.fit_path.empty()) {
        for (double x : {a.beta, a.gamma, a.delta, a.a_level, a.b_level, a.omega,
                         a.w_v, a.w_e, a.b_v, a.b_e, a.a_vv, a.a_ve, a.a_ev, a.a_ee})
            if (!std::isnan(x))
                throw ValidationError("model parameters conflict with --fit");
        if (!std::isnan(a.alpha))
            throw ValidationError("--alpha conflicts with --fit (the fit file "
                                  "carries its own level)");
        SavedFit fit = load_fit(a.fit_path);
        if (!is_fz_model(fit.model))
            throw ValidationError("news impact curve needs a joint risk model fit, "
                                  "got '" + fit.model + "'");
        model = fit.model;
        a.alpha = fit.alpha;
        const Eigen::VectorXd& t = fit.theta;
        if (model == "gas1f")
            g1 = Gas1fParams{t[0], t[1], t[3] * t[2], t[2]};
        else if (model == "hybrid")
            hy = HybridParams{t[0], t[1], t[2], t[4] * t[3], t[3]};
        else if (model == "garch-fz")
            gf = GarchFzParams{fit.fixed_omega, t[0], t[1], t[3] * t[2], t[2]};
        else
            g2 = Gas2fParams{t[0], t[1], t[2], t[3], t[4], t[5], t[6], t[7]};
        // reflect the loaded parameters in the echo
        a.beta = model == "gas2f" ? a.beta : (model == "garch-fz" ? gf.beta : t[0]);
        a.gamma = model == "gas2f" ? a.gamma : (model == "garch-fz" ? gf.gamma : t[1]);
    } else {
        if (std::isnan(a.alpha)) a.alpha = 0.05;
        TailPair base = normal_tail_pair(AlphaLevel(a.alpha));
        if (model == "gas1f") {
            g1 = Gas1fParams{pick(a.beta, 0.95), pick(a.gamma, -0.03),
                             pick(a.a_level, base.a), pick(a.b_level, base.b)};
        } else if (model == "hybrid") {
            hy = HybridParams{pick(a.beta, 0.95), pick(a.gamma, -0.03),
                              pick(a.delta, 0.01), pick(a.a_level, base.a),
                              pick(a.b_level, base.b)};
        } else if (model == "garch-fz") {
            gf = GarchFzParams{pick(a.omega, 0.05), pick(a.beta, 0.9),
                               pick(a.gamma, 0.05), pick(a.a_level, base.a),
                               pick(a.b_level, base.b)};
        } else if (model == "gas2f") {
            // defaults: persistent factors whose long-run level is the
            // normal tail pair, responding through the tail-mean score
            g2 = Gas2fParams{pick(a.w_v, 0.1 * base.a), pick(a.w_e, 0.1 * base.b),
                             pick(a.b_v, 0.9),          pick(a.b_e, 0.9),
                             pick(a.a_vv, 0.0),         pick(a.a_ve, 0.01),
                             pick(a.a_ev, 0.0),         pick(a.a_ee, 0.01)};
        } else {
            throw ValidationError("unknown model '" + model + "'");
        }
    }

    // long-run state, then the requested shift
    double v0 = 0.0, e0 = 0.0;
    if (model == "gas1f") {
        v0 = g1.a;
        e0 = g1.b;
    } else if (model == "hybrid") {
        v0 = hy.a;
        e0 = hy.b;
    } else if (model == "garch-fz") {
        GarchParams var{gf.omega, gf.beta, gf.gamma};
        double s2 = is_stationary(var) ? gf.omega / (1.0 - gf.beta - gf.gamma) : 1.0;
        v0 = gf.a * std::sqrt(s2);
        e0 = gf.b * std::sqrt(s2);
    } else {
        if (!(std::abs(g2.b_v) < 1.0) || !(std::abs(g2.b_e) < 1.0))
            throw ValidationError("two-factor persistences must lie inside (-1, 1) "
                                  "for a long-run state");
        v0 = g2.w_v / (1.0 - g2.b_v);
        e0 = g2.w_e / (1.0 - g2.b_e);
    }
    v0 *= 1.0 + a.state_shift;
    e0 *= 1.0 + a.state_shift;
    if (!(v0 < 0.0) || !(e0 <= v0))
        throw ValidationError(strprintf("shifted state (v=%g, e=%g) is not a valid "
                                        "risk pair",
                                        v0, e0));

    // resolve remaining defaults into the echo before dumping it
    if (model == "gas1f" || model == "hybrid" || model == "garch-fz") {
        a.beta = model == "garch-fz" ? gf.beta : (model == "gas1f" ? g1.beta : hy.beta);
        a.gamma = model == "garch-fz" ? gf.gamma
                                      : (model == "gas1f" ? g1.gamma : hy.gamma);
        a.a_level = model == "garch-fz" ? gf.a : (model == "gas1f" ? g1.a : hy.a);
        a.b_level = model == "garch-fz" ? gf.b : (model == "gas1f" ? g1.b : hy.b);
        if (model == "hybrid") a.delta = hy.delta;
        if (model == "garch-fz") a.omega = gf.omega;
    } else {
        a.w_v = g2.w_v;
        a.w_e = g2.w_e;
        a.b_v = g2.b_v;
        a.b_e = g2.b_e;
        a.a_vv = g2.a_vv;
        a.a_ve = g2.a_ve;
        a.a_ev = g2.a_ev;
        a.a_ee = g2.a_ee;
    }
    if (a.model.empty()) a.model = model;
    json cfg = a.opts.echo();
    // parameters of the other families stay NaN; drop them from the echo
    for (auto it = cfg.begin(); it != cfg.end();) {
        if (it.value().is_number_float() && !std::isfinite(it.value().get<double>()))
            it = cfg.erase(it);
        else
            ++it;
    }
    std::string comment = "config: " + cfg.dump();

    std::vector<double> grid(a.grid_points);
    double step = (a.grid_max - a.grid_min) / static_cast<double>(a.grid_points - 1);
    for (std::size_t i = 0; i < a.grid_points; ++i)
        grid[i] = a.grid_min + static_cast<double>(i) * step;

    std::vector<NicPoint> curve;
    AlphaLevel alpha(a.alpha);
    if (model == "gas1f")
        curve = news_impact_curve(g1, alpha, v0, e0, grid);
    else if (model == "hybrid")
        curve = news_impact_curve(hy, alpha, v0, e0, grid);
    else if (model == "garch-fz")
        curve = news_impact_curve(gf, v0, e0, grid);
    else
        curve = news_impact_curve(g2, alpha, v0, e0, grid);

    std::string out = a.opts.out_path(a.out);
    std::ofstream file(out);
    if (!file)
        throw IoError("cannot write curve file: " + out);
    file << "# " << comment << '\n' << "y,v_next,e_next\n";
    for (const NicPoint& p : curve)
        file << format_roundtrip(p.y) << ',' << format_roundtrip(p.v_next) << ','
             << format_roundtrip(p.e_next) << '\n';
    if (!file)
        throw IoError("write failed: " + out);

    std::cout << strprintf("nic: model=%s state-shift=%s points=%zu -> %s\n",
                           model.c_str(), format_roundtrip(a.state_shift).c_str(),
                           a.grid_points, out.c_str());
    return 0;
}

} // namespace

// ====================== entry point ======================

int main(int argc, char** argv) {
    CLI::App app{"joint value-at-risk / expected-shortfall modeling toolkit"};
    app.require_subcommand(1);

    SimulateArgs sim(app.add_subcommand(
        "simulate", "draw returns and an exact truth path from a variance-recursion DGP"));
    FitArgs fit(app.add_subcommand("fit", "estimate a risk model on a returns CSV"));
    ForecastArgs fc(app.add_subcommand(
        "forecast", "apply a saved fit or a rolling window to a returns CSV"));
    BacktestArgs bt(app.add_subcommand(
        "backtest", "out-of-sample model comparison with loss and accuracy tests"));
    McArgs mc(app.add_subcommand("mc", "Monte Carlo study of the estimators"));
    NicArgs nic(app.add_subcommand("nic", "news impact curve of a fitted or configured model"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (sim.opts.cmd->parsed()) return run_simulate(sim);
        if (fit.opts.cmd->parsed()) return run_fit(fit);
        if (fc.opts.cmd->parsed()) return run_forecast(fc);
        if (bt.opts.cmd->parsed()) return run_backtest(bt);
        if (mc.opts.cmd->parsed()) return run_mc(mc);
        if (nic.opts.cmd->parsed()) return run_nic(nic);
        std::cerr << "error: no subcommand selected\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
