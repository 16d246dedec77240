#pragma once

#include "ucmnlk/agent.hpp"
#include "ucmnlk/hard_instances.hpp"
#include "ucmnlk/instance_io.hpp"
#include "ucmnlk/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace ucmnlk {

inline constexpr const char* kLibraryVersion = "ucmnlk 0.1.0";

enum class AgentKind { ucmnlk, random, oracle_optimal };
enum class Objective { average, discounted };

inline const char* to_string(AgentKind k) {
    switch (k) {
    case AgentKind::ucmnlk: return "ucmnlk";
    case AgentKind::random: return "random";
    default: return "oracle-optimal";
    }
}

/// Either a path to an instance file or the parameters of a built-in family.
struct EnvironmentSpec {
    std::optional<std::string> instance_path;
    std::optional<HardParams> builtin;
};

struct ExperimentConfig {
    EnvironmentSpec environment;
    AgentKind agent = AgentKind::ucmnlk;
    AgentConfig agent_config;
    /// Fill the agent's diameter bound from compute_diameter when it is missing.
    bool auto_diameter = false;
    Objective objective = Objective::average;
    std::optional<double> objective_gamma; ///< defaults to the agent's gamma
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "out";
    std::size_t stride = 100;
    bool full_log = false;
    /// Also write seed_<seed>_estimator.csv (UCMNLK only).
    bool estimator_trace = false;
    std::size_t workers = 0; ///< 0: available parallelism
    double oracle_tol = 1e-10;
};

inline void check(const ExperimentConfig& c) {
    if (c.seeds.empty()) throw ConfigError("seed list is empty");
    std::set<std::uint64_t> uniq(c.seeds.begin(), c.seeds.end());
    if (uniq.size() != c.seeds.size()) throw ConfigError("seeds must be distinct");
    if (c.stride < 1) throw ConfigError("checkpoint stride must be at least 1");
    if (c.agent_config.horizon < 1) throw ConfigError("horizon T must be at least 1");
    if (!c.environment.instance_path && !c.environment.builtin)
        throw ConfigError("environment needs an instance path or builtin parameters");
    if (c.output_dir.empty()) throw ConfigError("output directory is empty");
}

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<double> real_or_tag(const Json& j, const char* key, const std::string& path,
                                         const char* tag) {
    if (!j.contains(key)) return std::nullopt;
    const Json& v = j.at(key);
    if (v.is_string() && v.get<std::string>() == tag) return std::nullopt;
    return as_real(v, path + "/" + key);
}

inline HardParams parse_builtin(const Json& j, const std::string& path) {
    const Json& fam = require(j, path, "family");
    std::vector<int> signs;
    if (fam == "infinite") {
        const std::size_t d = as_count(require(j, path, "d"), path + "/d");
        if (j.contains("signs")) signs = as_signs(j.at("signs"), path + "/signs");
        const std::size_t t = as_count(require(j, path, "T"), path + "/T");
        if (j.contains("D"))
            return InfiniteHardParams::from_horizon(d, HardMode::average,
                                                    as_real(j.at("D"), path + "/D"), t, signs);
        if (j.contains("gamma"))
            return InfiniteHardParams::from_horizon(d, HardMode::discounted,
                                                    as_real(j.at("gamma"), path + "/gamma"), t, signs);
        throw PathError{path, "infinite family needs \"D\" or \"gamma\""};
    }
    if (fam == "finite") {
        std::vector<std::vector<int>> hs;
        if (j.contains("signs")) {
            const Json& js = as_array(j.at("signs"), path + "/signs", kAnySize);
            for (std::size_t h = 0; h < js.size(); ++h)
                hs.push_back(as_signs(js[h], path + "/signs/" + std::to_string(h)));
        }
        return FiniteHardParams::make(as_count(require(j, path, "d"), path + "/d"),
                                      as_count(require(j, path, "H"), path + "/H"),
                                      as_count(require(j, path, "K"), path + "/K"), std::move(hs));
    }
    throw PathError{path + "/family", "expected \"infinite\" or \"finite\""};
}

inline AgentConfig parse_agent_config(const Json& j, const std::string& path, bool& auto_diameter) {
    AgentConfig c;
    if (j.contains("gamma")) {
        const Json& g = j.at("gamma");
        if (!(g.is_string() && g.get<std::string>() == "auto-average"))
            c.gamma = as_real(g, path + "/gamma");
    }
    if (j.contains("n_devi")) {
        const Json& n = j.at("n_devi");
        if (!(n.is_string() && n.get<std::string>() == "auto"))
            c.n_devi = as_count(n, path + "/n_devi");
    }
    if (j.contains("delta")) c.delta = as_real(j.at("delta"), path + "/delta");
    if (j.contains("c_beta")) c.c_beta = as_real(j.at("c_beta"), path + "/c_beta");
    c.lambda = real_or_tag(j, "lambda", path, "default");
    c.eta = real_or_tag(j, "eta", path, "default");
    if (j.contains("polytope_mode")) {
        const Json& m = j.at("polytope_mode");
        if (m == "exact") c.polytope_mode = PolytopeMode::exact;
        else if (m == "simplified") c.polytope_mode = PolytopeMode::simplified;
        else throw PathError{path + "/polytope_mode", "expected \"exact\" or \"simplified\""};
    }
    c.horizon = as_count(require(j, path, "horizon"), path + "/horizon");
    if (j.contains("diameter_bound")) {
        const Json& d = j.at("diameter_bound");
        if (d.is_string() && d.get<std::string>() == "auto") auto_diameter = true;
        else c.diameter_bound = as_real(d, path + "/diameter_bound");
    }
    if (j.contains("initial_state"))
        c.initial_state = as_count(j.at("initial_state"), path + "/initial_state");
    if (j.contains("record_timing")) {
        if (!j.at("record_timing").is_boolean()) throw PathError{path + "/record_timing", "expected a boolean"};
        c.record_timing = j.at("record_timing").get<bool>();
    }
    return c;
}

inline ExperimentConfig parse_experiment_json(const Json& j, const std::filesystem::path& base) {
    if (!j.is_object()) throw PathError{"", "experiment config must be a JSON object"};
    ExperimentConfig c;
    const Json& env = require(j, "", "environment");
    if (env.contains("instance")) {
        const Json& p = env.at("instance");
        if (!p.is_string()) throw PathError{"/environment/instance", "expected a path string"};
        std::filesystem::path ip = p.get<std::string>();
        if (ip.is_relative()) ip = base / ip;
        c.environment.instance_path = ip.string();
    } else if (env.contains("builtin")) {
        c.environment.builtin = parse_builtin(env.at("builtin"), "/environment/builtin");
    } else {
        throw PathError{"/environment", "expected \"instance\" or \"builtin\""};
    }
    const Json& agent = require(j, "", "agent");
    const Json& kind = require(agent, "/agent", "kind");
    if (kind == "ucmnlk") c.agent = AgentKind::ucmnlk;
    else if (kind == "random") c.agent = AgentKind::random;
    else if (kind == "oracle-optimal") c.agent = AgentKind::oracle_optimal;
    else throw PathError{"/agent/kind", "expected \"ucmnlk\", \"random\" or \"oracle-optimal\""};
    c.agent_config = parse_agent_config(agent, "/agent", c.auto_diameter);
    if (j.contains("objective")) {
        const Json& o = j.at("objective");
        if (o == "average") c.objective = Objective::average;
        else if (o == "discounted") c.objective = Objective::discounted;
        else throw PathError{"/objective", "expected \"average\" or \"discounted\""};
    }
    if (j.contains("objective_gamma"))
        c.objective_gamma = as_real(j.at("objective_gamma"), "/objective_gamma");
    if (j.contains("seeds")) {
        const Json& s = as_array(j.at("seeds"), "/seeds", kAnySize);
        for (std::size_t i = 0; i < s.size(); ++i)
            c.seeds.push_back(as_count(s[i], "/seeds/" + std::to_string(i)));
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) throw PathError{"/output_dir", "expected a path string"};
        c.output_dir = j.at("output_dir").get<std::string>();
    }
    if (j.contains("stride")) c.stride = as_count(j.at("stride"), "/stride");
    if (j.contains("full_log")) {
        if (!j.at("full_log").is_boolean()) throw PathError{"/full_log", "expected a boolean"};
        c.full_log = j.at("full_log").get<bool>();
    }
    if (j.contains("estimator_trace")) {
        if (!j.at("estimator_trace").is_boolean()) throw PathError{"/estimator_trace", "expected a boolean"};
        c.estimator_trace = j.at("estimator_trace").get<bool>();
    }
    if (j.contains("workers")) c.workers = as_count(j.at("workers"), "/workers");
    if (j.contains("oracle_tol")) c.oracle_tol = as_real(j.at("oracle_tol"), "/oracle_tol");
    return c;
}

} // namespace detail

/// Parses an experiment config; relative instance paths resolve against base_dir.
inline ExperimentConfig parse_experiment(const std::string& text, const std::string& source = "<config>",
                                         const std::filesystem::path& base_dir = ".") {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        const SourcePos p = position_of(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ConfigError(source + ":" + std::to_string(p.line) + ":" + std::to_string(p.column) +
                          ": JSON syntax error: " + e.what());
    }
    try {
        return detail::parse_experiment_json(j, base_dir);
    } catch (const detail::PathError& e) {
        const auto offsets = locate_pointers(text);
        throw ConfigError(detail::format_at(source, locate(text, offsets, e.path), e.path, e.message));
    }
}

inline ExperimentConfig load_experiment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment(ss.str(), path, std::filesystem::path(path).parent_path());
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

/// Decimal with 17 significant digits.
inline std::string format_real(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + p.string() + " for writing");
    out << s;
    if (!out) throw ConfigError("failed writing " + p.string());
}

/// Snapshot times: every stride-th step plus the final step.
inline std::vector<std::size_t> snapshot_grid(std::size_t horizon, std::size_t stride) {
    std::vector<std::size_t> out;
    for (std::size_t t = stride; t <= horizon; t += stride) out.push_back(t);
    if (out.empty() || out.back() != horizon) out.push_back(horizon);
    return out;
}

inline Json resolved_config_to_json(const ResolvedConfig& c) {
    Json j{{"mode", c.average_mode ? "auto-average" : "discounted"},
           {"gamma", c.gamma},
           {"n_devi", c.n_devi},
           {"delta", c.delta},
           {"c_beta", c.c_beta},
           {"lambda", c.lambda},
           {"eta", c.eta},
           {"polytope_mode", c.polytope_mode == PolytopeMode::exact ? "exact" : "simplified"},
           {"horizon", c.horizon},
           {"seed", c.seed},
           {"initial_state", c.initial_state},
           {"record_timing", c.record_timing}};
    j["diameter_bound"] = c.diameter_bound ? Json(*c.diameter_bound) : Json(nullptr);
    return j;
}

/// Regret after every step, index t - 1.
struct RegretTrace {
    std::vector<double> regret;
};

/**
 * Average objective: regret(t) = regret(t-1) + J* - r_t, i.e. t J* minus the
 * collected reward, accumulated step by step.
 */
inline RegretTrace average_regret(const RunLog& log, double gain) {
    RegretTrace tr;
    tr.regret.reserve(log.steps.size());
    double acc = 0.0;
    for (const auto& st : log.steps) {
        acc += gain - st.reward;
        tr.regret.push_back(acc);
    }
    return tr;
}

/// V of the policy choosing uniformly among all actions.
inline Vector evaluate_uniform_discounted(const MnlModel& m, const TransitionTable& tt, double gamma) {
    const auto n = static_cast<Eigen::Index>(m.num_states);
    const Vector r = m.rewards.rowwise().mean();
    const Matrix a = Matrix::Identity(n, n) - gamma * uniform_policy_matrix(m, tt);
    return a.partialPivLu().solve(r);
}

/**
 * Discounted objective: sum over visited states of V*(s_t) - V^{pi_k(t)}(s_t),
 * where pi_k(t) is the stationary policy of the episode active at t.
 */
inline RegretTrace discounted_regret(const RunLog& log, const MnlModel& m, const TransitionTable& tt,
                                     const Vector& v_star, double gamma, bool uniform_policy) {
    std::vector<Vector> values;
    if (uniform_policy) {
        values.push_back(evaluate_uniform_discounted(m, tt, gamma));
    } else {
        for (const auto& ep : log.episodes)
            values.push_back(evaluate_policy_discounted(m, tt, ep.policy, gamma, 1e-12));
    }
    RegretTrace tr;
    tr.regret.reserve(log.steps.size());
    double acc = 0.0;
    for (const auto& st : log.steps) {
        const Vector& v = values[uniform_policy ? 0 : st.episode - 1];
        const auto s = static_cast<Eigen::Index>(st.state);
        acc += v_star[s] - v[s];
        tr.regret.push_back(acc);
    }
    return tr;
}

inline std::string step_table_csv(const RunLog& log, const RegretTrace& tr, std::size_t stride,
                                  bool full) {
    std::string out = "t,state,action,reward,episode,cum_reward,regret\n";
    double cum = 0.0;
    std::size_t next_snap = stride;
    for (std::size_t i = 0; i < log.steps.size(); ++i) {
        const auto& st = log.steps[i];
        cum += st.reward;
        const bool last = i + 1 == log.steps.size();
        if (full || st.t == next_snap || last) {
            out += std::to_string(st.t) + "," + std::to_string(st.state) + "," +
                   std::to_string(st.action) + "," + format_real(st.reward) + "," +
                   std::to_string(st.episode) + "," + format_real(cum) + "," +
                   format_real(tr.regret[i]) + "\n";
        }
        if (st.t == next_snap) next_snap += stride;
    }
    return out;
}

inline std::string episode_table_csv(const RunLog& log) {
    std::string out = "episode,start,logdet_sigma,beta,devi_gap,devi_monotone,planning_seconds\n";
    for (std::size_t k = 0; k < log.episodes.size(); ++k) {
        const auto& e = log.episodes[k];
        out += std::to_string(k + 1) + "," + std::to_string(e.start) + "," +
               format_real(e.logdet_sigma) + "," + format_real(e.beta) + "," +
               format_real(e.devi_gap) + "," + (e.devi_monotone ? "1" : "0") + "," +
               format_real(e.planning_seconds) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// (t, regret) columns of a per-seed CSV.
struct RegretCurve {
    std::vector<std::size_t> t;
    std::vector<double> regret;
};

inline RegretCurve read_regret_curve(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw AggregationError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw AggregationError(path + ": empty file");
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    const auto ti = std::find(header.begin(), header.end(), "t") - header.begin();
    const auto ri = std::find(header.begin(), header.end(), "regret") - header.begin();
    if (ti == static_cast<long>(header.size()) || ri == static_cast<long>(header.size()))
        throw AggregationError(path + ": missing t or regret column");
    RegretCurve c;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != header.size())
            throw AggregationError(path + ":" + std::to_string(lineno) + ": wrong number of columns");
        try {
            c.t.push_back(std::stoull(cells[static_cast<std::size_t>(ti)]));
            c.regret.push_back(std::stod(cells[static_cast<std::size_t>(ri)]));
        } catch (const std::exception&) {
            throw AggregationError(path + ":" + std::to_string(lineno) + ": unparsable number");
        }
    }
    return c;
}

/// Linear-interpolation quantile of sorted data (q in [0, 1]).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw ArgumentError("quantile of empty data");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct AggregateRow {
    std::size_t t = 0;
    double mean = 0.0, median = 0.0, q25 = 0.0, q75 = 0.0;
    std::size_t n_seeds = 0;
};

inline std::vector<AggregateRow> aggregate_curves(const std::vector<RegretCurve>& curves,
                                                  const std::vector<std::string>& names = {}) {
    if (curves.empty()) throw AggregationError("nothing to aggregate");
    std::vector<std::string> offenders;
    for (std::size_t i = 1; i < curves.size(); ++i)
        if (curves[i].t != curves[0].t)
            offenders.push_back(i < names.size() ? names[i] : "#" + std::to_string(i));
    if (!offenders.empty()) {
        std::string msg = "snapshot grids differ from " + (names.empty() ? std::string("#0") : names[0]) + ":";
        for (const auto& o : offenders) msg += " " + o;
        throw AggregationError(msg);
    }
    std::vector<AggregateRow> rows;
    std::vector<double> col(curves.size());
    for (std::size_t r = 0; r < curves[0].t.size(); ++r) {
        double sum = 0.0;
        for (std::size_t i = 0; i < curves.size(); ++i) {
            col[i] = curves[i].regret[r];
            sum += col[i];
        }
        std::sort(col.begin(), col.end());
        rows.push_back({curves[0].t[r], sum / static_cast<double>(col.size()), quantile_sorted(col, 0.5),
                        quantile_sorted(col, 0.25), quantile_sorted(col, 0.75), col.size()});
    }
    return rows;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
    std::string out = "t,mean_regret,median,q25,q75,n_seeds\n";
    for (const auto& r : rows)
        out += std::to_string(r.t) + "," + format_real(r.mean) + "," + format_real(r.median) + "," +
               format_real(r.q25) + "," + format_real(r.q75) + "," + std::to_string(r.n_seeds) + "\n";
    return out;
}

/// Reads per-seed CSVs and writes the aggregate table to out_path.
inline std::vector<AggregateRow> aggregate(const std::vector<std::string>& paths,
                                           const std::string& out_path) {
    std::vector<RegretCurve> curves;
    for (const auto& p : paths) curves.push_back(read_regret_curve(p));
    auto rows = aggregate_curves(curves, paths);
    write_text(out_path, aggregate_csv(rows));
    return rows;
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

struct SeedResult {
    std::uint64_t seed = 0;
    std::string csv_path;
    bool ok = false;
    std::string error;
    int exit_code = 0;
    double final_regret = 0.0;
    double cumulative_reward = 0.0;
    std::size_t num_episodes = 0;
    double episode_bound = 0.0; ///< 1 + d log2(1 + 2 T L_phi^2 / lambda), UCMNLK only
    RegretCurve curve;          ///< snapshot grid
    std::optional<ResolvedConfig> resolved;
};

struct ExperimentResult {
    std::vector<SeedResult> seeds;
    std::string aggregate_path;
    std::string metadata_path;
    std::vector<AggregateRow> aggregate;
    std::optional<double> optimal_gain;
    std::optional<double> diameter;
};

/// A failed experiment; partial outputs and the error manifest are on disk.
class ExperimentFailed : public Error {
  public:
    ExperimentFailed(const std::string& what, int exit_code, ExperimentResult partial)
        : Error(what), exit_code_(exit_code), partial_(std::move(partial)) {}
    int exit_code() const { return exit_code_; }
    const ExperimentResult& partial() const { return partial_; }

  private:
    int exit_code_;
    ExperimentResult partial_;
};

inline LoadedInstance materialize(const EnvironmentSpec& env) {
    if (env.instance_path) return load_instance(*env.instance_path);
    LoadedInstance out;
    out.hard = *env.builtin;
    out.mdp = std::visit(
        [](const auto& p) -> MnlMdp {
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, InfiniteHardParams>)
                return build_infinite(p);
            else
                return build_finite(p);
        },
        *env.builtin);
    return out;
}

namespace detail {

inline Json summarize(const Vector& v) {
    return Json{{"min", v.minCoeff()}, {"max", v.maxCoeff()}, {"mean", v.mean()}};
}

inline void write_manifest(const std::filesystem::path& dir, const Json& errors) {
    write_text(dir / "errors.json", errors.dump(1) + "\n");
}

} // namespace detail

/**
 * Runs the configured agent once per seed (concurrently), computes regret
 * against the oracle and writes:
 *   seed_<seed>.csv           snapshot rows t,state,action,reward,episode,cum_reward,regret
 *   seed_<seed>_episodes.csv  per-episode planning records
 *   seed_<seed>.json          run header (resolved config, totals)
 *   aggregate.csv, metadata.json, and errors.json on failure.
 */
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    check(cfg);
    namespace fs = std::filesystem;
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    ExperimentResult result;
    Json meta;
    meta["library_version"] = kLibraryVersion;
    meta["agent"] = to_string(cfg.agent);
    meta["seeds"] = cfg.seeds;
    meta["stride"] = cfg.stride;
    meta["full_log"] = cfg.full_log;

    LoadedInstance inst;
    TransitionTable tt;
    Vector v_star;
    Policy oracle_policy;
    AgentConfig agent_cfg = cfg.agent_config;
    double obj_gamma = 0.0;
    try {
        inst = materialize(cfg.environment);
        const MnlMdp& m = inst.mdp;
        tt = true_transitions(m);
        Json summary{{"d", m.dim}, {"S", m.num_states}, {"A", m.num_actions}, {"U", m.max_reachable()},
                     {"l_phi", m.l_phi}, {"l_theta", m.l_theta}};
        if (inst.hard) summary["hard_instance"] = hard_params_to_json(*inst.hard);
        const bool need_d = cfg.auto_diameter && !agent_cfg.diameter_bound;
        if (need_d || cfg.objective == Objective::average) {
            try {
                result.diameter = compute_diameter(m, 1e-9);
                summary["D"] = *result.diameter;
            } catch (const DiameterInfiniteError&) {
                if (need_d) throw;
                summary["D"] = nullptr;
            }
        }
        if (need_d) agent_cfg.diameter_bound = result.diameter;
        if (cfg.objective == Objective::average) {
            const ValueTable vt = solve_average(m, tt, cfg.oracle_tol);
            result.optimal_gain = vt.gain;
            summary["J_star"] = *vt.gain;
            summary["bias"] = detail::summarize(vt.v);
            oracle_policy = greedy_policy(vt.q);
            meta["regret_definition"] = "t*J_star - cumulative_reward";
        } else {
            if (cfg.objective_gamma) obj_gamma = *cfg.objective_gamma;
            else if (agent_cfg.gamma) obj_gamma = *agent_cfg.gamma;
            else throw ConfigError("discounted objective needs objective_gamma or a numeric agent gamma");
            const ValueTable vt = solve_discounted(m, tt, obj_gamma, cfg.oracle_tol);
            v_star = vt.v;
            summary["objective_gamma"] = obj_gamma;
            summary["V_star"] = detail::summarize(vt.v);
            oracle_policy = greedy_policy(vt.q);
            meta["regret_definition"] = "per-episode-stationary-surrogate";
        }
        meta["objective"] = cfg.objective == Objective::average ? "average" : "discounted";
        meta["instance"] = std::move(summary);
    } catch (const std::exception& e) {
        detail::write_manifest(dir, Json::array({{{"stage", "setup"}, {"error", e.what()},
                                                  {"exit_code", exit_code_for(e)}}}));
        write_text(dir / "metadata.json", meta.dump(1) + "\n");
        throw ExperimentFailed(std::string("experiment setup failed: ") + e.what(), exit_code_for(e),
                               std::move(result));
    }

    const MnlMdp& mdp = inst.mdp;
    result.seeds.resize(cfg.seeds.size());
    auto run_seed = [&](std::size_t idx) {
        SeedResult& sr = result.seeds[idx];
        sr.seed = cfg.seeds[idx];
        const std::string stem = "seed_" + std::to_string(sr.seed);
        sr.csv_path = (dir / (stem + ".csv")).string();
        AgentConfig ac = agent_cfg;
        ac.seed = sr.seed;
        RunLog log;
        try {
            try {
                if (cfg.agent == AgentKind::ucmnlk) {
                    Environment env(mdp, sr.seed);
                    std::string trace;
                    EstimatorObserver obs;
                    if (cfg.estimator_trace) {
                        trace = "t,err_l2,err_sigma,beta,logdet_sigma\n";
                        const std::size_t u = mdp.max_reachable();
                        obs = [&](const EstimatorState& st) {
                            if (st.t != 1 && st.t % cfg.stride != 0 && !cfg.full_log) return;
                            const Vector diff = st.theta_hat - mdp.theta_star;
                            trace += std::to_string(st.t) + "," + format_real(diff.norm()) + "," +
                                     format_real(std::sqrt(std::max(0.0, diff.dot(st.sigma * diff)))) + "," +
                                     format_real(beta(st.t, mdp.dim, u, ac.delta, ac.c_beta)) + "," +
                                     format_real(st.logdet_sigma) + "\n";
                        };
                    }
                    log = run_ucmnlk(mdp.model(), env, ac, obs);
                    if (cfg.estimator_trace) write_text(dir / (stem + "_estimator.csv"), trace);
                    sr.resolved = log.config;
                    sr.episode_bound =
                        episode_count_bound(mdp.dim, log.config.horizon, mdp.l_phi, log.config.lambda);
                } else if (cfg.agent == AgentKind::random) {
                    log = run_random(mdp, ac);
                } else {
                    log = run_policy(mdp, oracle_policy, ac);
                }
            } catch (RunAborted& e) {
                log = e.partial();
                throw;
            }
            const RegretTrace tr =
                cfg.objective == Objective::average
                    ? average_regret(log, *result.optimal_gain)
                    : discounted_regret(log, mdp, tt, v_star, obj_gamma, cfg.agent == AgentKind::random);
            write_text(sr.csv_path, step_table_csv(log, tr, cfg.stride, cfg.full_log));
            write_text(dir / (stem + "_episodes.csv"), episode_table_csv(log));
            Json header{{"agent", log.agent},
                        {"seed", sr.seed},
                        {"resolved_config", resolved_config_to_json(log.config)},
                        {"cumulative_reward", log.cumulative_reward},
                        {"K_T", log.num_episodes()},
                        {"final_regret", tr.regret.empty() ? 0.0 : tr.regret.back()}};
            if (cfg.agent == AgentKind::ucmnlk) header["episode_bound"] = sr.episode_bound;
            write_text(dir / (stem + ".json"), header.dump(1) + "\n");
            sr.cumulative_reward = log.cumulative_reward;
            sr.num_episodes = log.num_episodes();
            sr.final_regret = tr.regret.empty() ? 0.0 : tr.regret.back();
            for (std::size_t t : snapshot_grid(log.steps.size(), cfg.stride)) {
                sr.curve.t.push_back(t);
                sr.curve.regret.push_back(tr.regret[t - 1]);
            }
            sr.ok = true;
        } catch (const std::exception& e) {
            sr.ok = false;
            sr.error = e.what();
            sr.exit_code = dynamic_cast<const RunAborted*>(&e)
                               ? static_cast<const RunAborted&>(e).exit_code()
                               : exit_code_for(e);
            // keep whatever was logged before the failure
            if (!log.steps.empty() && cfg.objective == Objective::average) {
                try {
                    write_text(dir / (stem + "_partial.csv"),
                               step_table_csv(log, average_regret(log, *result.optimal_gain), cfg.stride,
                                              cfg.full_log));
                } catch (const std::exception&) {
                }
            }
        }
    };

    std::size_t workers = cfg.workers ? cfg.workers : std::max(1U, std::thread::hardware_concurrency());
    workers = std::min(workers, cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) run_seed(i);
        });
    for (auto& th : pool) th.join();

    Json errors = Json::array();
    int first_code = 0;
    std::vector<RegretCurve> curves;
    std::vector<std::string> names;
    for (const auto& sr : result.seeds) {
        if (!sr.ok) {
            errors.push_back({{"stage", "seed"}, {"seed", sr.seed}, {"error", sr.error},
                              {"exit_code", sr.exit_code}});
            if (!first_code) first_code = sr.exit_code;
            continue;
        }
        curves.push_back(sr.curve);
        names.push_back(sr.csv_path);
    }
    for (const auto& sr : result.seeds)
        if (sr.resolved) {
            Json rc = resolved_config_to_json(*sr.resolved);
            rc.erase("seed");
            meta["resolved_config"] = rc;
            break;
        }
    if (!meta.contains("resolved_config")) {
        meta["resolved_config"] = Json{{"horizon", agent_cfg.horizon},
                                       {"initial_state", agent_cfg.initial_state}};
    }
    if (!curves.empty()) {
        result.aggregate = aggregate_curves(curves, names);
        result.aggregate_path = (dir / "aggregate.csv").string();
        write_text(result.aggregate_path, aggregate_csv(result.aggregate));
    }
    result.metadata_path = (dir / "metadata.json").string();
    write_text(result.metadata_path, meta.dump(1) + "\n");
    if (!errors.empty()) {
        detail::write_manifest(dir, errors);
        throw ExperimentFailed(std::to_string(errors.size()) + " seed run(s) failed; see " +
                                   (dir / "errors.json").string(),
                               first_code ? first_code : 1, std::move(result));
    }
    return result;
}

} // namespace ucmnlk
