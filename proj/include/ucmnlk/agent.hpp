#pragma once

#include "ucmnlk/devi.hpp"
#include "ucmnlk/estimator.hpp"
#include "ucmnlk/oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ucmnlk {

/**
 * User-facing agent configuration. Unset optionals mean "auto":
 * gamma unset selects the average-reward reduction, n_devi / lambda / eta
 * unset select default_lambda / default_eta.
 */
struct AgentConfig {
    std::optional<double> gamma;
    std::optional<std::size_t> n_devi;
    double delta = 0.1;
    double c_beta = 1.0;
    std::optional<double> lambda;
    std::optional<double> eta;
    PolytopeMode polytope_mode = PolytopeMode::exact;
    std::size_t horizon = 1;
    std::uint64_t seed = 0;
    /// Known diameter bound D; required in average mode.
    std::optional<double> diameter_bound;
    StateId initial_state = 0;
    bool record_timing = false;
};

/// AgentConfig with every "auto" value replaced by a number.
struct ResolvedConfig {
    bool average_mode = false;
    double gamma = 0.0;
    std::size_t n_devi = 1;
    double delta = 0.1;
    double c_beta = 1.0;
    double lambda = 1.0;
    double eta = 1.0;
    PolytopeMode polytope_mode = PolytopeMode::exact;
    std::size_t horizon = 1;
    std::uint64_t seed = 0;
    std::optional<double> diameter_bound;
    StateId initial_state = 0;
    bool record_timing = false;
};

/// The quantities of a model the auto rules depend on.
struct ModelSummary {
    std::size_t dim = 1;
    std::size_t max_reachable = 1;
    double l_theta = 0.0;
    double l_phi = 0.0;

    static ModelSummary of(const MnlModel& m) {
        return {m.dim, m.max_reachable(), m.l_theta, m.l_phi};
    }
};

inline std::size_t ceil_rounds(double x) {
    if (!(x >= 1.0)) return 1;
    return static_cast<std::size_t>(std::ceil(x));
}

/**
 * Fills the auto values.
 *
 * average mode: gamma = 1 - sqrt(d / (D T)), N = ceil(sqrt(D T / d) log(sqrt(T) / (d D)))
 * discounted:   N = ceil(log(sqrt(T) / d) / (1 - gamma))
 * Both N rules are floored at 1. eta and lambda default to
 * (1/2) log U + L_theta L_phi + 1 and 84 sqrt(2) (L_theta L_phi^3 + d L_phi^2) eta.
 */
inline ResolvedConfig resolve_auto(const AgentConfig& c, const ModelSummary& ms) {
    if (!(c.delta > 0.0 && c.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (c.horizon < 1) throw ConfigError("horizon T must be at least 1");
    if (!(c.c_beta >= 0.0)) throw ConfigError("c_beta must be non-negative");
    ResolvedConfig r;
    r.delta = c.delta;
    r.c_beta = c.c_beta;
    r.polytope_mode = c.polytope_mode;
    r.horizon = c.horizon;
    r.seed = c.seed;
    r.diameter_bound = c.diameter_bound;
    r.initial_state = c.initial_state;
    r.record_timing = c.record_timing;
    const double d = static_cast<double>(ms.dim);
    const double t = static_cast<double>(c.horizon);
    if (!c.gamma) {
        if (!c.diameter_bound)
            throw ConfigError("average-reward mode needs a diameter bound D");
        const double dd = *c.diameter_bound;
        if (!(dd > 0.0)) throw ConfigError("diameter bound must be positive");
        r.average_mode = true;
        r.gamma = 1.0 - std::sqrt(d / (dd * t));
        if (!(r.gamma >= 0.0 && r.gamma < 1.0))
            throw ConfigError("auto gamma = 1 - sqrt(d/(D T)) falls outside [0, 1); increase T");
        r.n_devi = c.n_devi ? *c.n_devi
                            : ceil_rounds(std::sqrt(dd * t / d) * std::log(std::sqrt(t) / (d * dd)));
    } else {
        r.gamma = *c.gamma;
        if (!(r.gamma >= 0.0 && r.gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
        r.n_devi = c.n_devi ? *c.n_devi : ceil_rounds(std::log(std::sqrt(t) / d) / (1.0 - r.gamma));
    }
    if (r.n_devi < 1) throw ConfigError("number of DEVI rounds must be at least 1");
    r.eta = c.eta ? *c.eta : default_eta(ms.max_reachable, ms.l_theta, ms.l_phi);
    r.lambda = c.lambda ? *c.lambda : default_lambda(ms.dim, ms.l_theta, ms.l_phi, r.eta);
    if (!(r.lambda > 0.0)) throw ConfigError("lambda must be positive");
    if (!(r.eta >= 0.0)) throw ConfigError("eta must be non-negative");
    return r;
}

struct StepRecord {
    std::size_t t = 0;
    StateId state = 0;
    ActionId action = 0;
    double reward = 0.0;
    std::size_t episode = 0; ///< 1-based
    StateId next_state = 0;
};

struct EpisodeRecord {
    std::size_t start = 0; ///< t_k
    double logdet_sigma = 0.0;
    double beta = 0.0;
    double devi_gap = 0.0;
    bool devi_monotone = true;
    double planning_seconds = 0.0;
    Policy policy;
    Vector value; ///< V_k = max_a Q_k
};

struct RunLog {
    ResolvedConfig config;
    std::string agent = "ucmnlk";
    std::vector<StepRecord> steps;
    std::vector<EpisodeRecord> episodes;
    double cumulative_reward = 0.0;

    std::size_t num_episodes() const { return episodes.size(); }
};

/// A run that stopped early; carries the partial log and the original error.
class RunAborted : public Error {
  public:
    RunAborted(const std::string& what, RunLog partial, int exit_code)
        : Error(what), partial_(std::move(partial)), exit_code_(exit_code) {}
    const RunLog& partial() const { return partial_; }
    int exit_code() const { return exit_code_; }

  private:
    RunLog partial_;
    int exit_code_;
};

/// 1 + d log2(1 + 2 T L_phi^2 / lambda): the episode-count bound.
inline double episode_count_bound(std::size_t d, std::size_t horizon, double l_phi, double lambda) {
    return 1.0 + static_cast<double>(d) *
                     std::log2(1.0 + 2.0 * static_cast<double>(horizon) * l_phi * l_phi / lambda);
}

/// Environment handle: samples from the true model with its own random stream.
class Environment {
  public:
    Environment(const MnlMdp& mdp, std::uint64_t seed) : mdp_(&mdp), rng_(derive_rng(seed, 1)) {}

    TransitionSample step(StateId s, ActionId a) { return sample_transition(*mdp_, s, a, rng_); }

    const MnlModel& model() const { return *mdp_; }

  private:
    const MnlMdp* mdp_;
    Rng rng_;
};

using EstimatorObserver = std::function<void(const EstimatorState&)>;

/**
 * UCMNLK: episodes of (plan with DEVI on the current confidence polytope,
 * act greedily) separated by determinant doubling of Sigma_t. The agent only
 * reads the learner-visible model; transitions come from `env`.
 *
 * The observer, if set, sees the estimator state at t = 1 and after every
 * update.
 */
inline RunLog run_ucmnlk(const MnlModel& model, Environment& env, const AgentConfig& config,
                         const EstimatorObserver& observer = {}) {
    RunLog log;
    log.config = resolve_auto(config, ModelSummary::of(model));
    const ResolvedConfig& cfg = log.config;
    if (cfg.initial_state >= model.num_states) throw ConfigError("initial state out of range");
    const std::size_t u = model.max_reachable();
    log.steps.reserve(cfg.horizon);
    try {
        EstimatorState est = EstimatorState::initial(model.dim, cfg.lambda, cfg.eta, model.l_theta);
        if (observer) observer(est);
        StateId s = cfg.initial_state;
        std::size_t t = 1;
        while (t <= cfg.horizon) {
            EpisodeRecord ep;
            ep.start = t;
            ep.logdet_sigma = est.logdet_sigma;
            const auto t0 = std::chrono::steady_clock::now();
            ep.beta = beta(t, model.dim, u, cfg.delta, cfg.c_beta);
            const auto poly = build_polytope(est, model, ep.beta, cfg.polytope_mode);
            const auto plan = devi(model, poly, cfg.gamma, cfg.n_devi);
            ep.policy = greedy_policy(plan.q);
            ep.value = plan.v;
            ep.devi_gap = plan.final_gap;
            ep.devi_monotone = plan.monotone;
            if (cfg.record_timing)
                ep.planning_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const double logdet_start = est.logdet_sigma;
            log.episodes.push_back(std::move(ep));
            const std::size_t k = log.episodes.size();
            const Policy& pi = log.episodes.back().policy;
            while (t <= cfg.horizon) {
                const ActionId a = pi[s];
                const TransitionSample x = env.step(s, a);
                const double r = model.rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
                log.steps.push_back({t, s, a, r, k, x.next_state});
                log.cumulative_reward += r;
                est = update(est, x);
                if (observer) observer(est);
                s = x.next_state;
                ++t;
                if (est.logdet_sigma > logdet_start + std::log(2.0)) break;
            }
        }
    } catch (const Error& e) {
        throw RunAborted(e.what(), std::move(log), exit_code_for(e));
    }
    return log;
}

/// Convenience overload: fresh environment seeded from the config.
inline RunLog run_ucmnlk(const MnlMdp& mdp, const AgentConfig& config,
                         const EstimatorObserver& observer = {}) {
    Environment env(mdp, config.seed);
    return run_ucmnlk(mdp.model(), env, config, observer);
}

/// Baseline choosing actions uniformly at random (one episode).
inline RunLog run_random(const MnlMdp& mdp, const AgentConfig& config) {
    RunLog log;
    log.agent = "random";
    log.config.horizon = config.horizon;
    log.config.seed = config.seed;
    log.config.initial_state = config.initial_state;
    if (config.horizon < 1) throw ConfigError("horizon T must be at least 1");
    if (config.initial_state >= mdp.num_states) throw ConfigError("initial state out of range");
    Environment env(mdp, config.seed);
    Rng rng = derive_rng(config.seed, 2);
    log.episodes.push_back(EpisodeRecord{});
    StateId s = config.initial_state;
    for (std::size_t t = 1; t <= config.horizon; ++t) {
        const ActionId a = uniform_index(rng, mdp.num_actions);
        const TransitionSample x = env.step(s, a);
        const double r = mdp.rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
        log.steps.push_back({t, s, a, r, 1, x.next_state});
        log.cumulative_reward += r;
        s = x.next_state;
    }
    return log;
}

/// Baseline following a fixed stationary policy (one episode).
inline RunLog run_policy(const MnlMdp& mdp, const Policy& pi, const AgentConfig& config,
                         const std::string& name = "oracle-optimal") {
    if (pi.size() != mdp.num_states) throw ArgumentError("policy size does not match num_states");
    if (config.horizon < 1) throw ConfigError("horizon T must be at least 1");
    if (config.initial_state >= mdp.num_states) throw ConfigError("initial state out of range");
    RunLog log;
    log.agent = name;
    log.config.horizon = config.horizon;
    log.config.seed = config.seed;
    log.config.initial_state = config.initial_state;
    Environment env(mdp, config.seed);
    EpisodeRecord ep;
    ep.start = 1;
    ep.policy = pi;
    log.episodes.push_back(std::move(ep));
    StateId s = config.initial_state;
    for (std::size_t t = 1; t <= config.horizon; ++t) {
        const ActionId a = pi[s];
        const TransitionSample x = env.step(s, a);
        const double r = mdp.rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
        log.steps.push_back({t, s, a, r, 1, x.next_state});
        log.cumulative_reward += r;
        s = x.next_state;
    }
    return log;
}

} // namespace ucmnlk
