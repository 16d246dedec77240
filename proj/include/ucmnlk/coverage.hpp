#pragma once

#include "ucmnlk/agent.hpp"

namespace ucmnlk {

/// Outcome of tracking ||theta_hat_t - theta*||_{Sigma_t} against beta_t along one run.
struct CoverageRun {
    bool covered = true;
    double worst_ratio = 0.0; ///< max_t ||theta_hat_t - theta*||_{Sigma_t} / beta_t
    std::size_t first_violation = 0; ///< 0 if none
    std::size_t num_episodes = 0;
    double episode_bound = 0.0;
};

/**
 * Runs UCMNLK on mdp and checks theta* in C_t at t = 1 and after every
 * update, with beta_t computed from the config's c_beta and delta.
 */
inline CoverageRun coverage_run(const MnlMdp& mdp, const AgentConfig& cfg) {
    CoverageRun out;
    const std::size_t u = mdp.max_reachable();
    auto observer = [&](const EstimatorState& st) {
        const Vector diff = st.theta_hat - mdp.theta_star;
        const double dist = std::sqrt(std::max(0.0, diff.dot(st.sigma * diff)));
        const double b = beta(st.t, mdp.dim, u, cfg.delta, cfg.c_beta);
        const double ratio = b > 0.0 ? dist / b : (dist > 0.0 ? INFINITY : 0.0);
        out.worst_ratio = std::max(out.worst_ratio, ratio);
        if (ratio > 1.0 && out.covered) {
            out.covered = false;
            out.first_violation = st.t;
        }
    };
    const RunLog log = run_ucmnlk(mdp, cfg, observer);
    out.num_episodes = log.num_episodes();
    out.episode_bound = episode_count_bound(mdp.dim, log.config.horizon, mdp.l_phi, log.config.lambda);
    return out;
}

} // namespace ucmnlk
