#pragma once

#include "ucmnlk/mnl_mdp.hpp"

#include <numeric>

namespace ucmnlk {

struct RandomMdpSpec {
    std::size_t num_states = 4;
    std::size_t num_actions = 2;
    std::size_t dim = 3;
    std::size_t max_reachable = 3; ///< U
    double l_phi = 1.0;
    double l_theta = 1.0;
    /// Always include (s + 1) mod S in S_{s,a}, which makes the MDP communicating.
    bool communicating = true;
};

/**
 * Random recentered MNL MDP. Reachable sets have between 1 (2 when
 * communicating) and U states, the first reachable state carries the zero
 * feature, the remaining features have uniformly random direction and norm in
 * [0, l_phi], theta* is uniform in the l_theta ball, rewards uniform in [0, 1].
 */
inline MnlMdp random_mdp(const RandomMdpSpec& params, Rng& rng) {
    if (params.num_states == 0 || params.num_actions == 0 || params.dim == 0 || params.max_reachable == 0)
        throw ArgumentError("random_mdp: all sizes must be positive");
    MnlMdp m;
    m.num_states = params.num_states;
    m.num_actions = params.num_actions;
    m.dim = params.dim;
    m.l_phi = params.l_phi;
    m.l_theta = params.l_theta;
    m.rewards.resize(static_cast<Eigen::Index>(params.num_states),
                     static_cast<Eigen::Index>(params.num_actions));
    const std::size_t u_max = std::min(params.max_reachable, params.num_states);
    const std::size_t u_min = params.communicating ? std::min<std::size_t>(2, u_max) : 1;
    std::vector<StateId> pool(params.num_states);
    for (StateId s = 0; s < params.num_states; ++s) {
        for (ActionId a = 0; a < params.num_actions; ++a) {
            m.rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = uniform01(rng);
            const std::size_t size = u_min + uniform_index(rng, u_max - u_min + 1);
            pool.resize(params.num_states);
            std::iota(pool.begin(), pool.end(), StateId{0});
            std::vector<StateId> reach;
            if (params.communicating && params.num_states > 1) {
                const StateId succ = (s + 1) % params.num_states;
                reach.push_back(succ);
                pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(succ));
            }
            while (reach.size() < size) {
                const std::size_t k = uniform_index(rng, pool.size());
                reach.push_back(pool[k]);
                pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
            }
            // shuffle so the guaranteed successor is not always first
            for (std::size_t i = reach.size(); i > 1; --i)
                std::swap(reach[i - 1], reach[uniform_index(rng, i)]);
            Matrix f = Matrix::Zero(static_cast<Eigen::Index>(reach.size()),
                                    static_cast<Eigen::Index>(params.dim));
            for (Eigen::Index k = 1; k < f.rows(); ++k) {
                const Vector dir = sample_ball(params.dim, 1.0, rng);
                const double n = dir.norm();
                if (n > 0) f.row(k) = dir.transpose() * (params.l_phi * uniform01(rng) / n);
            }
            m.reachable.push_back(std::move(reach));
            m.features.push_back(std::move(f));
        }
    }
    m.theta_star = sample_ball(params.dim, params.l_theta, rng);
    return m;
}

} // namespace ucmnlk
