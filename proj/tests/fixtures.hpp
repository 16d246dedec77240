#pragma once

#include "ucmnlk/ucmnlk.hpp"

namespace fixtures {

using namespace ucmnlk;

/// S states, A actions, every pair has `u` reachable states with all-zero features.
inline MnlMdp zero_feature_mdp(std::size_t s, std::size_t a, std::size_t u, std::size_t d = 2) {
    MnlMdp m;
    m.num_states = s;
    m.num_actions = a;
    m.dim = d;
    m.rewards = Matrix::Constant(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a), 0.5);
    for (std::size_t x = 0; x < s; ++x)
        for (std::size_t b = 0; b < a; ++b) {
            std::vector<StateId> r;
            for (std::size_t k = 0; k < u; ++k) r.push_back((x + k) % s);
            m.reachable.push_back(r);
            m.features.push_back(Matrix::Zero(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(d)));
        }
    m.theta_star = Vector::Zero(static_cast<Eigen::Index>(d));
    m.l_phi = 1.0;
    m.l_theta = 1.0;
    return m;
}

/// Deterministic cycle 0 -> 1 -> ... -> n-1 -> 0, one action.
inline MnlMdp cycle_mdp(std::size_t n) {
    MnlMdp m = zero_feature_mdp(n, 1, 1);
    for (std::size_t s = 0; s < n; ++s) m.reachable[s] = {(s + 1) % n};
    return m;
}

inline MnlMdp random_instance(std::uint64_t seed, std::size_t s = 4, std::size_t a = 2, std::size_t d = 3,
                              std::size_t u = 3) {
    RandomMdpSpec params;
    params.num_states = s;
    params.num_actions = a;
    params.dim = d;
    params.max_reachable = u;
    Rng rng = derive_rng(seed, 99);
    return random_mdp(params, rng);
}

/// Two-state lower-bound instance with given delta and a Delta small enough for every inequality.
inline InfiniteHardParams infinite_params(std::size_t d, double delta) {
    return InfiniteHardParams::from_gap(d, delta, delta / 200.0);
}

} // namespace fixtures
