#pragma once

#include "ucmnlk/errors.hpp"
#include "ucmnlk/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

namespace ucmnlk {

using StateId = std::size_t;
using ActionId = std::size_t;

/**
 * Everything a learner is allowed to see about an MNL-transition MDP:
 * the reachable sets, the feature map, the rewards and the declared bounds.
 *
 * Pairs (s, a) are stored row-major, pair index s * num_actions + a. For each
 * pair, features[pair] is a |S_{s,a}| x dim matrix whose k-th row is the
 * feature of the k-th reachable state. The reachable order is fixed at
 * construction and defines the sampling order.
 */
struct MnlModel {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    std::size_t dim = 0;
    std::vector<std::vector<StateId>> reachable;
    std::vector<Matrix> features;
    Matrix rewards; // num_states x num_actions
    double l_phi = 0.0;
    double l_theta = 0.0;

    std::size_t num_pairs() const { return num_states * num_actions; }

    std::size_t pair_index(StateId s, ActionId a) const {
        if (s >= num_states || a >= num_actions)
            throw DomainError("invalid state/action pair (" + std::to_string(s) + ", " +
                              std::to_string(a) + ")");
        return s * num_actions + a;
    }

    const std::vector<StateId>& next_states(StateId s, ActionId a) const {
        return reachable[pair_index(s, a)];
    }

    const Matrix& feature_block(StateId s, ActionId a) const {
        return features[pair_index(s, a)];
    }

    /// U, the largest reachable-set size.
    std::size_t max_reachable() const {
        std::size_t u = 0;
        for (const auto& r : reachable) u = std::max(u, r.size());
        return u;
    }

    double max_feature_norm() const {
        double m = 0.0;
        for (const auto& f : features)
            if (f.rows() > 0) m = std::max(m, f.rowwise().norm().maxCoeff());
        return m;
    }
};

/// The full environment: the learner-visible model plus the hidden core.
struct MnlMdp : MnlModel {
    Vector theta_star;

    const MnlModel& model() const { return *this; }
};

/// One observed transition together with what the estimator needs from it.
struct TransitionSample {
    StateId state = 0;
    ActionId action = 0;
    StateId next_state = 0;
    std::size_t next_index = 0; ///< position of next_state in the reachable list
    Matrix reachable_features;  ///< one row per reachable state
    Vector response;            ///< one-hot over the reachable list
};

/// Location-tagged invariant violation.
struct ModelProblem {
    std::string path; ///< JSON pointer into the instance file layout
    std::string message;
};

namespace detail {

inline std::string pair_path(const char* field, const MnlModel& m, std::size_t pair) {
    return std::string("/") + field + "/" + std::to_string(pair / m.num_actions) + "/" +
           std::to_string(pair % m.num_actions);
}

} // namespace detail

/**
 * Checks every structural invariant of an MNL MDP: sizes, reward range, the
 * declared feature and core bounds, the zero-feature condition and strict
 * positivity of the true transition probabilities.
 */
inline std::vector<ModelProblem> check_invariants(const MnlMdp& m) {
    std::vector<ModelProblem> out;
    auto add = [&](std::string path, std::string msg) {
        out.push_back({std::move(path), std::move(msg)});
    };
    if (m.num_states == 0) add("/num_states", "must be positive");
    if (m.num_actions == 0) add("/num_actions", "must be positive");
    if (m.dim == 0) add("/dim", "must be positive");
    if (!out.empty()) return out;
    if (!(m.l_phi >= 0.0) || !std::isfinite(m.l_phi)) add("/l_phi", "must be finite and >= 0");
    if (!(m.l_theta >= 0.0) || !std::isfinite(m.l_theta))
        add("/l_theta", "must be finite and >= 0");
    if (m.reachable.size() != m.num_pairs() || m.features.size() != m.num_pairs()) {
        add("/reachable", "expected one entry per (state, action) pair");
        return out;
    }
    if (m.rewards.rows() != static_cast<Eigen::Index>(m.num_states) ||
        m.rewards.cols() != static_cast<Eigen::Index>(m.num_actions)) {
        add("/rewards", "expected a num_states x num_actions array");
    } else {
        for (std::size_t s = 0; s < m.num_states; ++s)
            for (std::size_t a = 0; a < m.num_actions; ++a) {
                const double r = m.rewards(s, a);
                if (!(r >= 0.0 && r <= 1.0))
                    add("/rewards/" + std::to_string(s) + "/" + std::to_string(a),
                        "reward " + std::to_string(r) + " outside [0, 1]");
            }
    }
    if (m.theta_star.size() != static_cast<Eigen::Index>(m.dim)) {
        add("/theta_star", "expected length " + std::to_string(m.dim));
        return out;
    }
    if (!m.theta_star.allFinite()) add("/theta_star", "non-finite entries");
    else if (m.theta_star.norm() > m.l_theta * (1.0 + 1e-12))
        add("/theta_star", "norm " + std::to_string(m.theta_star.norm()) + " exceeds l_theta " +
                               std::to_string(m.l_theta));

    for (std::size_t p = 0; p < m.num_pairs(); ++p) {
        const auto& reach = m.reachable[p];
        const auto& f = m.features[p];
        if (reach.empty()) {
            add(detail::pair_path("reachable", m, p), "reachable set is empty");
            continue;
        }
        std::vector<StateId> sorted = reach;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            add(detail::pair_path("reachable", m, p), "duplicate next state");
        if (sorted.back() >= m.num_states)
            add(detail::pair_path("reachable", m, p), "next state id out of range");
        if (f.rows() != static_cast<Eigen::Index>(reach.size()) ||
            f.cols() != static_cast<Eigen::Index>(m.dim)) {
            add(detail::pair_path("features", m, p),
                "expected " + std::to_string(reach.size()) + " vectors of length " +
                    std::to_string(m.dim));
            continue;
        }
        bool has_zero = false;
        for (Eigen::Index k = 0; k < f.rows(); ++k) {
            const auto row = f.row(k);
            const std::string path = detail::pair_path("features", m, p) + "/" + std::to_string(k);
            if (!row.allFinite()) {
                add(path, "non-finite feature");
                continue;
            }
            if (row.norm() > m.l_phi * (1.0 + 1e-12))
                add(path, "feature norm " + std::to_string(row.norm()) + " exceeds l_phi " +
                              std::to_string(m.l_phi));
            if ((row.array() == 0.0).all()) has_zero = true;
        }
        if (!has_zero)
            add(detail::pair_path("features", m, p),
                "no reachable state carries the zero feature (run recenter first)");
        if (m.theta_star.allFinite()) {
            const Vector pr = softmax(f * m.theta_star);
            if (std::abs(pr.sum() - 1.0) > 1e-12 || (pr.array() <= 0.0).any())
                add(detail::pair_path("features", m, p),
                    "transition probabilities at theta_star are not strictly positive");
        }
    }
    return out;
}

/// Throws ConfigError listing every violated invariant.
inline void validate(const MnlMdp& m) {
    const auto problems = check_invariants(m);
    if (problems.empty()) return;
    std::string msg = "invalid MNL MDP:";
    for (const auto& p : problems) msg += "\n  " + p.path + ": " + p.message;
    throw ConfigError(msg);
}

/**
 * Softmax of the logits phi(s,a,s')^T theta over the reachable set of (s, a),
 * in reachable-list order.
 */
inline Vector transition_probs(const MnlModel& m, StateId s, ActionId a, const Vector& theta) {
    const Matrix& f = m.feature_block(s, a);
    if (theta.size() != static_cast<Eigen::Index>(m.dim))
        throw ArgumentError("theta has length " + std::to_string(theta.size()) + ", expected " +
                            std::to_string(m.dim));
    if (!theta.allFinite()) throw ArgumentError("theta has non-finite entries");
    return softmax(f * theta);
}

/// Transition probabilities of every pair at a fixed core, reachable order.
struct TransitionTable {
    std::vector<Vector> probs;
};

inline TransitionTable transition_table(const MnlModel& m, const Vector& theta) {
    TransitionTable t;
    t.probs.reserve(m.num_pairs());
    for (std::size_t s = 0; s < m.num_states; ++s)
        for (std::size_t a = 0; a < m.num_actions; ++a)
            t.probs.push_back(transition_probs(m, s, a, theta));
    return t;
}

inline TransitionTable true_transitions(const MnlMdp& m) {
    return transition_table(m, m.theta_star);
}

/// Inverse-CDF draw over a probability vector in stored order.
inline std::size_t sample_index(const Vector& probs, Rng& rng) {
    const double u = uniform01(rng);
    double cum = 0.0;
    for (Eigen::Index k = 0; k < probs.size(); ++k) {
        cum += probs[k];
        if (u < cum) return static_cast<std::size_t>(k);
    }
    return static_cast<std::size_t>(probs.size() - 1);
}

inline TransitionSample make_sample(const MnlModel& m, StateId s, ActionId a,
                                    std::size_t next_index) {
    const auto& reach = m.next_states(s, a);
    TransitionSample out;
    out.state = s;
    out.action = a;
    out.next_index = next_index;
    out.next_state = reach.at(next_index);
    out.reachable_features = m.feature_block(s, a);
    out.response = Vector::Zero(static_cast<Eigen::Index>(reach.size()));
    out.response[static_cast<Eigen::Index>(next_index)] = 1.0;
    return out;
}

/// Environment step: draws s' ~ p(.|s,a,theta*).
inline TransitionSample sample_transition(const MnlMdp& m, StateId s, ActionId a, Rng& rng) {
    const Vector p = transition_probs(m, s, a, m.theta_star);
    return make_sample(m, s, a, sample_index(p, rng));
}

/**
 * Enforces the zero-feature condition by subtracting, for every pair, the
 * feature of the first reachable state from all features of that pair.
 * Probabilities are unchanged at every core. If any subtraction was nonzero
 * the declared feature bound is doubled.
 */
template <class Model>
Model recenter(Model m) {
    bool changed = false;
    for (auto& f : m.features) {
        if (f.rows() == 0) continue;
        const Eigen::RowVectorXd base = f.row(0);
        if ((base.array() == 0.0).all()) continue;
        changed = true;
        f.rowwise() -= base;
    }
    if (changed) m.l_phi *= 2.0;
    return m;
}

namespace detail {

/// States from which `target` can be reached along edges of positive probability.
inline std::vector<bool> can_reach(const MnlModel& m, StateId target) {
    std::vector<std::vector<StateId>> reverse(m.num_states);
    for (std::size_t p = 0; p < m.num_pairs(); ++p)
        for (StateId n : m.reachable[p]) reverse[n].push_back(p / m.num_actions);
    std::vector<bool> seen(m.num_states, false);
    std::queue<StateId> q;
    seen[target] = true;
    q.push(target);
    while (!q.empty()) {
        const StateId x = q.front();
        q.pop();
        for (StateId y : reverse[x])
            if (!seen[y]) {
                seen[y] = true;
                q.push(y);
            }
    }
    return seen;
}

} // namespace detail

inline constexpr std::size_t kDiameterSweepCap = 1'000'000;

/**
 * Diameter: the largest, over ordered pairs of distinct states, minimal
 * expected first-hitting time. For each target the stochastic shortest path
 * equation h(s) = 1 + min_a sum_x p(x|s,a) h(x), h(target) = 0 is solved by
 * value iteration until the sup-norm change drops below tol.
 */
inline double compute_diameter(const MnlMdp& m, double tol,
                               std::size_t sweep_cap = kDiameterSweepCap) {
    if (!(tol > 0.0)) throw ArgumentError("diameter tolerance must be positive");
    if (m.num_states < 2) return 0.0;
    const TransitionTable tt = true_transitions(m);
    double diameter = 0.0;
    std::vector<double> h(m.num_states), next(m.num_states);
    for (StateId target = 0; target < m.num_states; ++target) {
        const auto reach = detail::can_reach(m, target);
        for (StateId s = 0; s < m.num_states; ++s)
            if (!reach[s])
                throw DiameterInfiniteError("state " + std::to_string(target) +
                                            " is unreachable from state " + std::to_string(s) +
                                            "; the MDP is not communicating");
        std::fill(h.begin(), h.end(), 0.0);
        bool converged = false;
        for (std::size_t sweep = 0; sweep < sweep_cap; ++sweep) {
            double change = 0.0;
            for (StateId s = 0; s < m.num_states; ++s) {
                if (s == target) {
                    next[s] = 0.0;
                    continue;
                }
                double best = std::numeric_limits<double>::infinity();
                for (ActionId a = 0; a < m.num_actions; ++a) {
                    const std::size_t p = s * m.num_actions + a;
                    const auto& reach_list = m.reachable[p];
                    double acc = 0.0;
                    for (std::size_t k = 0; k < reach_list.size(); ++k)
                        acc += tt.probs[p][static_cast<Eigen::Index>(k)] * h[reach_list[k]];
                    best = std::min(best, acc);
                }
                next[s] = 1.0 + best;
                change = std::max(change, std::abs(next[s] - h[s]));
            }
            h.swap(next);
            if (change < tol) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw DiameterInfiniteError("hitting-time iteration for target " +
                                        std::to_string(target) + " did not converge within " +
                                        std::to_string(sweep_cap) + " sweeps");
        diameter = std::max(diameter, *std::max_element(h.begin(), h.end()));
    }
    return diameter;
}

/**
 * Smallest product p(s'|s,a,theta) p(s''|s,a,theta) over all pairs and all
 * distinct reachable s' != s''. Pairs with a single reachable state do not
 * constrain the product; returns 1 if no pair has two reachable states.
 */
inline double min_pairwise_product(const Vector& probs) {
    if (probs.size() < 2) return 1.0;
    Vector sorted = probs;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    return sorted[0] * sorted[1];
}

inline double kappa_at(const MnlModel& m, const Vector& theta) {
    double k = 1.0;
    for (std::size_t s = 0; s < m.num_states; ++s)
        for (std::size_t a = 0; a < m.num_actions; ++a)
            k = std::min(k, min_pairwise_product(transition_probs(m, s, a, theta)));
    return k;
}

/// Uniform draw from the Euclidean ball of the given radius.
inline Vector sample_ball(std::size_t dim, double radius, Rng& rng) {
    if (radius <= 0.0) return Vector::Zero(static_cast<Eigen::Index>(dim));
    std::normal_distribution<double> normal;
    Vector x(static_cast<Eigen::Index>(dim));
    double n = 0.0;
    do {
        for (auto& v : x) v = normal(rng);
        n = x.norm();
    } while (n == 0.0);
    const double r = radius * std::pow(uniform01(rng), 1.0 / static_cast<double>(dim));
    return x * (r / n);
}

/**
 * Sampled estimate of kappa: the minimum of kappa_at over n_samples cores
 * drawn uniformly from the ball of radius l_theta.
 *
 * This is an upper estimate of the true infimum over the ball; sampling
 * cannot certify it.
 */
inline double estimate_kappa(const MnlModel& m, std::size_t n_samples, Rng& rng) {
    if (n_samples == 0) throw ArgumentError("estimate_kappa needs at least one sample");
    double k = 1.0;
    for (std::size_t i = 0; i < n_samples; ++i)
        k = std::min(k, kappa_at(m, sample_ball(m.dim, m.l_theta, rng)));
    return k;
}

} // namespace ucmnlk
