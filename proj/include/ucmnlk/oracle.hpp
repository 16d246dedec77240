#pragma once

#include "ucmnlk/mnl_mdp.hpp"

#include <Eigen/LU>

#include <optional>
#include <vector>

namespace ucmnlk {

/// Deterministic stationary policy: one action per state.
using Policy = std::vector<ActionId>;

/**
 * Output of the ground-truth solvers.
 *
 * Discounted case: v = V*, q = Q*, gamma set. Average case: v is the bias
 * (relative value) normalized to min 0, q(s,a) = r(s,a) - J* + sum p v, and
 * gain holds J*.
 */
struct ValueTable {
    Vector v;
    Matrix q;
    std::optional<double> gamma;
    std::optional<double> gain;
    std::size_t sweeps = 0;

    bool is_average() const { return !gamma.has_value(); }
};

/// Per-state argmax of q, ties to the lowest action index.
inline Policy greedy_policy(const Matrix& q) {
    Policy pi(static_cast<std::size_t>(q.rows()), 0);
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        Eigen::Index best = 0;
        for (Eigen::Index a = 1; a < q.cols(); ++a)
            if (q(s, a) > q(s, best)) best = a;
        pi[static_cast<std::size_t>(s)] = static_cast<ActionId>(best);
    }
    return pi;
}

namespace detail {

inline double expect(const MnlModel& m, const TransitionTable& tt, std::size_t pair,
                     const Vector& v) {
    const auto& reach = m.reachable[pair];
    const Vector& p = tt.probs[pair];
    double acc = 0.0;
    for (std::size_t k = 0; k < reach.size(); ++k)
        acc += p[static_cast<Eigen::Index>(k)] * v[static_cast<Eigen::Index>(reach[k])];
    return acc;
}

inline Matrix backup(const MnlModel& m, const TransitionTable& tt, const Vector& v,
                     double gamma) {
    Matrix q(static_cast<Eigen::Index>(m.num_states), static_cast<Eigen::Index>(m.num_actions));
    for (std::size_t s = 0; s < m.num_states; ++s)
        for (std::size_t a = 0; a < m.num_actions; ++a)
            q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) =
                m.rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) +
                gamma * expect(m, tt, s * m.num_actions + a, v);
    return q;
}

} // namespace detail

/// Dense transition matrix of a deterministic policy.
inline Matrix policy_matrix(const MnlModel& m, const TransitionTable& tt, const Policy& pi) {
    const auto n = static_cast<Eigen::Index>(m.num_states);
    Matrix p = Matrix::Zero(n, n);
    for (std::size_t s = 0; s < m.num_states; ++s) {
        const std::size_t pair = m.pair_index(s, pi.at(s));
        const auto& reach = m.reachable[pair];
        for (std::size_t k = 0; k < reach.size(); ++k)
            p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(reach[k])) +=
                tt.probs[pair][static_cast<Eigen::Index>(k)];
    }
    return p;
}

/// Transition matrix of the policy choosing uniformly among all actions.
inline Matrix uniform_policy_matrix(const MnlModel& m, const TransitionTable& tt) {
    const auto n = static_cast<Eigen::Index>(m.num_states);
    Matrix p = Matrix::Zero(n, n);
    const double w = 1.0 / static_cast<double>(m.num_actions);
    for (std::size_t pair = 0; pair < m.num_pairs(); ++pair) {
        const auto s = static_cast<Eigen::Index>(pair / m.num_actions);
        const auto& reach = m.reachable[pair];
        for (std::size_t k = 0; k < reach.size(); ++k)
            p(s, static_cast<Eigen::Index>(reach[k])) +=
                w * tt.probs[pair][static_cast<Eigen::Index>(k)];
    }
    return p;
}

/// Stationary distribution of an irreducible chain (solves mu P = mu, sum mu = 1).
inline Vector stationary_distribution(const Matrix& p) {
    const Eigen::Index n = p.rows();
    Matrix a = p.transpose() - Matrix::Identity(n, n);
    a.row(n - 1).setOnes();
    Vector b = Vector::Zero(n);
    b[n - 1] = 1.0;
    return a.fullPivLu().solve(b);
}

/**
 * Value iteration on the true model until the Bellman residual drops below
 * tol (1 - gamma) / (2 gamma), which puts the returned V within tol of V*.
 */
inline ValueTable solve_discounted(const MnlModel& m, const TransitionTable& tt, double gamma,
                                   double tol) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ArgumentError("gamma must lie in [0, 1)");
    if (!(tol > 0.0)) throw ArgumentError("tolerance must be positive");
    const double threshold = gamma > 0.0 ? tol * (1.0 - gamma) / (2.0 * gamma) : 0.0;
    Vector v = Vector::Zero(static_cast<Eigen::Index>(m.num_states));
    ValueTable out;
    out.gamma = gamma;
    for (std::size_t sweep = 1;; ++sweep) {
        Matrix q = detail::backup(m, tt, v, gamma);
        Vector next = q.rowwise().maxCoeff();
        const double residual = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        out.q = std::move(q);
        out.sweeps = sweep;
        if (gamma == 0.0 || residual < threshold) break;
    }
    out.v = v;
    return out;
}

inline ValueTable solve_discounted(const MnlMdp& m, double gamma, double tol) {
    return solve_discounted(m, true_transitions(m), gamma, tol);
}

inline constexpr std::size_t kRelativeValueSweepCap = 50'000;
inline constexpr std::size_t kAperiodicSweepCap = 1'000'000;
inline constexpr double kAperiodicityMix = 0.01;

namespace detail {

// Relative value iteration with optional self-loop mixing tau. Returns false
// if the span of successive differences never fell below tol.
inline bool relative_value_iteration(const MnlModel& m, const TransitionTable& tt, double tol,
                                     double tau, std::size_t cap, ValueTable& out) {
    const auto n = static_cast<Eigen::Index>(m.num_states);
    Vector h = Vector::Zero(n);
    for (std::size_t sweep = 1; sweep <= cap; ++sweep) {
        Matrix q = backup(m, tt, h, 1.0);
        // r + (1 - tau) P h + tau h
        if (tau > 0.0) q = (1.0 - tau) * q + tau * m.rewards + tau * h.replicate(1, q.cols());
        Vector w = q.rowwise().maxCoeff();
        const Vector diff = w - h;
        const double hi = diff.maxCoeff(), lo = diff.minCoeff();
        h = w.array() - w[0];
        if (hi - lo < tol) {
            const double gain = 0.5 * (hi + lo);
            // undo the self-loop scaling of the bias: h_original = (1 - tau) h_mixed
            Vector bias = (1.0 - tau) * h;
            Matrix qa = backup(m, tt, bias, 1.0).array() - gain;
            Vector v = qa.rowwise().maxCoeff();
            const double shift = v.minCoeff();
            out.v = v.array() - shift;
            out.q = qa.array() - shift;
            out.gain = gain;
            out.gamma.reset();
            out.sweeps = sweep;
            return true;
        }
    }
    return false;
}

} // namespace detail

/**
 * Relative value iteration (reference state 0) for the optimal gain J* and
 * bias of a communicating MDP. Stops once the span of successive differences
 * is below tol. If plain iteration fails to settle, the chain is made
 * aperiodic by mixing every transition with a 0.01 self-loop, which leaves the
 * gain unchanged, and the iteration is repeated.
 */
inline ValueTable solve_average(const MnlModel& m, const TransitionTable& tt, double tol) {
    if (!(tol > 0.0)) throw ArgumentError("tolerance must be positive");
    ValueTable out;
    if (detail::relative_value_iteration(m, tt, tol, 0.0, kRelativeValueSweepCap, out)) return out;
    if (detail::relative_value_iteration(m, tt, tol, kAperiodicityMix, kAperiodicSweepCap, out))
        return out;
    throw OracleError("relative value iteration did not converge even after the aperiodicity "
                      "transform; the MDP is probably not communicating (multichain)");
}

inline ValueTable solve_average(const MnlMdp& m, double tol) {
    return solve_average(m, true_transitions(m), tol);
}

enum class PolicyEvalMethod { automatic, direct, iterative };

inline constexpr std::size_t kDirectSolveMaxStates = 200;

/// V^pi = r_pi + gamma P_pi V^pi for a deterministic stationary policy.
inline Vector evaluate_policy_discounted(const MnlModel& m, const TransitionTable& tt,
                                         const Policy& pi, double gamma, double tol,
                                         PolicyEvalMethod method = PolicyEvalMethod::automatic) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ArgumentError("gamma must lie in [0, 1)");
    if (pi.size() != m.num_states) throw ArgumentError("policy size does not match num_states");
    const auto n = static_cast<Eigen::Index>(m.num_states);
    Vector r(n);
    for (Eigen::Index s = 0; s < n; ++s)
        r[s] = m.rewards(s, static_cast<Eigen::Index>(pi[static_cast<std::size_t>(s)]));
    const Matrix p = policy_matrix(m, tt, pi);
    if (method == PolicyEvalMethod::direct ||
        (method == PolicyEvalMethod::automatic && m.num_states <= kDirectSolveMaxStates)) {
        const Matrix a = Matrix::Identity(n, n) - gamma * p;
        return a.partialPivLu().solve(r);
    }
    if (!(tol > 0.0)) throw ArgumentError("tolerance must be positive");
    const double threshold = gamma > 0.0 ? tol * (1.0 - gamma) / gamma : 0.0;
    Vector v = Vector::Zero(n);
    while (true) {
        Vector next = r + gamma * (p * v);
        const double change = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        if (gamma == 0.0 || change < threshold) break;
    }
    return v;
}

inline Vector evaluate_policy_discounted(const MnlMdp& m, const Policy& pi, double gamma,
                                         double tol,
                                         PolicyEvalMethod method = PolicyEvalMethod::automatic) {
    return evaluate_policy_discounted(m, true_transitions(m), pi, gamma, tol, method);
}

/// Long-run average reward of a deterministic policy on an irreducible chain.
inline double policy_gain(const MnlModel& m, const TransitionTable& tt, const Policy& pi) {
    const Vector mu = stationary_distribution(policy_matrix(m, tt, pi));
    double g = 0.0;
    for (std::size_t s = 0; s < m.num_states; ++s)
        g += mu[static_cast<Eigen::Index>(s)] *
             m.rewards(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(pi[s]));
    return g;
}

} // namespace ucmnlk
