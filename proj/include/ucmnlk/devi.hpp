#pragma once

#include "ucmnlk/estimator.hpp"
#include "ucmnlk/oracle.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace ucmnlk {

struct InnerMaxResult {
    Vector p;
    double value = 0.0;
};

/**
 * max p.v over { p in simplex : ||p - p_hat||_1 <= radius }.
 *
 * Greedy: move min(radius / 2, 1 - p_hat[best]) of mass onto the index with
 * the largest v (ties to the lower index), taking it from the indices in
 * ascending order of v (ties to the lower index), each floored at zero.
 */
inline InnerMaxResult inner_max(const Vector& p_hat, double radius, const Vector& v) {
    const auto n = p_hat.size();
    if (v.size() != n) throw ArgumentError("inner_max: p_hat and v differ in length");
    if (!(radius >= 0.0)) throw ArgumentError("inner_max: radius must be non-negative");
    InnerMaxResult out{p_hat, 0.0};
    if (n > 1 && radius > 0.0) {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index i, Eigen::Index j) { return v[i] < v[j]; });
        // descending with ties to the lower index
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < n; ++i)
            if (v[i] > v[best]) best = i;
        const double add = std::min(0.5 * radius, 1.0 - p_hat[best]);
        if (add > 0.0) {
            out.p[best] += add;
            double remaining = add;
            for (Eigen::Index i : order) {
                if (remaining <= 0.0) break;
                if (i == best) continue;
                const double take = std::min(remaining, out.p[i]);
                out.p[i] -= take;
                remaining -= take;
            }
        }
    }
    out.value = out.p.dot(v);
    return out;
}

/**
 * Result of discounted extended value iteration.
 *
 * max_increase is the largest V^{(n)}(s) - V^{(n-1)}(s) seen over all rounds
 * (non-positive when the value iterates were nonincreasing).
 */
struct DeviResult {
    Matrix q;
    Vector v;
    std::size_t iterations = 0;
    double final_gap = 0.0; ///< sup |Q^{(N)} - Q^{(N-1)}|
    double final_decrease = 0.0; ///< sup (Q^{(N-1)} - Q^{(N)})
    double max_increase = -std::numeric_limits<double>::infinity();
    bool monotone = true;
};

inline constexpr double kMonotoneSlack = 1e-12;

/**
 * DEVI: Q^{(0)} = 1/(1-gamma); N rounds of
 *   V^{(n-1)}(s) = max_a Q^{(n-1)}(s,a)
 *   Q^{(n)}(s,a) = r(s,a) + gamma max_{p in P_{s,a}} p.V^{(n-1)}
 * Pairs within a round are independent of each other.
 */
inline DeviResult devi(const MnlModel& m, const ConfidencePolytope& poly, double gamma,
                       std::size_t n_rounds) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ArgumentError("devi: gamma must lie in [0, 1)");
    if (n_rounds < 1) throw ArgumentError("devi: need at least one round");
    if (poly.p_hat.size() != m.num_pairs() || poly.radius.size() != m.num_pairs())
        throw ArgumentError("devi: polytope does not match the model");
    const auto ns = static_cast<Eigen::Index>(m.num_states);
    const auto na = static_cast<Eigen::Index>(m.num_actions);
    DeviResult out;
    const double q_cap = 1.0 / (1.0 - gamma);
    Matrix q = Matrix::Constant(ns, na, q_cap);
    Vector v_prev = q.rowwise().maxCoeff();
    Matrix q_next(ns, na);
    Vector local;
    for (std::size_t n = 1; n <= n_rounds; ++n) {
        const Vector v = q.rowwise().maxCoeff();
        if (n > 1) {
            const double inc = (v - v_prev).maxCoeff();
            out.max_increase = std::max(out.max_increase, inc);
            if (inc > kMonotoneSlack) out.monotone = false;
        }
        for (std::size_t pair = 0; pair < m.num_pairs(); ++pair) {
            const auto& reach = m.reachable[pair];
            local.resize(static_cast<Eigen::Index>(reach.size()));
            for (std::size_t k = 0; k < reach.size(); ++k)
                local[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(reach[k])];
            const auto s = static_cast<Eigen::Index>(pair / m.num_actions);
            const auto a = static_cast<Eigen::Index>(pair % m.num_actions);
            // the min only removes rounding above the exact bound 1/(1-gamma)
            q_next(s, a) = std::min(
                q_cap, m.rewards(s, a) + gamma * inner_max(poly.p_hat[pair], poly.radius[pair], local).value);
        }
        out.final_gap = (q_next - q).cwiseAbs().maxCoeff();
        out.final_decrease = (q - q_next).maxCoeff();
        q.swap(q_next);
        v_prev = v;
    }
    out.v = q.rowwise().maxCoeff();
    const double inc = (out.v - v_prev).maxCoeff();
    out.max_increase = std::max(out.max_increase, inc);
    if (inc > kMonotoneSlack) out.monotone = false;
    out.q = std::move(q);
    out.iterations = n_rounds;
    return out;
}

} // namespace ucmnlk
