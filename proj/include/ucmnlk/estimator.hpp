#pragma once

#include "ucmnlk/mnl_mdp.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <vector>

namespace ucmnlk {

// ---------------------------------------------------------------------------
// Per-step MNL loss and its derivatives
// ---------------------------------------------------------------------------

/// Negative log-likelihood of the observed response, via log-sum-exp.
inline double loss(const Vector& theta, const TransitionSample& x) {
    const Vector logits = x.reachable_features * theta;
    return log_sum_exp(logits) * x.response.sum() - x.response.dot(logits);
}

/// Gradient -sum_s' (y_s' - p_s'(theta)) phi_s'.
inline Vector grad(const Vector& theta, const TransitionSample& x) {
    const Vector p = softmax(x.reachable_features * theta);
    return x.reachable_features.transpose() * (p - x.response);
}

/**
 * Hessian sum p phi phi^T - (sum p phi)(sum p phi)^T, symmetrized.
 * Algebraically equal to the double-sum form.
 */
inline Matrix hessian(const Vector& theta, const TransitionSample& x) {
    const Matrix& f = x.reachable_features;
    const Vector p = softmax(f * theta);
    const Vector mean = f.transpose() * p;
    Matrix h = f.transpose() * p.asDiagonal() * f - mean * mean.transpose();
    return 0.5 * (h + h.transpose());
}

// ---------------------------------------------------------------------------
// Estimator state and the online mirror-descent update
// ---------------------------------------------------------------------------

/// Step size eta = (1/2) log U + (L_theta L_phi + 1).
inline double default_eta(std::size_t u, double l_theta, double l_phi) {
    return 0.5 * std::log(static_cast<double>(u)) + (l_theta * l_phi + 1.0);
}

/// Ridge lambda = 84 sqrt(2) (L_theta L_phi^3 + d L_phi^2) eta.
inline double default_lambda(std::size_t d, double l_theta, double l_phi, double eta) {
    return 84.0 * std::numbers::sqrt2 *
           (l_theta * l_phi * l_phi * l_phi + static_cast<double>(d) * l_phi * l_phi) * eta;
}

/**
 * The learner's estimate of the transition core.
 *
 * Holds theta_hat_t and Sigma_t for the current step t (starting at 1 with
 * theta_hat = 0, Sigma = lambda I).
 */
struct EstimatorState {
    Vector theta_hat;
    Matrix sigma;
    std::size_t t = 1;
    double lambda = 1.0;
    double eta = 1.0;
    double l_theta = 1.0;
    double logdet_sigma = 0.0;

    static EstimatorState initial(std::size_t dim, double lambda, double eta, double l_theta) {
        if (!(lambda > 0.0)) throw ArgumentError("lambda must be positive");
        if (!(eta >= 0.0)) throw ArgumentError("eta must be non-negative");
        if (!(l_theta >= 0.0)) throw ArgumentError("l_theta must be non-negative");
        const auto d = static_cast<Eigen::Index>(dim);
        EstimatorState s;
        s.theta_hat = Vector::Zero(d);
        s.sigma = lambda * Matrix::Identity(d, d);
        s.lambda = lambda;
        s.eta = eta;
        s.l_theta = l_theta;
        s.logdet_sigma = static_cast<double>(dim) * std::log(lambda);
        return s;
    }
};

inline constexpr std::size_t kProjectionMaxIterations = 200;

/**
 * argmin over ||theta||_2 <= l of ||theta - v||_M.
 *
 * Interior points are returned unchanged. Otherwise the KKT system
 * (M + mu I) theta = M v is solved for the multiplier mu > 0 by bisection,
 * until | ||theta||_2 - l | <= 1e-10 l.
 */
inline Vector project_ball_weighted(const Vector& v, const Matrix& m, double l) {
    if (l < 0.0) throw ArgumentError("ball radius must be non-negative");
    const double vn = v.norm();
    if (vn <= l) return v;
    if (l == 0.0) return Vector::Zero(v.size());
    const auto n = v.size();
    const Matrix id = Matrix::Identity(n, n);
    const Vector mv = m * v;
    auto solve_at = [&](double mu) -> Vector {
        return checked_cholesky(m + mu * id, "the projection system").solve(mv);
    };
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    double hi = std::max(es.eigenvalues().maxCoeff() * (vn / l - 1.0),
                         std::numeric_limits<double>::min());
    Vector theta_hi = solve_at(hi);
    for (std::size_t k = 0; theta_hi.norm() > l; ++k) {
        if (k == kProjectionMaxIterations)
            throw NumericalError("projection: could not bracket the multiplier");
        hi *= 2.0;
        theta_hi = solve_at(hi);
    }
    double lo = 0.0;
    for (std::size_t it = 0; it < kProjectionMaxIterations; ++it) {
        const double nrm = theta_hi.norm();
        if (std::abs(nrm - l) <= 1e-10 * l) return nrm > l ? Vector(theta_hi * (l / nrm)) : theta_hi;
        const double mid = 0.5 * (lo + hi);
        Vector theta_mid = solve_at(mid);
        if (theta_mid.norm() > l) {
            lo = mid;
        } else {
            hi = mid;
            theta_hi = std::move(theta_mid);
        }
    }
    throw NumericalError("projection: bisection did not converge in 200 iterations");
}

/**
 * One online mirror-descent step on a new transition:
 *
 *   Sigma_hat   = Sigma_t + eta H_t(theta_hat_t)
 *   theta_{t+1} = Proj_{Sigma_hat}(theta_hat_t - eta Sigma_hat^{-1} g_t(theta_hat_t))
 *   Sigma_{t+1} = Sigma_t + H_t(theta_{t+1})
 */
inline EstimatorState update(const EstimatorState& state, const TransitionSample& x) {
    const Vector g = grad(state.theta_hat, x);
    const Matrix sigma_hat = state.sigma + state.eta * hessian(state.theta_hat, x);
    const auto llt_hat = checked_cholesky(sigma_hat, "Sigma_hat");
    const Vector step_point = state.theta_hat - state.eta * llt_hat.solve(g);

    EstimatorState next = state;
    next.theta_hat = project_ball_weighted(step_point, sigma_hat, state.l_theta);
    Matrix sigma = state.sigma + hessian(next.theta_hat, x);
    next.sigma = 0.5 * (sigma + sigma.transpose());
    next.logdet_sigma = logdet_from(checked_cholesky(next.sigma, "Sigma"));
    next.t = state.t + 1;
    return next;
}

// ---------------------------------------------------------------------------
// Confidence radius and confidence polytope
// ---------------------------------------------------------------------------

/**
 * beta_t = c_beta sqrt(d) (log(max(U t / delta, e)))^2.
 *
 * c_beta stands in for the unnamed polynomial in (L_theta, L_phi).
 */
inline double beta(std::size_t t, std::size_t d, std::size_t u_max, double delta, double c_beta) {
    if (t < 1) throw ArgumentError("beta: t must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("beta: delta must lie in (0, 1)");
    const double arg = std::max(static_cast<double>(u_max) * static_cast<double>(t) / delta,
                                std::numbers::e);
    const double lg = std::log(arg);
    return c_beta * std::sqrt(static_cast<double>(d)) * lg * lg;
}

enum class PolytopeMode { exact, simplified };

inline constexpr double kMaxL1Radius = 2.0;

/**
 * Factored confidence polytope: for every pair a nominal distribution over
 * the reachable list and an L1 radius around it (clipped to 2).
 */
struct ConfidencePolytope {
    std::vector<Vector> p_hat;
    std::vector<double> radius;
};

/**
 * Builds the polytope around p(.|s,a,theta_hat_t).
 *
 * exact: radius = B1 + B2 with
 *   B1 = beta sum_s' p_s' || phi_s' - sum_s'' p_s'' phi_s'' ||_{Sigma^{-1}}
 *   B2 = 3 beta^2 max_s' ||phi_s'||^2_{Sigma^{-1}}
 * simplified: radius = 2 beta max_s' ||phi_s'||_{Sigma^{-1}}
 */
inline ConfidencePolytope build_polytope(const EstimatorState& state, const MnlModel& m,
                                         double beta_t, PolytopeMode mode) {
    if (!(beta_t >= 0.0)) throw ArgumentError("beta_t must be non-negative");
    const auto llt = checked_cholesky(state.sigma, "Sigma");
    ConfidencePolytope out;
    out.p_hat.reserve(m.num_pairs());
    out.radius.reserve(m.num_pairs());
    for (std::size_t pair = 0; pair < m.num_pairs(); ++pair) {
        const Matrix& f = m.features[pair];
        Vector p = softmax(f * state.theta_hat);
        double max_sq = 0.0;
        for (Eigen::Index k = 0; k < f.rows(); ++k)
            max_sq = std::max(max_sq, inverse_norm_squared(llt, f.row(k).transpose()));
        double r = 0.0;
        if (mode == PolytopeMode::simplified) {
            r = 2.0 * beta_t * std::sqrt(max_sq);
        } else {
            const Vector mean = f.transpose() * p;
            double b1 = 0.0;
            for (Eigen::Index k = 0; k < f.rows(); ++k)
                b1 += p[k] * std::sqrt(inverse_norm_squared(llt, f.row(k).transpose() - mean));
            r = beta_t * b1 + 3.0 * beta_t * beta_t * max_sq;
        }
        out.p_hat.push_back(std::move(p));
        out.radius.push_back(std::min(r, kMaxL1Radius));
    }
    return out;
}

} // namespace ucmnlk
