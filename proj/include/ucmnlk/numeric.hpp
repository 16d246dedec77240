#pragma once

#include "ucmnlk/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>

namespace ucmnlk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Random source used throughout the library; one instance per worker.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

/// Deterministically derives an independent stream from a seed and a label.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

inline bool all_finite(const Vector& x) { return x.allFinite(); }

/// log(sum(exp(x))) with the maximum subtracted first.
inline double log_sum_exp(const Vector& logits) {
    const double m = logits.maxCoeff();
    return m + std::log((logits.array() - m).exp().sum());
}

/// Softmax with max-logit subtraction.
inline Vector softmax(const Vector& logits) {
    const double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp().matrix();
    return e / e.sum();
}

/**
 * Cholesky factor of a symmetric positive-definite matrix.
 *
 * Throws NumericalError carrying the 2-norm condition number when the
 * factorization fails.
 */
inline Eigen::LLT<Matrix> checked_cholesky(const Matrix& m, const char* what) {
    if (!m.allFinite())
        throw NumericalError(std::string("non-finite entries in ") + what);
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
        const auto& ev = es.eigenvalues();
        const double cond = ev.minCoeff() > 0 ? ev.maxCoeff() / ev.minCoeff()
                                              : std::numeric_limits<double>::infinity();
        throw NumericalError(std::string("Cholesky factorization failed for ") + what +
                             " (condition number " + std::to_string(cond) +
                             "); lambda is probably too small");
    }
    return llt;
}

/// log det from a Cholesky factor.
inline double logdet_from(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// ||x||_{M^{-1}}^2 using a Cholesky factor of M.
inline double inverse_norm_squared(const Eigen::LLT<Matrix>& llt, const Vector& x) {
    Vector y = llt.matrixL().solve(x);
    return y.squaredNorm();
}

/// ||x||_M.
inline double weighted_norm(const Matrix& m, const Vector& x) {
    return std::sqrt(std::max(0.0, x.dot(m * x)));
}

} // namespace ucmnlk
