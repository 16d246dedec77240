#pragma once

#include "ucmnlk/mnl_mdp.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ucmnlk {

/// f(x) = 1 / (1 + (1/delta - 1) exp(-x)); f(0) = delta.
inline double mnl_sigmoid(double x, double delta) {
    return 1.0 / (1.0 + (1.0 / delta - 1.0) * std::exp(-x));
}

/// f'(x) = f(x) - f(x)^2.
inline double mnl_sigmoid_derivative(double x, double delta) {
    const double f = mnl_sigmoid(x, delta);
    return f - f * f;
}

inline constexpr std::size_t kMaxHardActions = std::size_t{1} << 16;
inline constexpr double kMaxHardTableSize = 1e7; // S * A * U

/// The j-th coordinate of action index i in {-1, 1}^{m}, lexicographic with -1 < +1.
inline Vector sign_action(std::size_t index, std::size_t m) {
    Vector a(static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < m; ++j)
        a[static_cast<Eigen::Index>(j)] = ((index >> (m - 1 - j)) & 1U) ? 1.0 : -1.0;
    return a;
}

/// Index of a sign vector under the same enumeration.
inline std::size_t sign_action_index(const std::vector<int>& signs) {
    std::size_t i = 0;
    for (int s : signs) i = (i << 1) | (s > 0 ? 1U : 0U);
    return i;
}

namespace detail {

inline std::size_t checked_action_count(std::size_t d) {
    if (d < 2) throw ConfigError("hard instance needs d >= 2");
    if (d - 1 > 16)
        throw ConfigError("2^(d-1) actions exceed the 65536 memory guard (d = " +
                          std::to_string(d) + ")");
    return std::size_t{1} << (d - 1);
}

inline void check_signs(const std::vector<int>& signs, std::size_t m, const std::string& what) {
    if (signs.size() != m)
        throw ConfigError(what + " must have d - 1 = " + std::to_string(m) + " entries");
    for (int s : signs)
        if (s != 1 && s != -1) throw ConfigError(what + " entries must be +1 or -1");
}

} // namespace detail

enum class HardMode { average, discounted };

// ---------------------------------------------------------------------------
// Two-state infinite-horizon family
// ---------------------------------------------------------------------------

struct InfiniteHardParams {
    std::size_t d = 2;
    HardMode mode = HardMode::average;
    /// D in average mode, gamma in discounted mode. Zero when built from a gap.
    double mode_value = 0.0;
    std::size_t horizon = 0;
    double delta = 0.0;
    double gap = 0.0;     ///< Delta
    double gap_bar = 0.0; ///< Delta bar
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<int> signs; ///< sign pattern of theta, length d - 1

    /// Derived parameters from (delta, Delta). Signs default to all +1.
    static InfiniteHardParams from_gap(std::size_t d, double delta, double gap,
                                       std::vector<int> signs = {}) {
        if (d < 2) throw ConfigError("hard instance needs d >= 2");
        if (!(delta > 0.0 && delta <= 0.5)) throw ConfigError("delta must lie in (0, 1/2]");
        if (!(gap > 0.0 && delta + gap < 1.0))
            throw ConfigError("Delta must be positive with delta + Delta < 1");
        InfiniteHardParams p;
        p.d = d;
        p.delta = delta;
        p.gap = gap;
        p.gap_bar = std::log((1.0 - delta) * (delta + gap) / (delta * (1.0 - delta - gap)));
        const double m = static_cast<double>(d - 1);
        p.alpha = std::sqrt(p.gap_bar / (m * (1.0 + p.gap_bar)));
        p.beta = std::sqrt(1.0 / (1.0 + p.gap_bar));
        p.signs = signs.empty() ? std::vector<int>(d - 1, 1) : std::move(signs);
        detail::check_signs(p.signs, d - 1, "theta sign pattern");
        return p;
    }

    /**
     * delta = 1/D (average) or 1 - gamma (discounted),
     * Delta = (d - 1) / (45 sqrt((2/5) (T / delta) log 2)).
     */
    static InfiniteHardParams from_horizon(std::size_t d, HardMode mode, double mode_value,
                                           std::size_t horizon, std::vector<int> signs = {}) {
        if (horizon < 1) throw ConfigError("T must be at least 1");
        double delta = 0.0;
        if (mode == HardMode::average) {
            if (!(mode_value >= 2.0)) throw ConfigError("diameter D must be at least 2");
            delta = 1.0 / mode_value;
        } else {
            if (!(mode_value >= 0.5 && mode_value < 1.0))
                throw ConfigError("gamma must lie in [1/2, 1)");
            delta = 1.0 - mode_value;
        }
        const double t = static_cast<double>(horizon);
        const double gap = static_cast<double>(d - 1) /
                           (45.0 * std::sqrt(0.4 * (t / delta) * std::log(2.0)));
        auto p = from_gap(d, delta, gap, std::move(signs));
        p.mode = mode;
        p.mode_value = mode_value;
        p.horizon = horizon;
        return p;
    }

    /// theta in {-Delta_bar/(d-1), +Delta_bar/(d-1)}^{d-1}.
    Vector theta() const {
        Vector th(static_cast<Eigen::Index>(d - 1));
        for (std::size_t j = 0; j + 1 < d; ++j)
            th[static_cast<Eigen::Index>(j)] = signs[j] * gap_bar / static_cast<double>(d - 1);
        return th;
    }

    /// theta_bar = (theta / alpha, 1 / beta).
    Vector theta_bar() const {
        Vector out(static_cast<Eigen::Index>(d));
        out.head(static_cast<Eigen::Index>(d - 1)) = theta() / alpha;
        out[static_cast<Eigen::Index>(d - 1)] = 1.0 / beta;
        return out;
    }

    /// Index of a_theta, the action whose signs match theta.
    std::size_t best_action() const { return sign_action_index(signs); }

    /// J* = (delta + Delta) / (2 delta + Delta).
    double optimal_gain() const { return (delta + gap) / (2.0 * delta + gap); }

    double diameter() const { return 1.0 / delta; }

    /// V*(x0) = gamma (Delta + delta) / ((1 - gamma)(gamma (2 delta + Delta - 1) + 1)).
    double optimal_value_x0(double gamma) const {
        return gamma * (gap + delta) / ((1.0 - gamma) * (gamma * (2.0 * delta + gap - 1.0) + 1.0));
    }

    double feature_bound() const { return 1.0 + std::log(1.0 / delta - 1.0); }
};

struct InequalityCheck {
    std::string name;
    double margin = 0.0; ///< >= 0 when the inequality holds
};

/// The parameter inequalities the infinite family relies on.
inline std::vector<InequalityCheck> infinite_preconditions(const InfiniteHardParams& p) {
    return {
        {"100*Delta <= delta", p.delta - 100.0 * p.gap},
        {"2*delta + Delta <= 1", 1.0 - 2.0 * p.delta - p.gap},
        {"Delta <= delta*(1-delta)", p.delta * (1.0 - p.delta) - p.gap},
    };
}

inline constexpr std::size_t kXZero = 0;
inline constexpr std::size_t kXOne = 1;

/**
 * Builds the two-state instance without checking the parameter inequalities.
 *
 * States x0 = 0, x1 = 1. Reachable lists put the zero-feature state first:
 * x0 -> [x1, x0], x1 -> [x0, x1]. Features (dimension d):
 *   phi(x0, a, x0) = (-alpha a, beta log(1/delta - 1)), phi(x1, a, x1) = (0, beta log(1/delta - 1)),
 *   phi(x0, a, x1) = phi(x1, a, x0) = 0.
 * theta_star = theta_bar, r(x0, .) = 0, r(x1, .) = 1.
 */
inline MnlMdp assemble_infinite(const InfiniteHardParams& p) {
    const std::size_t na = detail::checked_action_count(p.d);
    detail::check_signs(p.signs, p.d - 1, "theta sign pattern");
    const auto d = static_cast<Eigen::Index>(p.d);
    const double tail = p.beta * std::log(1.0 / p.delta - 1.0);
    MnlMdp m;
    m.num_states = 2;
    m.num_actions = na;
    m.dim = p.d;
    m.rewards = Matrix::Zero(2, static_cast<Eigen::Index>(na));
    m.rewards.row(1).setOnes();
    for (std::size_t a = 0; a < na; ++a) {
        Matrix f = Matrix::Zero(2, d);
        f.row(1).head(d - 1) = -p.alpha * sign_action(a, p.d - 1).transpose();
        f(1, d - 1) = tail;
        m.reachable.push_back({kXOne, kXZero});
        m.features.push_back(std::move(f));
    }
    for (std::size_t a = 0; a < na; ++a) {
        Matrix f = Matrix::Zero(2, d);
        f(1, d - 1) = tail;
        m.reachable.push_back({kXZero, kXOne});
        m.features.push_back(std::move(f));
    }
    m.theta_star = p.theta_bar();
    m.l_phi = p.feature_bound();
    m.l_theta = std::max(100.0 / 99.0, m.theta_star.norm());
    return m;
}

/// Checked constructor: refuses parameters that violate the family's inequalities.
inline MnlMdp build_infinite(const InfiniteHardParams& p) {
    for (const auto& c : infinite_preconditions(p))
        if (c.margin < 0.0) {
            std::string msg = "hard instance parameter check failed: " + c.name;
            if (p.horizon > 0)
                msg += " (requires T >= 45 (d-1)^2 D with D = 1/delta; got T = " +
                       std::to_string(p.horizon) + ", d = " + std::to_string(p.d) +
                       ", D = " + std::to_string(1.0 / p.delta) + ")";
            throw ConfigError(msg);
        }
    return assemble_infinite(p);
}

// ---------------------------------------------------------------------------
// Layered finite-horizon family, stationary block encoding
// ---------------------------------------------------------------------------

struct FiniteHardParams {
    std::size_t d = 2;
    std::size_t horizon_h = 3; ///< H
    std::size_t episodes = 0;  ///< K
    double delta = 0.0;
    double gap = 0.0;
    double gap_bar = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<std::vector<int>> signs; ///< H patterns of length d - 1

    /// delta = 1/H, Delta = 1 / (4 sqrt(2 H K)). Signs default to all +1.
    static FiniteHardParams make(std::size_t d, std::size_t h, std::size_t k,
                                 std::vector<std::vector<int>> signs = {}) {
        if (d < 2) throw ConfigError("hard instance needs d >= 2");
        if (h < 3) throw ConfigError("finite hard instance needs H >= 3");
        if (k < 1) throw ConfigError("K must be at least 1");
        FiniteHardParams p;
        p.d = d;
        p.horizon_h = h;
        p.episodes = k;
        p.delta = 1.0 / static_cast<double>(h);
        p.gap = 1.0 / (4.0 * std::sqrt(2.0 * static_cast<double>(h) * static_cast<double>(k)));
        const double m = static_cast<double>(d - 1);
        const double dd = p.delta;
        const double spread = m * p.gap;
        if (!(dd + spread < 1.0)) throw ConfigError("delta + (d-1) Delta must stay below 1");
        p.gap_bar = std::log((1.0 - dd) * (dd + spread) / (dd * (1.0 - dd - spread))) / m;
        p.alpha = std::sqrt(p.gap_bar / (1.0 + m * p.gap_bar));
        p.beta = std::sqrt(1.0 / (1.0 + m * p.gap_bar));
        p.signs = signs.empty() ? std::vector<std::vector<int>>(h, std::vector<int>(d - 1, 1))
                                : std::move(signs);
        if (p.signs.size() != h) throw ConfigError("need one sign pattern per step h");
        for (const auto& s : p.signs) detail::check_signs(s, d - 1, "theta_h sign pattern");
        return p;
    }

    /// max((d-1)^2 H / 2, H^3 (d-1)^2 / 32).
    double min_episodes() const {
        const double m = static_cast<double>(d - 1);
        const double hh = static_cast<double>(horizon_h);
        return std::max(m * m * hh / 2.0, hh * hh * hh * m * m / 32.0);
    }

    Vector theta_h(std::size_t h) const {
        Vector th(static_cast<Eigen::Index>(d - 1));
        for (std::size_t j = 0; j + 1 < d; ++j)
            th[static_cast<Eigen::Index>(j)] = signs.at(h)[j] * gap_bar;
        return th;
    }

    /// theta_bar_h = (theta_h / alpha, 1 / beta), h zero-based.
    Vector theta_bar_h(std::size_t h) const {
        Vector out(static_cast<Eigen::Index>(d));
        out.head(static_cast<Eigen::Index>(d - 1)) = theta_h(h) / alpha;
        out[static_cast<Eigen::Index>(d - 1)] = 1.0 / beta;
        return out;
    }

    /// All step cores stacked: dimension d H.
    Vector theta_bar() const {
        Vector out(static_cast<Eigen::Index>(d * horizon_h));
        for (std::size_t h = 0; h < horizon_h; ++h)
            out.segment(static_cast<Eigen::Index>(h * d), static_cast<Eigen::Index>(d)) =
                theta_bar_h(h);
        return out;
    }

    double feature_bound() const { return 1.0 + std::log(static_cast<double>(horizon_h) - 1.0); }
};

inline std::vector<InequalityCheck> finite_preconditions(const FiniteHardParams& p) {
    const double tol = 1e-12;
    return {
        {"K >= max((d-1)^2 H/2, H^3 (d-1)^2/32)",
         static_cast<double>(p.episodes) - p.min_episodes()},
        {"(d-1)*Delta <= delta/H",
         p.delta / static_cast<double>(p.horizon_h) * (1.0 + tol) -
             static_cast<double>(p.d - 1) * p.gap},
    };
}

/**
 * Stationary encoding of the layered instance. States x_1..x_{H+2} have ids
 * 0..H+1; x_{H+1} (id H) and x_{H+2} (id H+1) are absorbing. From x_h the
 * reachable list is [x_{H+2}, x_{h+1}] with phi(x_h, a, x_{H+2}) = 0 and
 * phi(x_h, a, x_{h+1}) = (-alpha a, beta log(H - 1)) placed in coordinate
 * block h of the dH-dimensional feature. Reward is 1 at x_{H+2} only.
 */
inline MnlMdp build_finite(const FiniteHardParams& p) {
    for (const auto& c : finite_preconditions(p))
        if (c.margin < 0.0)
            throw ConfigError("hard instance parameter check failed: " + c.name +
                              " (needs K >= " + std::to_string(p.min_episodes()) + ", got K = " +
                              std::to_string(p.episodes) + ")");
    const std::size_t na = detail::checked_action_count(p.d);
    const std::size_t hh = p.horizon_h;
    const std::size_t ns = hh + 2;
    if (static_cast<double>(ns) * static_cast<double>(na) * 2.0 > kMaxHardTableSize)
        throw ConfigError("S * A * U exceeds the 1e7 memory guard");
    const auto dim = static_cast<Eigen::Index>(p.d * hh);
    const auto d = static_cast<Eigen::Index>(p.d);
    const double tail = p.beta * std::log(static_cast<double>(hh) - 1.0);
    MnlMdp m;
    m.num_states = ns;
    m.num_actions = na;
    m.dim = p.d * hh;
    m.rewards = Matrix::Zero(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(na));
    m.rewards.row(static_cast<Eigen::Index>(hh + 1)).setOnes();
    for (std::size_t s = 0; s < ns; ++s)
        for (std::size_t a = 0; a < na; ++a) {
            if (s >= hh) {
                m.reachable.push_back({s});
                m.features.push_back(Matrix::Zero(1, dim));
                continue;
            }
            Matrix f = Matrix::Zero(2, dim);
            const auto off = static_cast<Eigen::Index>(s) * d;
            f.row(1).segment(off, d - 1) = -p.alpha * sign_action(a, p.d - 1).transpose();
            f(1, off + d - 1) = tail;
            m.reachable.push_back({hh + 1, s + 1});
            m.features.push_back(std::move(f));
        }
    m.theta_star = p.theta_bar();
    m.l_phi = p.feature_bound();
    m.l_theta = 1.5 * std::sqrt(static_cast<double>(hh));
    return m;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline constexpr std::size_t kSandwichGridPoints = 2000;
inline constexpr double kReportSlack = 1e-12;

struct ValidationCheck {
    std::string name;
    bool passed = false;
    double worst_margin = 0.0; ///< smallest slack seen; negative means violated
};

struct ValidationReport {
    std::string family;
    std::vector<ValidationCheck> checks;

    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }

    const ValidationCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

namespace detail {

inline void add_inequality(ValidationReport& r, std::string name, double margin) {
    r.checks.push_back({std::move(name), margin >= -kReportSlack, margin});
}

// Equality to tol: margin = tol - |error|.
inline void add_equality(ValidationReport& r, std::string name, double error, double tol) {
    const double margin = tol - std::abs(error);
    r.checks.push_back({std::move(name), margin >= 0.0, margin});
}

// 0 <= f(x) - f(y) <= slope (x - y) for all grid x >= y in [-width, width].
inline double sandwich_margin(double width, double delta, double slope) {
    const std::size_t n = kSandwichGridPoints;
    std::vector<double> xs(n), fs(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = -width + 2.0 * width * static_cast<double>(i) / static_cast<double>(n - 1);
        fs[i] = mnl_sigmoid(xs[i], delta);
    }
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double diff = fs[i] - fs[j];
            worst = std::min({worst, diff, slope * (xs[i] - xs[j]) - diff});
        }
    return worst;
}

inline double feature_margin(const MnlModel& m, double bound) {
    return bound - m.max_feature_norm();
}

} // namespace detail

/// Every structural claim about a built two-state instance, checked numerically.
inline ValidationReport validate_instance(const MnlMdp& m, const InfiniteHardParams& p) {
    ValidationReport r;
    r.family = "infinite";
    for (const auto& c : infinite_preconditions(p)) detail::add_inequality(r, c.name, c.margin);
    const Vector tb = p.theta_bar();
    detail::add_inequality(r, "||theta_bar|| <= 100/99", 100.0 / 99.0 - tb.norm());
    detail::add_equality(r, "||theta_bar|| = 1 + Delta_bar", tb.norm() - (1.0 + p.gap_bar), 1e-12);
    detail::add_inequality(r, "||phi|| <= 1 + log(1/delta - 1)",
                           detail::feature_margin(m, p.feature_bound()));
    detail::add_equality(r, "f(Delta_bar) = delta + Delta",
                         mnl_sigmoid(p.gap_bar, p.delta) - (p.delta + p.gap), 1e-12);
    detail::add_inequality(r, "mean-value sandwich on [-Delta_bar, Delta_bar]",
                           detail::sandwich_margin(p.gap_bar, p.delta, p.delta + p.gap));
    detail::add_equality(r, "theta_star = theta_bar",
                         m.theta_star.size() == tb.size() ? (m.theta_star - tb).cwiseAbs().maxCoeff()
                                                          : 1.0,
                         0.0);
    // every action: p(x1 | x0, a) = f(a^T theta); the sign-matching action attains f(Delta_bar)
    const Vector th = p.theta();
    double prob_err = 0.0, best_other = -1.0, x1_err = 0.0;
    for (std::size_t a = 0; a < m.num_actions; ++a) {
        const Vector pr = transition_probs(m, kXZero, a, m.theta_star);
        const double expect = mnl_sigmoid(sign_action(a, p.d - 1).dot(th), p.delta);
        prob_err = std::max(prob_err, std::abs(pr[0] - expect));
        if (a != p.best_action()) best_other = std::max(best_other, pr[0]);
        const Vector q = transition_probs(m, kXOne, a, m.theta_star);
        x1_err = std::max({x1_err, std::abs(q[0] - p.delta), std::abs(q[1] - (1.0 - p.delta))});
    }
    detail::add_equality(r, "p(x1|x0,a) = f(a^T theta)", prob_err, 1e-12);
    detail::add_equality(r, "p(.|x1,a) = (delta, 1-delta)", x1_err, 1e-12);
    detail::add_equality(r, "a_theta^T theta = Delta_bar",
                         sign_action(p.best_action(), p.d - 1).dot(th) - p.gap_bar, 1e-12);
    const double best = transition_probs(m, kXZero, p.best_action(), m.theta_star)[0];
    detail::add_inequality(r, "a_theta maximizes p(x1|x0,.)",
                           m.num_actions > 1 ? best - best_other : 0.0);
    return r;
}

/// Every structural claim about a built layered instance, checked numerically.
inline ValidationReport validate_instance(const MnlMdp& m, const FiniteHardParams& p) {
    ValidationReport r;
    r.family = "finite";
    for (const auto& c : finite_preconditions(p)) detail::add_inequality(r, c.name, c.margin);
    double worst_core = std::numeric_limits<double>::infinity();
    for (std::size_t h = 0; h < p.horizon_h; ++h)
        worst_core = std::min(worst_core, 1.5 - p.theta_bar_h(h).norm());
    detail::add_inequality(r, "||theta_bar_h|| <= 3/2", worst_core);
    detail::add_inequality(r, "||phi|| <= 1 + log(H - 1)",
                           detail::feature_margin(m, p.feature_bound()));
    const double m1 = static_cast<double>(p.d - 1);
    detail::add_equality(r, "f((d-1) Delta_bar) = delta + (d-1) Delta",
                         mnl_sigmoid(m1 * p.gap_bar, p.delta) - (p.delta + m1 * p.gap), 1e-12);
    detail::add_inequality(r, "mean-value sandwich on [-(d-1) Delta_bar, (d-1) Delta_bar]",
                           detail::sandwich_margin(m1 * p.gap_bar, p.delta, p.delta + m1 * p.gap));
    double prob_err = 0.0;
    for (std::size_t h = 0; h < p.horizon_h; ++h) {
        const Vector th = p.theta_h(h);
        for (std::size_t a = 0; a < m.num_actions; ++a) {
            const Vector pr = transition_probs(m, h, a, m.theta_star);
            prob_err = std::max(prob_err,
                                std::abs(pr[0] - mnl_sigmoid(sign_action(a, p.d - 1).dot(th), p.delta)));
        }
    }
    detail::add_equality(r, "p(x_{H+2}|x_h,a) = f(a^T theta_h)", prob_err, 1e-12);
    double absorb_err = 0.0;
    for (std::size_t s = p.horizon_h; s < p.horizon_h + 2; ++s)
        for (std::size_t a = 0; a < m.num_actions; ++a) {
            const auto& reach = m.next_states(s, a);
            absorb_err = std::max(absorb_err, (reach.size() == 1 && reach[0] == s)
                                                  ? std::abs(transition_probs(m, s, a, m.theta_star)[0] - 1.0)
                                                  : 1.0);
        }
    detail::add_equality(r, "x_{H+1}, x_{H+2} absorbing", absorb_err, 0.0);
    return r;
}

} // namespace ucmnlk
