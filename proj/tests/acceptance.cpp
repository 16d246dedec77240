// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion; exits nonzero on any FAIL.

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace ucmnlk;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;
std::map<int, std::string> lines;

void report(int n, bool ok, const std::string& detail) {
    lines[n] = std::string(ok ? "PASS" : "FAIL") + " criterion " + std::to_string(n) + ": " + detail;
    std::fprintf(stderr, "[%d done]\n", n);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

// every UCMNLK run made by this binary: (K_T, bound)
std::vector<std::pair<double, double>> episode_log;

void log_episodes(std::size_t k, double bound) { episode_log.emplace_back(static_cast<double>(k), bound); }

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open " + p.string());
    return Json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Draw {
    TransitionSample x;
    Vector theta;
};

std::vector<Draw> calculus_draws() {
    Rng rng(20240601);
    std::vector<Draw> out;
    for (int i = 0; i < 200; ++i) {
        const std::size_t d = 1 + uniform_index(rng, 8);
        const std::size_t u = 1 + uniform_index(rng, 6);
        Draw dr;
        dr.x = oracle::random_sample(d, u, 1.0, rng);
        dr.theta = sample_ball(d, 2.0, rng);
        out.push_back(std::move(dr));
    }
    return out;
}

void criterion_1(const std::vector<Draw>& draws) {
    const auto t0 = Clock::now();
    double worst_g = 0.0, worst_h = 0.0;
    for (const auto& dr : draws) {
        const auto f = [&](const Vector& t) { return loss(t, dr.x); };
        const auto g = [&](const Vector& t) { return grad(t, dr.x); };
        const Vector fd = oracle::fd_gradient(f, dr.theta, 1e-5);
        const Vector an = grad(dr.theta, dr.x);
        worst_g = std::max(worst_g, (an - fd).norm() / std::max(fd.norm(), 1e-4));
        const Matrix fh = oracle::fd_jacobian(g, dr.theta, 1e-5);
        const Matrix h = hessian(dr.theta, dr.x);
        worst_h = std::max(worst_h, (h - fh).norm() / std::max(fh.norm(), 1e-4));
    }
    const double secs = seconds_since(t0);
    report(1, worst_g <= 1e-6 && worst_h <= 1e-5 && secs < 10.0,
           "grad rel err " + fmt("%.3g", worst_g) + " (<= 1e-6), hessian rel err " + fmt("%.3g", worst_h) +
               " (<= 1e-5), " + fmt("%.2f", secs) + " s");
}

void criterion_2(const std::vector<Draw>& draws) {
    double worst_min = INFINITY, worst_kappa = INFINITY;
    for (const auto& dr : draws) {
        const Matrix h = hessian(dr.theta, dr.x);
        Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
        worst_min = std::min(worst_min, es.eigenvalues().minCoeff());
        const Matrix& f = dr.x.reachable_features;
        const Vector p = softmax(f * dr.theta);
        const double kappa = f.rows() > 1 ? min_pairwise_product(p) : 0.0;
        const Matrix lower = h - kappa * f.transpose() * f;
        Eigen::SelfAdjointEigenSolver<Matrix> el(lower, Eigen::EigenvaluesOnly);
        worst_kappa = std::min(worst_kappa, el.eigenvalues().minCoeff());
    }
    report(2, worst_min >= -1e-10 && worst_kappa >= -1e-8,
           "min eigenvalue " + fmt("%.3g", worst_min) + " (>= -1e-10), min eigenvalue of H - kappa sum phi phi^T " +
               fmt("%.3g", worst_kappa) + " (>= -1e-8)");
}

Vector random_simplex(std::size_t n, Rng& rng) {
    std::exponential_distribution<double> ed(1.0);
    Vector p(static_cast<Eigen::Index>(n));
    for (auto& x : p) x = ed(rng);
    return p / p.sum();
}

void criterion_3() {
    const auto t0 = Clock::now();
    Rng rng(3);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t u = 1 + uniform_index(rng, 6);
        const Vector p = random_simplex(u, rng);
        Vector v(static_cast<Eigen::Index>(u));
        for (auto& x : v) x = 10.0 * uniform01(rng);
        const double r = 2.0 * uniform01(rng);
        worst = std::max(worst, std::abs(inner_max(p, r, v).value - oracle::lp_inner_max(p, r, v)));
    }
    const double secs = seconds_since(t0);
    report(3, worst <= 1e-9 && secs < 30.0,
           "1000 greedy vs LP values, max diff " + fmt("%.3g", worst) + " (<= 1e-9), " + fmt("%.2f", secs) + " s");
}

void criterion_4() {
    Rng rng(4);
    double worst_inc = -INFINITY, worst_gap = -INFINITY;
    bool ok = true;
    const double gammas[] = {0.5, 0.9, 0.99};
    for (int i = 0; i < 50; ++i) {
        RandomMdpSpec params;
        params.num_states = 2 + uniform_index(rng, 5);
        params.num_actions = 1 + uniform_index(rng, 4);
        params.max_reachable = 1 + uniform_index(rng, 4);
        params.dim = 3;
        const MnlMdp m = random_mdp(params, rng);
        ConfidencePolytope poly;
        for (std::size_t pair = 0; pair < m.num_pairs(); ++pair) {
            poly.p_hat.push_back(random_simplex(m.reachable[pair].size(), rng));
            poly.radius.push_back(2.0 * uniform01(rng));
        }
        const double gamma = gammas[i % 3];
        const auto out = devi(m, poly, gamma, 50);
        worst_inc = std::max(worst_inc, out.max_increase);
        const double slack = out.final_decrease - std::pow(gamma, 49.0);
        worst_gap = std::max(worst_gap, slack);
        ok = ok && out.monotone && out.max_increase <= 1e-12 && slack <= 1e-12;
    }
    report(4, ok,
           "50 polytopes: max V increase " + fmt("%.3g", worst_inc) + " (<= 1e-12), max of gap - gamma^(N-1) " +
               fmt("%.3g", worst_gap) + " (<= 1e-12)");
}

void criterion_5() {
    const auto p = InfiniteHardParams::from_horizon(3, HardMode::average, 20.0, 10000);
    const MnlMdp m = build_infinite(p);
    const double lambda = default_lambda(m.dim, m.l_theta, m.l_phi, default_eta(m.max_reachable(), m.l_theta, m.l_phi));
    EstimatorState st = EstimatorState::initial(m.dim, lambda, 1.0, m.l_theta);
    st.theta_hat = m.theta_star;
    double worst_opt = INFINITY, worst_upper = INFINITY, worst_span = INFINITY;
    for (double gamma : {0.9, 0.99}) {
        const ValueTable vt = solve_discounted(m, gamma, 1e-12);
        for (std::size_t n : {100U, 500U})
            for (double b : {0.0, 0.5, 1.0, 5.0, 50.0}) {
                const auto poly = build_polytope(st, m, b, PolytopeMode::exact);
                const auto out = devi(m, poly, gamma, n);
                const double slack = std::pow(gamma, static_cast<double>(n)) / (1.0 - gamma);
                worst_opt = std::min(worst_opt, (out.v - vt.v).minCoeff() + slack + 1e-6);
                worst_upper = std::min(worst_upper, 1.0 / (1.0 - gamma) - out.v.maxCoeff());
                worst_span = std::min(worst_span, p.diameter() + 1e-6 - (out.v.maxCoeff() - out.v.minCoeff()));
            }
    }
    report(5, worst_opt >= 0.0 && worst_upper >= 0.0 && worst_span >= 0.0,
           "two-state instance d=3 D=20: optimism margin " + fmt("%.3g", worst_opt) + ", upper margin " +
               fmt("%.3g", worst_upper) + ", span margin " + fmt("%.3g", worst_span) + " (all >= 0)");
}

struct CoverageFile {
    MnlMdp mdp;
    AgentConfig cfg;
};

CoverageFile load_coverage() {
    const fs::path dir = UCMNLK_CONFIG_DIR;
    const Json j = read_json(dir / "coverage.json");
    CoverageFile out;
    out.mdp = load_instance((dir / j.at("instance").get<std::string>()).string()).mdp;
    out.cfg.gamma = j.at("gamma").get<double>();
    if (!j.at("n_devi").is_string()) out.cfg.n_devi = j.at("n_devi").get<std::size_t>();
    out.cfg.delta = j.at("delta").get<double>();
    out.cfg.horizon = j.at("horizon").get<std::size_t>();
    out.cfg.c_beta = j.at("c_beta").get<double>();
    return out;
}

void criterion_7() {
    const auto t0 = Clock::now();
    const CoverageFile cf = load_coverage();
    std::size_t covered = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        AgentConfig cfg = cf.cfg;
        cfg.seed = seed;
        const CoverageRun r = coverage_run(cf.mdp, cfg);
        log_episodes(r.num_episodes, r.episode_bound);
        covered += r.covered ? 1 : 0;
        worst = std::max(worst, r.worst_ratio);
    }
    const double secs = seconds_since(t0);
    const double frac = static_cast<double>(covered) / 200.0;
    report(7, frac >= 0.9 && secs < 300.0,
           "c_beta " + fmt("%g", cf.cfg.c_beta) + ": covered in " + std::to_string(covered) + "/200 runs (" +
               fmt("%.1f", 100.0 * frac) + "% >= 90%), worst ratio " + fmt("%.3f", worst) + ", " +
               fmt("%.1f", secs) + " s");
}

void criterion_8() {
    bool ok = true;
    std::string detail;
    double worst_f = 0.0, worst_d = 0.0, worst_j = 0.0;
    for (double diameter : {5.0, 10.0, 50.0}) {
        const std::size_t d = 3;
        const auto t = static_cast<std::size_t>(45.0 * 4.0 * diameter);
        const auto p = InfiniteHardParams::from_horizon(d, HardMode::average, diameter, t);
        const MnlMdp m = build_infinite(p);
        worst_f = std::max(worst_f, std::abs(mnl_sigmoid(p.gap_bar, p.delta) - (p.delta + p.gap)));
        worst_d = std::max(worst_d, std::abs(compute_diameter(m, 1e-12) - 1.0 / p.delta));
        worst_j = std::max(worst_j, std::abs(*solve_average(m, 1e-13).gain - p.optimal_gain()));
        const auto rep = validate_instance(m, p);
        for (const auto& c : rep.checks)
            if (!c.passed) {
                ok = false;
                detail += " [delta=1/" + fmt("%g", diameter) + " " + c.name + "]";
            }
    }
    for (std::size_t h : {3U, 5U, 10U}) {
        const auto k = static_cast<std::size_t>(std::ceil(FiniteHardParams::make(2, h, 1).min_episodes()));
        const auto p = FiniteHardParams::make(2, h, k);
        const auto rep = validate_instance(build_finite(p), p);
        for (const auto& c : rep.checks)
            if (!c.passed) {
                ok = false;
                detail += " [H=" + std::to_string(h) + " " + c.name + "]";
            }
    }
    ok = ok && worst_f <= 1e-12 && worst_d <= 1e-6 && worst_j <= 1e-6;
    report(8, ok,
           "|f(Delta_bar) - delta - Delta| " + fmt("%.3g", worst_f) + ", |D - 1/delta| " + fmt("%.3g", worst_d) +
               ", |J* - closed form| " + fmt("%.3g", worst_j) + ", validation reports" +
               (detail.empty() ? std::string(" all pass") : detail));
}

void criterion_9() {
    const auto t0 = Clock::now();
    const std::size_t t_small = 10000, t_big = 40000;
    const auto p = InfiniteHardParams::from_horizon(2, HardMode::average, 20.0, t_big);
    const MnlMdp m = build_infinite(p);
    const double gain = *solve_average(m, 1e-13).gain;
    const double c_beta = load_coverage().cfg.c_beta;
    std::vector<double> r_small, r_big, r_random;
    std::size_t episodes = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        AgentConfig cfg;
        cfg.diameter_bound = p.diameter();
        cfg.horizon = t_big;
        cfg.c_beta = c_beta;
        cfg.seed = seed;
        const RunLog log = run_ucmnlk(m, cfg);
        log_episodes(log.num_episodes(), episode_count_bound(m.dim, t_big, m.l_phi, log.config.lambda));
        episodes += log.num_episodes();
        const RegretTrace tr = average_regret(log, gain);
        r_small.push_back(tr.regret[t_small - 1]);
        r_big.push_back(tr.regret[t_big - 1]);
        r_random.push_back(average_regret(run_random(m, cfg), gain).regret[t_big - 1]);
    }
    const double ms = median(r_small), mb = median(r_big), mr = median(r_random);
    const bool ratio_ok = ms > 0.0 && mb / ms <= 3.0;
    const bool baseline_ok = mb < 0.5 * mr;
    const double secs = seconds_since(t0);
    report(9, ratio_ok && baseline_ok && secs < 600.0,
           "median Regret(10000) " + fmt("%.4g", ms) + ", Regret(40000) " + fmt("%.4g", mb) + ", ratio " +
               (ms > 0.0 ? fmt("%.3f", mb / ms) : std::string("undefined")) + " (<= 3), random baseline " +
               fmt("%.4g", mr) + " (need < 50%), mean K_T " + fmt("%.1f", static_cast<double>(episodes) / 10.0) +
               ", " + fmt("%.1f", secs) + " s");
}

void criterion_10() {
    const fs::path base = fs::temp_directory_path() / "ucmnlk_acceptance_det";
    fs::remove_all(base);
    ExperimentConfig c;
    c.environment.builtin = InfiniteHardParams::from_horizon(2, HardMode::average, 20.0, 40000);
    c.agent = AgentKind::ucmnlk;
    c.auto_diameter = true;
    c.agent_config.horizon = 5000;
    c.agent_config.c_beta = load_coverage().cfg.c_beta;
    c.seeds = {1, 2, 3, 4};
    std::vector<ExperimentResult> runs;
    for (const char* sub : {"a", "b"}) {
        c.output_dir = (base / sub).string();
        c.workers = sub[0] == 'a' ? 4 : 1;
        runs.push_back(run_experiment(c));
    }
    std::size_t same = 0, total = 0;
    for (const auto& sr : runs[0].seeds) {
        log_episodes(sr.num_episodes, sr.episode_bound);
        const std::string name = fs::path(sr.csv_path).filename().string();
        ++total;
        if (slurp(base / "a" / name) == slurp(base / "b" / name) && !slurp(base / "a" / name).empty()) ++same;
    }
    for (const auto& sr : runs[1].seeds) log_episodes(sr.num_episodes, sr.episode_bound);
    fs::remove_all(base);
    report(10, same == total, std::to_string(same) + "/" + std::to_string(total) + " per-seed CSVs byte-identical");
}

void criterion_6() {
    std::size_t violations = 0;
    double worst = -INFINITY;
    for (const auto& [k, bound] : episode_log) {
        if (k > bound) ++violations;
        worst = std::max(worst, k - bound);
    }
    report(6, violations == 0 && !episode_log.empty(),
           std::to_string(episode_log.size()) + " runs checked, " + std::to_string(violations) +
               " violations of K_T <= 1 + d log2(1 + 2 T L_phi^2 / lambda), max K_T - bound " + fmt("%.3g", worst));
}

template <class F>
void guarded(int n, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        report(n, false, std::string("error: ") + e.what());
    }
}

} // namespace

int main() {
    const auto draws = calculus_draws();
    guarded(1, [&] { criterion_1(draws); });
    guarded(2, [&] { criterion_2(draws); });
    guarded(3, criterion_3);
    guarded(4, criterion_4);
    guarded(5, criterion_5);
    guarded(7, criterion_7);
    guarded(8, criterion_8);
    guarded(9, criterion_9);
    guarded(10, criterion_10);
    guarded(6, criterion_6);
    for (const auto& [n, line] : lines) std::printf("%s\n", line.c_str());
    return failures == 0 ? 0 : 1;
}
