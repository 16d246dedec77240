#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

using namespace ucmnlk;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ucmnlk_harness_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

ExperimentConfig two_state_config(const fs::path& out, std::size_t horizon) {
    ExperimentConfig c;
    c.environment.builtin = InfiniteHardParams::from_horizon(2, HardMode::average, 20.0, 40000);
    c.agent = AgentKind::ucmnlk;
    c.auto_diameter = true;
    c.agent_config.horizon = horizon;
    c.agent_config.c_beta = 1.6;
    c.seeds = {1, 2, 3};
    c.output_dir = out.string();
    c.workers = 2;
    return c;
}

/// Instance file for the two-state family with a large gap (delta = 0.1, Delta = 0.01).
fs::path wide_gap_instance(const fs::path& dir) {
    const auto p = InfiniteHardParams::from_gap(2, 0.1, 0.01);
    const fs::path path = dir / "wide_gap.json";
    save_instance(path.string(), assemble_infinite(p), HardParams{p});
    return path;
}

struct MeanCurve {
    std::vector<std::size_t> t;
    std::vector<double> mean, se;
};

MeanCurve mean_curve(const ExperimentResult& r) {
    MeanCurve m;
    m.t = r.seeds.at(0).curve.t;
    const double n = static_cast<double>(r.seeds.size());
    for (std::size_t i = 0; i < m.t.size(); ++i) {
        double s = 0.0, s2 = 0.0;
        for (const auto& sr : r.seeds) {
            s += sr.curve.regret[i];
            s2 += sr.curve.regret[i] * sr.curve.regret[i];
        }
        const double mu = s / n;
        m.mean.push_back(mu);
        m.se.push_back(std::sqrt(std::max(0.0, s2 / n - mu * mu) / (n - 1.0)));
    }
    return m;
}

/// Per-seed slope over the last half of the snapshot grid, averaged, with its standard error.
std::pair<double, double> last_half_slope(const ExperimentResult& r) {
    std::vector<double> slopes;
    for (const auto& sr : r.seeds) {
        const auto& c = sr.curve;
        const std::size_t hi = c.t.size() - 1;
        std::size_t lo = 0;
        while (c.t[lo] < c.t[hi] / 2) ++lo;
        slopes.push_back((c.regret[hi] - c.regret[lo]) / static_cast<double>(c.t[hi] - c.t[lo]));
    }
    double s = 0.0, s2 = 0.0;
    for (double x : slopes) {
        s += x;
        s2 += x * x;
    }
    const double n = static_cast<double>(slopes.size());
    const double mu = s / n;
    return {mu, std::sqrt(std::max(0.0, s2 / n - mu * mu) / (n - 1.0))};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(UCMNLK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST(Config, EmptySeedsRejectedBeforeWork) {
    const auto dir = fs::temp_directory_path() / "ucmnlk_harness_never_created";
    fs::remove_all(dir);
    auto c = two_state_config(dir, 100);
    c.seeds.clear();
    EXPECT_THROW(run_experiment(c), ConfigError);
    EXPECT_FALSE(fs::exists(dir));
    c.seeds = {1, 1};
    EXPECT_THROW(run_experiment(c), ConfigError);
    c.seeds = {1};
    c.stride = 0;
    EXPECT_THROW(run_experiment(c), ConfigError);
}

TEST(Config, ParsesAndLocatesErrors) {
    const std::string text = R"({
  "environment": {"builtin": {"family": "infinite", "d": 2, "D": 20, "T": 40000}},
  "agent": {"kind": "ucmnlk", "gamma": "auto-average", "n_devi": "auto", "c_beta": 1.6,
            "lambda": "default", "eta": 2.5, "horizon": 500, "diameter_bound": "auto"},
  "seeds": [4, 5],
  "stride": 50
})";
    const auto c = parse_experiment(text, "cfg.json");
    EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 5}));
    EXPECT_EQ(c.stride, 50U);
    EXPECT_TRUE(c.auto_diameter);
    EXPECT_FALSE(c.agent_config.gamma);
    EXPECT_FALSE(c.agent_config.lambda);
    EXPECT_EQ(*c.agent_config.eta, 2.5);
    EXPECT_EQ(c.agent_config.horizon, 500U);
    EXPECT_TRUE(std::holds_alternative<InfiniteHardParams>(*c.environment.builtin));
    std::string bad = text;
    bad.replace(bad.find("\"c_beta\": 1.6"), 13, "\"c_beta\": \"x\"");
    try {
        parse_experiment(bad, "cfg.json");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("cfg.json:3:", 0), 0U) << e.what();
        EXPECT_NE(std::string(e.what()).find("/agent/c_beta"), std::string::npos) << e.what();
    }
}

TEST(Aggregate, SingleSeedAndConstants) {
    RegretCurve a{{1, 2, 3}, {0.5, 1.5, -2.0}};
    const auto one = aggregate_curves({a});
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(one[i].mean, a.regret[i]);
        EXPECT_EQ(one[i].median, a.regret[i]);
        EXPECT_EQ(one[i].q25, a.regret[i]);
        EXPECT_EQ(one[i].q75, a.regret[i]);
        EXPECT_EQ(one[i].n_seeds, 1U);
        EXPECT_EQ(one[i].t, a.t[i]);
    }
    RegretCurve z{{10, 20}, {0.0, 0.0}}, two{{10, 20}, {2.0, 2.0}};
    for (const auto& row : aggregate_curves({z, two})) {
        EXPECT_EQ(row.mean, 1.0);
        EXPECT_EQ(row.median, 1.0);
        EXPECT_EQ(row.q25, 0.5);
        EXPECT_EQ(row.q75, 1.5);
    }
}

TEST(Aggregate, MatchesIndependentRecomputation) {
    const auto dir = scratch("aggregate");
    Rng rng(3);
    std::normal_distribution<double> nd;
    std::vector<std::string> paths;
    std::vector<std::vector<double>> values(20);
    const std::vector<std::size_t> grid = {100, 200, 300, 400, 437};
    for (int s = 0; s < 20; ++s) {
        std::string csv = "t,state,action,reward,episode,cum_reward,regret\n";
        for (std::size_t t : grid) {
            const double v = 10.0 * nd(rng);
            values[static_cast<std::size_t>(s)].push_back(v);
            csv += std::to_string(t) + ",0,0,0,1,0," + format_real(v) + "\n";
        }
        paths.push_back((dir / ("seed_" + std::to_string(s) + ".csv")).string());
        write_text(paths.back(), csv);
    }
    const auto rows = aggregate(paths, (dir / "aggregate.csv").string());
    ASSERT_EQ(rows.size(), grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::vector<long double> col;
        long double sum = 0;
        for (int s = 0; s < 20; ++s) {
            col.push_back(values[static_cast<std::size_t>(s)][i]);
            sum += col.back();
        }
        std::sort(col.begin(), col.end());
        // n = 20: median averages ranks 10, 11; q25 at position 4.75, q75 at 14.25 (zero-based)
        const long double median = (col[9] + col[10]) / 2;
        const long double q25 = col[4] + 0.75L * (col[5] - col[4]);
        const long double q75 = col[14] + 0.25L * (col[15] - col[14]);
        EXPECT_EQ(rows[i].t, grid[i]);
        EXPECT_NEAR(rows[i].mean, static_cast<double>(sum / 20), 1e-12);
        EXPECT_NEAR(rows[i].median, static_cast<double>(median), 1e-12);
        EXPECT_NEAR(rows[i].q25, static_cast<double>(q25), 1e-12);
        EXPECT_NEAR(rows[i].q75, static_cast<double>(q75), 1e-12);
        EXPECT_EQ(rows[i].n_seeds, 20U);
    }
    const auto table = read_csv(dir / "aggregate.csv");
    EXPECT_EQ(table[0], (std::vector<std::string>{"t", "mean_regret", "median", "q25", "q75", "n_seeds"}));
    EXPECT_EQ(table.size(), grid.size() + 1);
    fs::remove_all(dir);
}

TEST(Aggregate, MismatchedGridsNameOffenders) {
    RegretCurve a{{1, 2}, {0, 0}}, b{{1, 3}, {0, 0}}, c{{1, 2}, {1, 1}}, d{{1}, {0}};
    try {
        aggregate_curves({a, b, c, d}, {"a.csv", "b.csv", "c.csv", "d.csv"});
        FAIL() << "expected AggregationError";
    } catch (const AggregationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("b.csv"), std::string::npos);
        EXPECT_NE(msg.find("d.csv"), std::string::npos);
        EXPECT_EQ(msg.find("c.csv"), std::string::npos);
    }
    EXPECT_THROW(aggregate_curves({}), AggregationError);
}

TEST(Output, SnapshotGridAndFormat) {
    EXPECT_EQ(snapshot_grid(250, 100), (std::vector<std::size_t>{100, 200, 250}));
    EXPECT_EQ(snapshot_grid(200, 100), (std::vector<std::size_t>{100, 200}));
    EXPECT_EQ(snapshot_grid(5, 100), (std::vector<std::size_t>{5}));
    EXPECT_EQ(format_real(0.1), "0.10000000000000001");
    EXPECT_EQ(std::stod(format_real(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(Experiment, BookkeepingIdentityAndOutputs) {
    const auto dir = scratch("bookkeeping");
    auto c = two_state_config(dir, 3000);
    c.full_log = true;
    c.estimator_trace = true;
    const auto res = run_experiment(c);
    ASSERT_TRUE(res.optimal_gain);
    const double gain = *res.optimal_gain;
    for (const auto& sr : res.seeds) {
        ASSERT_TRUE(sr.ok) << sr.error;
        const auto rows = read_csv(sr.csv_path);
        ASSERT_EQ(rows[0], (std::vector<std::string>{"t", "state", "action", "reward", "episode", "cum_reward", "regret"}));
        ASSERT_EQ(rows.size(), 3001U);
        double prev = 0.0, cum = 0.0;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            const double r = std::stod(rows[i][3]);
            const double reg = std::stod(rows[i][6]);
            cum += r;
            EXPECT_EQ(std::stoul(rows[i][0]), i);
            EXPECT_NEAR(reg - prev, gain - r, 1e-12);
            EXPECT_NEAR(std::stod(rows[i][5]), cum, 1e-9);
            prev = reg;
        }
        EXPECT_NEAR(prev, 3000.0 * gain - cum, 1e-9);
        EXPECT_LE(static_cast<double>(sr.num_episodes), sr.episode_bound);
        const std::string stem = "seed_" + std::to_string(sr.seed);
        EXPECT_TRUE(fs::exists(dir / (stem + "_episodes.csv")));
        EXPECT_TRUE(fs::exists(dir / (stem + "_estimator.csv")));
        const auto header = Json::parse(slurp(dir / (stem + ".json")));
        EXPECT_EQ(header.at("K_T").get<std::size_t>(), sr.num_episodes);
        EXPECT_EQ(header.at("resolved_config").at("mode"), "auto-average");
    }
    const auto meta = Json::parse(slurp(res.metadata_path));
    EXPECT_EQ(meta.at("regret_definition"), "t*J_star - cumulative_reward");
    EXPECT_EQ(meta.at("library_version"), kLibraryVersion);
    EXPECT_NEAR(meta.at("instance").at("D").get<double>(), 20.0, 1e-6);
    EXPECT_NEAR(meta.at("instance").at("J_star").get<double>(), gain, 0.0);
    for (const char* key : {"d", "S", "A", "U"}) EXPECT_TRUE(meta.at("instance").contains(key)) << key;
    EXPECT_NEAR(meta.at("resolved_config").at("gamma").get<double>(), 1.0 - std::sqrt(2.0 / (20.0 * 3000.0)), 1e-9);
    fs::remove_all(dir);
}

TEST(Experiment, OracleOptimalRegretStaysBounded) {
    const auto dir = scratch("oracle");
    ExperimentConfig c;
    c.environment.instance_path = wide_gap_instance(dir).string();
    c.agent = AgentKind::oracle_optimal;
    c.agent_config.horizon = 4000;
    for (std::uint64_t s = 1; s <= 1000; ++s) c.seeds.push_back(s);
    c.output_dir = (dir / "out").string();
    c.stride = 100;
    const auto res = run_experiment(c);
    const double diameter = *res.diameter;
    EXPECT_NEAR(diameter, 10.0, 1e-6);
    const auto m = mean_curve(res);
    for (std::size_t i = 0; i < m.t.size(); ++i) EXPECT_LE(m.mean[i], diameter + 4.0 * m.se[i]) << "t = " << m.t[i];
    const auto [slope, se] = last_half_slope(res);
    EXPECT_LE(slope, 1e-3 + 4.0 * se);
    EXPECT_LE(std::abs(slope), 4.0 * se + 1e-3);
    fs::remove_all(dir);
}

TEST(Experiment, RandomAgentRegretGrowsLinearly) {
    // exact gap between J* and the uniform policy's gain on the default two-state instance
    const auto p = InfiniteHardParams::from_horizon(2, HardMode::average, 20.0, 40000);
    const auto m = build_infinite(p);
    const auto tt = true_transitions(m);
    const Vector pi_u = stationary_distribution(uniform_policy_matrix(m, tt));
    const double uniform_gain = pi_u.dot(m.rewards.rowwise().mean());
    EXPECT_GE(p.optimal_gain() - uniform_gain, p.gap / 4.0);

    // empirical slope over seeds on a wide-gap instance
    const auto dir = scratch("random");
    ExperimentConfig c;
    c.environment.instance_path = wide_gap_instance(dir).string();
    c.agent = AgentKind::random;
    c.agent_config.horizon = 20000;
    for (std::uint64_t s = 1; s <= 20; ++s) c.seeds.push_back(s);
    c.output_dir = (dir / "out").string();
    const auto res = run_experiment(c);
    const auto [slope, se] = last_half_slope(res);
    EXPECT_GE(slope - 3.0 * se, 0.01 / 4.0) << "slope " << slope << " se " << se;
    fs::remove_all(dir);
}

TEST(Experiment, DeterministicOutputs) {
    const auto a = scratch("det_a"), b = scratch("det_b");
    auto ca = two_state_config(a, 2000);
    auto cb = two_state_config(b, 2000);
    cb.workers = 1;
    const auto ra = run_experiment(ca);
    run_experiment(cb);
    for (const auto& sr : ra.seeds) {
        const std::string stem = "seed_" + std::to_string(sr.seed);
        for (const auto* suffix : {".csv", "_episodes.csv"})
            EXPECT_EQ(slurp(a / (stem + suffix)), slurp(b / (stem + suffix))) << stem << suffix;
    }
    EXPECT_EQ(slurp(a / "aggregate.csv"), slurp(b / "aggregate.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Experiment, DiscountedObjective) {
    const auto dir = scratch("discounted");
    ExperimentConfig c;
    c.environment.builtin = InfiniteHardParams::from_horizon(2, HardMode::discounted, 0.95, 40000);
    c.agent = AgentKind::oracle_optimal;
    c.objective = Objective::discounted;
    c.objective_gamma = 0.95;
    c.agent_config.horizon = 500;
    c.seeds = {1, 2};
    c.output_dir = dir.string();
    const auto res = run_experiment(c);
    for (const auto& sr : res.seeds) EXPECT_NEAR(sr.final_regret, 0.0, 1e-6);
    EXPECT_EQ(Json::parse(slurp(res.metadata_path)).at("regret_definition"), "per-episode-stationary-surrogate");

    c.agent = AgentKind::ucmnlk;
    c.agent_config.gamma = 0.95;
    c.objective_gamma.reset();
    const auto ucb = run_experiment(c);
    for (const auto& sr : ucb.seeds) EXPECT_GE(sr.final_regret, -1e-6);
    fs::remove_all(dir);
}

TEST(Experiment, FailuresWriteManifest) {
    const auto dir = scratch("failure");
    auto c = two_state_config(dir, 100);
    c.auto_diameter = false; // average mode without a D bound
    try {
        run_experiment(c);
        FAIL() << "expected ExperimentFailed";
    } catch (const ExperimentFailed& e) {
        EXPECT_EQ(e.exit_code(), 2);
        EXPECT_EQ(e.partial().seeds.size(), 3U);
    }
    const auto errors = Json::parse(slurp(dir / "errors.json"));
    EXPECT_EQ(errors.size(), 3U);
    EXPECT_TRUE(fs::exists(dir / "metadata.json"));
    fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("cli");
    const std::string inst = (dir / "inst.json").string();
    EXPECT_EQ(run_cli("build-hard --family infinite --d 2 --D 20 --T 40000 --out " + inst), 0);
    EXPECT_EQ(run_cli("validate-instance --instance " + inst), 0);
    EXPECT_EQ(run_cli("oracle --instance " + inst + " --objective avg"), 0);
    EXPECT_EQ(run_cli("oracle --instance " + inst + " --objective disc --gamma 0.9"), 0);
    EXPECT_EQ(run_cli("build-hard --family finite --d 2 --H 4 --K 2 --out " + (dir / "fin.json").string()), 0);
    EXPECT_EQ(run_cli("build-hard --family finite --d 2 --H 4 --K 1 --out " + (dir / "bad.json").string()), 2);
    EXPECT_EQ(run_cli("build-hard --family infinite --d 2 --D 20 --T 10 --out " + (dir / "bad.json").string()), 2);
    EXPECT_EQ(run_cli("oracle --instance " + inst + " --objective disc"), 2);
    EXPECT_EQ(run_cli("no-such-command"), 2);
    EXPECT_EQ(run_cli("validate-instance --instance " + (dir / "missing.json").string()), 2);

    const std::string cfg = (dir / "cfg.json").string();
    write_text(cfg, R"({"environment": {"instance": "inst.json"},
 "agent": {"kind": "ucmnlk", "gamma": "auto-average", "diameter_bound": "auto", "c_beta": 1.6, "horizon": 300},
 "seeds": [1], "output_dir": "out"})");
    EXPECT_EQ(run_cli("run --config " + cfg + " --out " + (dir / "run").string() + " --seeds 2 --workers 1"), 0);
    EXPECT_TRUE(fs::exists(dir / "run" / "seed_2.csv"));
    EXPECT_TRUE(fs::exists(dir / "run" / "aggregate.csv"));
    write_text(cfg, R"({"environment": {"instance": "inst.json"}, "agent": {"kind": "nope", "horizon": 10}})");
    EXPECT_EQ(run_cli("run --config " + cfg), 2);
    write_text(cfg, "{ not json");
    EXPECT_EQ(run_cli("run --config " + cfg), 2);
    fs::remove_all(dir);
}
