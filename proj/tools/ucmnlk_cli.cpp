#include "ucmnlk/ucmnlk.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace ucmnlk;

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (cell.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(cell, &used));
            if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw ConfigError("bad seed \"" + cell + "\" in --seed-list");
        }
    }
    return out;
}

std::vector<int> parse_signs(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (cell == "1" || cell == "+1") out.push_back(1);
        else if (cell == "-1") out.push_back(-1);
        else throw ConfigError("bad sign \"" + cell + "\" in --signs (use 1 or -1)");
    }
    return out;
}

Json policy_json(const Policy& pi) {
    Json a = Json::array();
    for (auto x : pi) a.push_back(x);
    return a;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"UCMNLK experiment runner"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment config over seeds");
    std::string config_path, out_dir, seed_list;
    std::size_t n_seeds = 0, workers = 0;
    bool full_log = false;
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "output directory (overrides the config)");
    auto* seeds_opt = run->add_option("--seeds", n_seeds, "use seeds 1..N");
    run->add_option("--seed-list", seed_list, "comma-separated seeds")->excludes(seeds_opt);
    run->add_option("--workers", workers, "worker threads (0: available parallelism)");
    run->add_flag("--full-log", full_log, "write every step instead of snapshots");

    auto* validate_cmd = app.add_subcommand("validate-instance", "check an instance file");
    std::string instance_path;
    validate_cmd->add_option("--instance", instance_path, "instance file (JSON)")->required();

    auto* build = app.add_subcommand("build-hard", "write a hard instance file");
    std::string family, signs;
    std::size_t d = 2, horizon = 0, h = 0, k = 0;
    double diameter = 0.0, gamma = 0.0;
    build->add_option("--family", family, "infinite | finite")
        ->required()
        ->check(CLI::IsMember({"infinite", "finite"}));
    build->add_option("--d", d, "dimension d >= 2")->required();
    auto* d_opt = build->add_option("--D", diameter, "diameter (infinite, average mode)");
    build->add_option("--gamma", gamma, "discount (infinite, discounted mode)")->excludes(d_opt);
    build->add_option("--H", h, "horizon H (finite)");
    build->add_option("--T", horizon, "T (infinite)");
    build->add_option("--K", k, "episodes K (finite)");
    build->add_option("--signs", signs, "sign pattern, e.g. 1,-1 (infinite only)");
    build->add_option("--out", out_dir, "output instance file")->required();

    auto* oracle_cmd = app.add_subcommand("oracle", "solve an instance exactly");
    std::string objective = "avg";
    double tol = 1e-10;
    oracle_cmd->add_option("--instance", instance_path, "instance file (JSON)")->required();
    oracle_cmd->add_option("--objective", objective, "avg | disc")->check(CLI::IsMember({"avg", "disc"}));
    oracle_cmd->add_option("--gamma", gamma, "discount factor for disc");
    oracle_cmd->add_option("--tol", tol, "solver tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            ExperimentConfig cfg = load_experiment(config_path);
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            if (n_seeds > 0) {
                cfg.seeds.clear();
                for (std::uint64_t s = 1; s <= n_seeds; ++s) cfg.seeds.push_back(s);
            }
            if (!seed_list.empty()) cfg.seeds = parse_seed_list(seed_list);
            if (run->count("--workers")) cfg.workers = workers;
            if (full_log) cfg.full_log = true;
            const auto res = run_experiment(cfg);
            const auto& last = res.aggregate.back();
            std::cout << "seeds: " << res.seeds.size() << "  T: " << last.t
                      << "  median regret: " << format_real(last.median) << "\n"
                      << "wrote " << res.aggregate_path << " and " << res.metadata_path << "\n";
            return 0;
        }
        if (*validate_cmd) {
            const LoadedInstance li = load_instance(instance_path);
            Json out{{"instance", instance_path}, {"invariants", "ok"},
                     {"S", li.mdp.num_states}, {"A", li.mdp.num_actions}, {"d", li.mdp.dim},
                     {"U", li.mdp.max_reachable()}};
            bool ok = true;
            if (li.hard) {
                const ValidationReport r = std::visit(
                    [&](const auto& p) { return validate_instance(li.mdp, p); }, *li.hard);
                out["hard_instance_report"] = validation_report_to_json(r);
                ok = r.passed();
            }
            std::cout << out.dump(1) << "\n";
            return ok ? 0 : 2;
        }
        if (*build) {
            MnlMdp m;
            HardParams params;
            ValidationReport report;
            if (family == "infinite") {
                if (!horizon) throw ConfigError("--T is required for the infinite family");
                std::vector<int> sg = signs.empty() ? std::vector<int>{} : parse_signs(signs);
                InfiniteHardParams p;
                if (build->count("--D"))
                    p = InfiniteHardParams::from_horizon(d, HardMode::average, diameter, horizon, sg);
                else if (build->count("--gamma"))
                    p = InfiniteHardParams::from_horizon(d, HardMode::discounted, gamma, horizon, sg);
                else
                    throw ConfigError("infinite family needs --D or --gamma");
                m = build_infinite(p);
                report = validate_instance(m, p);
                params = p;
            } else {
                if (!h || !k) throw ConfigError("--H and --K are required for the finite family");
                const auto p = FiniteHardParams::make(d, h, k);
                m = build_finite(p);
                report = validate_instance(m, p);
                params = p;
            }
            save_instance(out_dir, m, params);
            std::cout << validation_report_to_json(report).dump(1) << "\n";
            return report.passed() ? 0 : 2;
        }
        if (*oracle_cmd) {
            const LoadedInstance li = load_instance(instance_path);
            const TransitionTable tt = true_transitions(li.mdp);
            Json out{{"instance", instance_path}};
            if (objective == "avg") {
                const ValueTable vt = solve_average(li.mdp, tt, tol);
                out["objective"] = "average";
                out["J_star"] = *vt.gain;
                out["bias"] = vector_to_json(vt.v);
                out["policy"] = policy_json(greedy_policy(vt.q));
                out["sweeps"] = vt.sweeps;
                out["diameter"] = compute_diameter(li.mdp, 1e-9);
            } else {
                if (!oracle_cmd->count("--gamma")) throw ConfigError("--gamma is required for disc");
                const ValueTable vt = solve_discounted(li.mdp, tt, gamma, tol);
                out["objective"] = "discounted";
                out["gamma"] = gamma;
                out["V_star"] = vector_to_json(vt.v);
                out["policy"] = policy_json(greedy_policy(vt.q));
                out["sweeps"] = vt.sweeps;
            }
            std::cout << out.dump(1) << "\n";
            return 0;
        }
    } catch (const ExperimentFailed& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}
