// Picks c_beta for the coverage experiment from pilot seeds and writes
// configs/coverage_instance.json and configs/coverage.json.
//
// Rule: start at c = 1, set c to the 0.95 quantile of the pilot runs' worst
// ratio ||theta_hat_t - theta*||_{Sigma_t} / beta_t(c = 1) (rerunning, since c
// changes the agent's behavior) until it stops moving, then add 10% and round
// up to two significant digits.

#include "ucmnlk/ucmnlk.hpp"

#include <iostream>

using namespace ucmnlk;

namespace {

constexpr std::uint64_t kInstanceSeed = 7;
constexpr std::uint64_t kPilotFirst = 1001;
constexpr std::uint64_t kPilotCount = 50;
constexpr std::size_t kHorizon = 10000;
constexpr double kGamma = 0.9;
constexpr double kDelta = 0.1;

double round_up_2sig(double x) {
    const double p = std::pow(10.0, std::floor(std::log10(x)) - 1.0);
    return std::ceil(x / p) * p;
}

} // namespace

int main(int argc, char** argv) {
    const std::string dir = argc > 1 ? argv[1] : UCMNLK_CONFIG_DIR;
    RandomMdpSpec params;
    params.num_states = 5;
    params.num_actions = 3;
    params.dim = 3;
    params.max_reachable = 3;
    params.l_phi = 1.0;
    params.l_theta = 1.0;
    Rng rng = derive_rng(kInstanceSeed, 0);
    const MnlMdp mdp = random_mdp(params, rng);
    validate(mdp);
    save_instance(dir + "/coverage_instance.json", mdp);

    AgentConfig cfg;
    cfg.gamma = kGamma;
    cfg.delta = kDelta;
    cfg.horizon = kHorizon;
    double c = 1.0;
    std::vector<double> history;
    for (int iter = 0; iter < 8; ++iter) {
        cfg.c_beta = c;
        std::vector<double> unit;
        for (std::uint64_t s = kPilotFirst; s < kPilotFirst + kPilotCount; ++s) {
            cfg.seed = s;
            unit.push_back(coverage_run(mdp, cfg).worst_ratio * c);
        }
        std::sort(unit.begin(), unit.end());
        const double next = quantile_sorted(unit, 0.95);
        std::cout << "iteration " << iter << ": c = " << c << " -> " << next << "\n";
        history.push_back(next);
        if (std::abs(next - c) <= 1e-3 * c) {
            c = next;
            break;
        }
        c = next;
    }
    const double tuned = round_up_2sig(1.1 * c);
    Json out{{"instance", "coverage_instance.json"},
             {"instance_seed", kInstanceSeed},
             {"gamma", kGamma},
             {"n_devi", "auto"},
             {"delta", kDelta},
             {"horizon", kHorizon},
             {"c_beta", tuned},
             {"pilot_seeds", {kPilotFirst, kPilotFirst + kPilotCount - 1}},
             {"tuning_rule", "fixed point of the 0.95 quantile of pilot worst ratios, plus 10%, rounded up to 2 significant digits"},
             {"tuning_history", history}};
    write_text(dir + "/coverage.json", out.dump(1) + "\n");
    std::cout << "c_beta = " << tuned << "\n";
    return 0;
}
