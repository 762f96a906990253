// Command-line front end: train from a config, evaluate a checkpoint, and
// dump exact-oracle fixtures.
#include "fgdqn/errors.hpp"
#include "fgdqn/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace fgdqn;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kAllDiverged = 3, kNumeric = 4 };

int cmd_train(const std::string& config_path, const std::vector<std::uint64_t>& seeds, const std::string& out) {
    RunConfig cfg = load_config(config_path);
    if (!seeds.empty()) cfg.seeds = seeds;
    if (!out.empty()) cfg.out_dir = out;
    const TrainOutcome res = train(cfg);
    for (const auto& s : res.seeds) {
        std::printf("seed %llu steps %ld %s proxy %.6g csv %s\n", static_cast<unsigned long long>(s.seed), s.steps,
                    s.diverged ? "diverged" : "ok", s.final_proxy, s.csv_path.c_str());
    }
    if (res.all_diverged()) {
        std::fprintf(stderr, "all seeds diverged\n");
        return kAllDiverged;
    }
    return kOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& env_key, long horizon, std::uint64_t seed,
             int arms, int budget) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const auto env = make_environment(env_key);
    const int feat = env->encoding().dimension();
    Rng rng = child_stream(seed, "eval");
    if (ckpt.kind == "qnet") {
        if (ckpt.spec.input_dim != feat || ckpt.spec.output_dim != env->num_actions()) {
            std::fprintf(stderr,
                         "dimension mismatch: checkpoint maps %d inputs to %d actions, %s has %d features and %d "
                         "actions\n",
                         ckpt.spec.input_dim, ckpt.spec.output_dim, env_key.c_str(), feat, env->num_actions());
            return kConfig;
        }
        const QNetwork q(ckpt.spec, env->encoding());
        const long h = horizon > 0 ? horizon : default_eval_horizon(env_key, false);
        std::printf("average_reward %.10g\n", evaluate_greedy(*env, q, ckpt.params, h, rng));
        return kOk;
    }
    if (ckpt.kind == "index") {
        if (ckpt.spec.input_dim != feat || ckpt.spec.output_dim != 1) {
            std::fprintf(stderr, "dimension mismatch: index network takes %d inputs, %s has %d features\n",
                         ckpt.spec.input_dim, env_key.c_str(), feat);
            return kConfig;
        }
        const Mlp<double> net(ckpt.spec);
        Eigen::VectorXd lam(env->num_states());
        for (StateId k = 0; k < env->num_states(); ++k) lam(k) = net.forward(ckpt.params, env->encode(k))(0);
        const auto [def_arms, def_budget] = default_rmab_size(env_key);
        const long h = horizon > 0 ? horizon : default_eval_horizon(env_key, true);
        std::printf("average_reward %.10g\n", evaluate_index_policy(*env, lam, arms > 0 ? arms : def_arms,
                                                                    budget > 0 ? budget : def_budget, h, rng));
        return kOk;
    }
    std::fprintf(stderr, "checkpoint kind '%s' cannot be evaluated directly\n", ckpt.kind.c_str());
    return kConfig;
}

int cmd_fixtures(const std::string& env_key, const std::string& out_dir) {
    const auto env = make_environment(env_key);
    std::filesystem::create_directories(out_dir);
    const auto base = std::filesystem::path(out_dir) / env_key;
    std::ofstream(base.string() + ".oracle.txt") << oracle_fixture(*env);
    std::printf("%s.oracle.txt\n", base.string().c_str());
    if (env->num_actions() == 2) {
        std::ofstream(base.string() + ".whittle.txt") << whittle_fixture(*env);
        std::printf("%s.whittle.txt\n", base.string().c_str());
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Average-reward Q-learning with full-gradient replay"};
    app.require_subcommand(1);

    std::string config, out, fixtures_out, ckpt, env_key;
    std::vector<std::uint64_t> seeds;
    long horizon = 0;
    std::uint64_t eval_seed = 1;
    int arms = 0, budget = 0;
    bool whittle = false;

    auto* train_cmd = app.add_subcommand("train", "run a configured experiment");
    train_cmd->add_option("config", config, "INI config file")->required();
    train_cmd->add_option("--seed", seeds, "override the seed list");
    train_cmd->add_option("--out", out, "override the output directory");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint's policy");
    eval_cmd->add_option("checkpoint", ckpt)->required();
    eval_cmd->add_option("env", env_key)->required();
    eval_cmd->add_option("--horizon", horizon);
    eval_cmd->add_option("--seed", eval_seed);
    eval_cmd->add_option("--arms", arms);
    eval_cmd->add_option("--budget", budget);

    auto* oracle_cmd = app.add_subcommand("oracle", "print exact relative values (or Whittle indices)");
    oracle_cmd->add_option("env", env_key)->required();
    oracle_cmd->add_flag("--whittle", whittle);

    auto* fixtures_cmd = app.add_subcommand("fixtures", "write oracle fixture files");
    fixtures_cmd->add_option("env", env_key)->required();
    fixtures_cmd->add_option("--out", fixtures_out, "output directory")->default_val("fixtures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*train_cmd) return cmd_train(config, seeds, out);
        if (*eval_cmd) return cmd_eval(ckpt, env_key, horizon, eval_seed, arms, budget);
        if (*oracle_cmd) {
            const auto env = make_environment(env_key);
            std::cout << (whittle ? whittle_fixture(*env) : oracle_fixture(*env));
            return kOk;
        }
        if (*fixtures_cmd) return cmd_fixtures(env_key, fixtures_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const NumericOverflow& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kNumeric;
    } catch (const NoConvergence& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kNumeric;
    } catch (const SingularSystem& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kNumeric;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsage;
    }
    return kUsage;
}
