#pragma once

#include "fgdqn/env.hpp"
#include "fgdqn/learners.hpp"
#include "fgdqn/mlp.hpp"
#include "fgdqn/oracle.hpp"
#include "fgdqn/qnetwork.hpp"
#include "fgdqn/whittle.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fgdqn {

enum class Algorithm { RviFgdqn, RviDqn, DiffqFgdqn, DiffqDqn, WhittleFgdqn, WhittleDqn };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm a);
inline bool is_whittle(Algorithm a) { return a == Algorithm::WhittleFgdqn || a == Algorithm::WhittleDqn; }

/// Everything a training run needs. Loaded from an INI-style file with one
/// section per module; see README for the keys.
struct RunConfig {
    std::string env_key = "circulant";
    EnvOverrides env_overrides;
    Algorithm algorithm = Algorithm::RviFgdqn;

    std::vector<int> hidden;        // empty: size from the state space
    std::vector<int> index_hidden{32};

    StepSchedule a_schedule = StepSchedule::power_law(0.05, 5000.0, 0.75);
    StepSchedule b_schedule = StepSchedule::power_law(0.01, 5000.0, 0.9);
    std::size_t batch = 32;
    std::size_t capacity = 100'000;
    std::size_t per_key_cap = 256;
    std::size_t warmup = 1000;

    OffsetFn::Kind offset_kind = OffsetFn::Kind::FixedStateAction;
    std::optional<StateId> offset_state;  // unset: most frequent pair after warm-up
    ActionId offset_action = 0;
    double eta = 1.0;
    RbarMode rbar_mode = RbarMode::GenerativeSweep;
    long target_sync = 100;

    double epsilon = 0.1;
    double epsilon_end = 0.01;  // RMAB runs decay epsilon to this over the first half

    long total_steps = 10'000;
    long log_period = 100;
    long eval_period = 1000;
    long eval_horizon = 0;  // 0: default for the environment / algorithm

    int arms = 0;    // 0: default for the arm environment
    int budget = 0;
    long sigma_period = 1;
    std::vector<StateId> probes;  // empty: all states when there are at most 16

    std::vector<std::uint64_t> seeds{1};
    std::string out_dir = "runs/out";

    /// Throws ConfigError on inconsistent settings.
    void validate() const;
};

RunConfig parse_config(std::istream& in);
/// Throws ConfigError naming the path when it cannot be read or parsed.
RunConfig load_config(const std::string& path);
/// Resolved configuration and build description as JSON.
std::string manifest_json(const RunConfig& cfg);

MlpSpec default_q_spec(const Environment& env, const std::vector<int>& hidden);
long default_eval_horizon(const std::string& env_key, bool index_policy);
std::pair<int, int> default_rmab_size(const std::string& env_key);

struct Checkpoint {
    std::string kind;  // "qnet", "whittle-qnet" or "index"
    MlpSpec spec;
    Paramd params;
};

/// Text format: a magic line, kind, layer widths, then d followed by the d
/// values in round-trip precision.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Time-averaged reward of the greedy policy over `horizon` steps from a
/// uniformly drawn start state.
double evaluate_greedy(const Environment& env, const QNetwork& q, const Paramd& theta, long horizon, Rng& rng);

inline constexpr const char* kCsvHeader = "seed,step,loss,proxy,eval_reward,diverged";

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool diverged = false;
    long steps = 0;
    double final_proxy = 0.0;
    std::string csv_path;
    std::string checkpoint_path;
    std::string index_checkpoint_path;  // whittle runs only
};

struct TrainOutcome {
    std::vector<SeedOutcome> seeds;
    bool all_diverged() const;
};

/// Runs every seed (in parallel when hardware allows) and writes
/// seed_<s>.csv, seed_<s>.ckpt and manifest.json under cfg.out_dir.
TrainOutcome train(const RunConfig& cfg);
SeedOutcome train_seed(const RunConfig& cfg, std::uint64_t seed);

/// Oracle fixture text: beta, then state, V and Q per action.
std::string oracle_fixture(const Environment& env);
/// Whittle fixture text: indexability flag, then state and exact index.
std::string whittle_fixture(const Environment& env);

struct OracleFixture {
    double beta = 0.0;
    Eigen::VectorXd V;
    Eigen::MatrixXd Q;
};
struct WhittleFixture {
    bool indexable = false;
    Eigen::VectorXd index;
};
OracleFixture parse_oracle_fixture(std::istream& in);
WhittleFixture parse_whittle_fixture(std::istream& in);

}  // namespace fgdqn
