#include "doctest.h"

#include "fgdqn/errors.hpp"
#include "fgdqn/harness.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace fgdqn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("fgdqn_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

int run_cli(const std::string& args) {
    const char* cli = std::getenv("FGDQN_CLI");
    REQUIRE_MESSAGE(cli != nullptr, "FGDQN_CLI must point at the command-line binary");
    const int status = std::system((std::string(cli) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string small_run(const fs::path& out, const std::string& algorithm, const std::string& env, long steps) {
    std::ostringstream os;
    os << "[run]\nalgorithm = " << algorithm << "\nenv = " << env << "\nseeds = 1, 2\ntotal_steps = " << steps
       << "\nout = " << out.string() << "\nlog_period = 50\n[eval]\nperiod = 100\nhorizon = 200\n"
       << "[replay]\nwarmup = 200\n";
    return os.str();
}

}  // namespace

TEST_CASE("config defaults and overrides") {
    const auto c = parse("[run]\nalgorithm = diffq-fgdqn\nenv = restart\nseeds = 3,4,5\n"
                         "[learner]\nschedule = constant\na0 = 0.01\nrbar_mode = replay-batch\n"
                         "[env]\n[net]\nhidden = 32, 16\n");
    CHECK(c.algorithm == Algorithm::DiffqFgdqn);
    CHECK(c.env_key == "restart");
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4, 5});
    CHECK(c.a_schedule.kind == StepSchedule::Kind::Constant);
    CHECK(c.a_schedule.a0 == 0.01);
    CHECK(c.rbar_mode == RbarMode::ReplayBatch);
    CHECK(c.hidden == std::vector<int>{32, 16});
    CHECK(c.batch == 32);
    CHECK(c.epsilon == 0.1);
    CHECK(c.per_key_cap == 256);
    CHECK(c.target_sync == 100);
    CHECK_FALSE(c.offset_state.has_value());

    const auto d = parse("[run]\nenv = deadline-small\n[env]\ncost = 0.25\n");
    CHECK(d.env_overrides.at("cost") == 0.25);
    CHECK(parse("[run]\nalgorithm = diffq-dqn\n").target_sync == 0);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse("[run]\nalgorithm = sarsa\n"), ConfigError);
    CHECK_THROWS_AS(parse("[run]\ntypo = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[bogus]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse("[learner]\nbatch = many\n"), ConfigError);
    CHECK_THROWS_AS(parse("[learner]\nbatch = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse("[explore]\nepsilon = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse("[run]\nalgorithm = whittle-fgdqn\n[learner]\noffset = mean\n"), ConfigError);
    CHECK_THROWS_AS(parse("[run\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    const auto dir = scratch("ckpt");
    Mlp<double> net(MlpSpec{5, {7, 3}, 2});
    Rng rng(9);
    Checkpoint c{"qnet", net.spec(), net.init(rng)};
    c.params(0) = 1.0 / 3.0;
    c.params(1) = -2.5e-300;
    const auto path = (dir / "a.ckpt").string();
    save_checkpoint(path, c);
    const auto back = load_checkpoint(path);
    CHECK(back.kind == "qnet");
    CHECK(back.spec == c.spec);
    CHECK(back.params == c.params);

    std::ofstream(dir / "bad.ckpt") << "fgdqn-checkpoint 1\nkind qnet\nwidths 2 3 1\nd 4\n0\n";
    CHECK_THROWS(load_checkpoint((dir / "bad.ckpt").string()));
}

TEST_CASE("greedy evaluation") {
    const auto env = make_environment("circulant");
    const QNetwork q(default_q_spec(*env, {}), env->encoding());
    Rng rng(1);
    const Paramd theta = q.mlp().init(rng);
    CHECK_THROWS_AS(evaluate_greedy(*env, q, theta, 0, rng), std::invalid_argument);
    const double v = evaluate_greedy(*env, q, theta, 500, rng);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
}

TEST_CASE("fixtures parse back") {
    const auto env = make_environment("restart");
    std::istringstream o(oracle_fixture(*env));
    const auto of = parse_oracle_fixture(o);
    CHECK(of.beta == doctest::Approx(0.9));
    CHECK(of.Q.rows() == 5);
    CHECK(of.Q.cols() == 2);
    std::istringstream w(whittle_fixture(*env));
    const auto wf = parse_whittle_fixture(w);
    CHECK(wf.indexable);
    CHECK(wf.index(0) == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("training writes metrics, checkpoints and a manifest") {
    const auto dir = scratch("train");
    const auto cfg = parse(small_run(dir, "rvi-fgdqn", "circulant", 300));
    const auto res = train(cfg);
    REQUIRE(res.seeds.size() == 2);
    CHECK_FALSE(res.all_diverged());
    const auto csv = slurp(dir / "seed_1.csv");
    CHECK(csv.rfind(std::string(kCsvHeader) + "\n", 0) == 0);
    CHECK(csv.find("\n1,300,") != std::string::npos);
    CHECK(fs::exists(dir / "seed_2.ckpt"));
    const auto manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"build\"") != std::string::npos);
    CHECK(manifest.find("rvi-fgdqn") != std::string::npos);
    const auto ck = load_checkpoint((dir / "seed_1.ckpt").string());
    CHECK(ck.spec.input_dim == 4);
}

TEST_CASE("every algorithm runs a few steps") {
    for (const auto& [algo, env] : std::vector<std::pair<std::string, std::string>>{
             {"rvi-dqn", "forest"},
             {"diffq-fgdqn", "restart"},
             {"diffq-dqn", "access-control"},
             {"whittle-fgdqn", "circulant"},
             {"whittle-dqn", "deadline-small"}}) {
        CAPTURE(algo);
        const auto dir = scratch("algo_" + algo);
        auto text = small_run(dir, algo, env, 120);
        if (algo.rfind("whittle", 0) == 0) text += "[whittle]\narms = 6\nbudget = 2\n";
        const auto res = train(parse(text));
        CHECK_FALSE(res.all_diverged());
        if (algo.rfind("whittle", 0) == 0) {
            const auto csv = slurp(dir / "seed_1.csv");
            CHECK(csv.find("eval_index_policy_reward,mean_gap_loss") != std::string::npos);
            CHECK(fs::exists(dir / "seed_1.index.ckpt"));
        }
    }
}

TEST_CASE("command line: determinism, zero steps, errors and divergence") {
    const auto dir = scratch("cli");
    std::ofstream(dir / "a.ini") << small_run(dir / "a", "rvi-fgdqn", "circulant", 400);
    std::ofstream(dir / "b.ini") << small_run(dir / "b", "rvi-fgdqn", "circulant", 400);
    REQUIRE(run_cli("train " + (dir / "a.ini").string()) == 0);
    REQUIRE(run_cli("train " + (dir / "b.ini").string()) == 0);
    CHECK(slurp(dir / "a" / "seed_1.csv") == slurp(dir / "b" / "seed_1.csv"));
    CHECK(slurp(dir / "a" / "seed_2.ckpt") == slurp(dir / "b" / "seed_2.ckpt"));
    CHECK(slurp(dir / "a" / "seed_1.csv") != slurp(dir / "a" / "seed_2.csv"));

    CHECK(run_cli("train " + (dir / "a.ini").string() + " --seed 7 --out " + (dir / "z").string()) == 0);
    CHECK(fs::exists(dir / "z" / "seed_7.csv"));

    std::ofstream(dir / "zero.ini") << small_run(dir / "zero", "rvi-fgdqn", "circulant", 0);
    CHECK(run_cli("train " + (dir / "zero.ini").string()) == 0);
    CHECK(slurp(dir / "zero" / "seed_1.csv") == std::string(kCsvHeader) + "\n");
    const auto init = load_checkpoint((dir / "zero" / "seed_1.ckpt").string());
    CHECK(init.params.size() == init.spec.num_params());

    std::ofstream(dir / "bad.ini") << "[run]\nalgorithm = nope\n";
    CHECK(run_cli("train " + (dir / "bad.ini").string()) == 2);
    CHECK(run_cli("train " + (dir / "missing.ini").string()) == 2);
    CHECK(run_cli("") != 0);
    CHECK(run_cli("frobnicate") != 0);

    std::ofstream(dir / "div.ini") << small_run(dir / "div", "rvi-dqn", "circulant", 2000)
                                   << "[learner]\nschedule = constant\na0 = 1e6\n";
    CHECK(run_cli("train " + (dir / "div.ini").string()) == 3);
    const auto div_csv = slurp(dir / "div" / "seed_1.csv");
    CHECK(div_csv.substr(div_csv.size() - 2) == "1\n");

    const auto ckpt = (dir / "a" / "seed_1.ckpt").string();
    CHECK(run_cli("eval " + ckpt + " circulant --horizon 100") == 0);
    CHECK(run_cli("eval " + ckpt + " restart") == 2);
    CHECK(run_cli("eval " + ckpt + " nowhere") == 2);
    CHECK(run_cli("oracle circulant") == 0);
    CHECK(run_cli("oracle circulant --whittle") == 0);
    CHECK(run_cli("fixtures restart --out " + (dir / "fx").string()) == 0);
    CHECK(fs::exists(dir / "fx" / "restart.oracle.txt"));
    CHECK(fs::exists(dir / "fx" / "restart.whittle.txt"));
}
