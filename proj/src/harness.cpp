#include "fgdqn/harness.hpp"

#include "fgdqn/errors.hpp"
#include "fgdqn/replay.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/json_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#ifndef FGDQN_GIT_DESCRIBE
#define FGDQN_GIT_DESCRIBE "unknown"
#endif

namespace fgdqn {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

const std::vector<std::pair<Algorithm, std::string>> kAlgorithms = {
    {Algorithm::RviFgdqn, "rvi-fgdqn"},         {Algorithm::RviDqn, "rvi-dqn"},
    {Algorithm::DiffqFgdqn, "diffq-fgdqn"},     {Algorithm::DiffqDqn, "diffq-dqn"},
    {Algorithm::WhittleFgdqn, "whittle-fgdqn"}, {Algorithm::WhittleDqn, "whittle-dqn"},
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',' || c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

template <class T>
T convert(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    T v{};
    is >> v;
    if (is.fail() || !(is >> std::ws).eof()) throw ConfigError("bad value for " + key + ": '" + text + "'");
    return v;
}

template <class T>
std::vector<T> convert_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) out.push_back(convert<T>(key, item));
    return out;
}

StepSchedule read_schedule(const pt::ptree& tree, const std::string& sec, const std::string& prefix,
                           StepSchedule s) {
    const auto kind = tree.get<std::string>(sec + "." + prefix + "schedule", "power");
    auto num = [&](const std::string& k, double def) {
        auto v = tree.get_optional<std::string>(sec + "." + prefix + k);
        return v ? convert<double>(prefix + k, *v) : def;
    };
    s.a0 = num("a0", s.a0);
    if (kind == "power") {
        s.kind = StepSchedule::Kind::PowerLaw;
        s.tau = num("tau", s.tau);
        s.kappa = num("kappa", s.kappa);
    } else if (kind == "constant") {
        s = StepSchedule::constant(s.a0);
    } else {
        throw ConfigError("unknown schedule '" + kind + "'");
    }
    return s;
}

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"run", {"algorithm", "env", "seeds", "total_steps", "out", "log_period"}},
    {"net", {"hidden", "index_hidden"}},
    {"learner",
     {"batch", "schedule", "a0", "tau", "kappa", "offset", "offset_state", "offset_action", "eta", "rbar_mode",
      "target_sync"}},
    {"whittle", {"arms", "budget", "b_schedule", "b_a0", "b_tau", "b_kappa", "sigma_period", "probes"}},
    {"replay", {"capacity", "per_key_cap", "warmup"}},
    {"explore", {"epsilon", "epsilon_end"}},
    {"eval", {"period", "horizon"}},
};

struct RviLoop {
    RviLearnerState st;
    bool full;
    StepReport step(const QNetwork& q, const ReplayBuffer& b, std::size_t batch, Rng& rng) {
        return full ? fgdqn_rvi_step(st, q, b, batch, rng) : dqn_rvi_step(st, q, b, batch, rng);
    }
    const Paramd& theta() const { return st.theta; }
};

struct DiffqLoop {
    DiffQLearnerState st;
    bool full;
    const Environment* env;
    StepReport step(const QNetwork& q, const ReplayBuffer& b, std::size_t batch, Rng& rng) {
        return full ? diffq_fgdqn_step(st, q, b, *env, batch, rng) : diffq_dqn_step(st, q, b, *env, batch, rng);
    }
    const Paramd& theta() const { return st.theta; }
};

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& header) : out_(path) {
        if (!out_) throw std::runtime_error("cannot write " + path);
        out_ << header << '\n';
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

std::string seed_path(const RunConfig& cfg, std::uint64_t seed, const std::string& suffix) {
    return (fs::path(cfg.out_dir) / ("seed_" + std::to_string(seed) + suffix)).string();
}

ActionId epsilon_greedy(const QNetwork& q, const Paramd& theta, StateId s, double eps, Rng& rng) {
    if (uniform01(rng) < eps) return uniform_int(rng, 0, q.num_actions() - 1);
    return q.greedy(theta, s);
}

OffsetFn make_offset(const RunConfig& cfg, StateId s0, ActionId u0) {
    switch (cfg.offset_kind) {
        case OffsetFn::Kind::FixedStateAction: return OffsetFn::fixed(s0, u0);
        case OffsetFn::Kind::MaxAtState: return OffsetFn::max_at(s0);
        case OffsetFn::Kind::GlobalMax: return OffsetFn::global_max();
        case OffsetFn::Kind::Mean: return OffsetFn::mean();
    }
    return {};
}

template <class Loop>
SeedOutcome run_tabular_seed(const RunConfig& cfg, std::uint64_t seed, const Environment& env, Loop loop,
                             const std::function<void(Loop&, StateId, ActionId, const QNetwork&, Rng&)>& setup) {
    SeedOutcome out;
    out.seed = seed;
    out.csv_path = seed_path(cfg, seed, ".csv");
    out.checkpoint_path = seed_path(cfg, seed, ".ckpt");

    Rng init_rng = child_stream(seed, "init");
    Rng env_rng = child_stream(seed, "env");
    Rng explore_rng = child_stream(seed, "explore");
    Rng replay_rng = child_stream(seed, "replay");

    const QNetwork q(default_q_spec(env, cfg.hidden), env.encoding());
    const Paramd theta0 = q.mlp().init(init_rng);
    CsvWriter csv(out.csv_path, kCsvHeader);
    if (cfg.total_steps == 0) {
        save_checkpoint(out.checkpoint_path, {"qnet", q.mlp().spec(), theta0});
        return out;
    }

    ReplayBuffer buffer(cfg.capacity, cfg.per_key_cap);
    StateId s = uniform_int(env_rng, 0, env.num_states() - 1);
    for (std::size_t w = 0; w < cfg.warmup; ++w) {
        const ActionId u = uniform_int(explore_rng, 0, env.num_actions() - 1);
        const auto r = env.step(s, u, env_rng);
        buffer.push({s, u, r.reward, r.next_state});
        s = r.next_state;
    }
    StateId s0 = 0;
    ActionId u0 = cfg.offset_action;
    if (cfg.offset_state) {
        s0 = *cfg.offset_state;
        env.check(s0, u0);
    } else if (!buffer.empty()) {
        std::tie(s0, u0) = buffer.most_frequent_state_action();
    }
    setup(loop, s0, u0, q, init_rng);
    loop.st.theta = theta0;
    loop.st.target = theta0;

    const long horizon = cfg.eval_horizon > 0 ? cfg.eval_horizon : default_eval_horizon(env.key(), false);
    for (long n = 1; n <= cfg.total_steps; ++n) {
        const ActionId u = epsilon_greedy(q, loop.theta(), s, cfg.epsilon, explore_rng);
        const auto r = env.step(s, u, env_rng);
        buffer.push({s, u, r.reward, r.next_state});
        s = r.next_state;
        StepReport rep;
        try {
            rep = loop.step(q, buffer, cfg.batch, replay_rng);
        } catch (const NumericOverflow&) {
            out.diverged = true;
            out.steps = n;
            out.checkpoint_path.clear();
            csv.row({std::to_string(seed), std::to_string(n), "", "", "", "1"});
            return out;
        }
        out.steps = n;
        out.final_proxy = rep.proxy;
        const bool eval_now = n % cfg.eval_period == 0 || n == cfg.total_steps;
        if (eval_now || n % cfg.log_period == 0) {
            std::string ev;
            if (eval_now) {
                Rng eval_rng = child_stream(seed, "eval", static_cast<std::uint64_t>(n));
                ev = fmt(evaluate_greedy(env, q, loop.theta(), horizon, eval_rng));
            }
            csv.row({std::to_string(seed), std::to_string(n), fmt(rep.loss), fmt(rep.proxy), ev, "0"});
        }
    }
    save_checkpoint(out.checkpoint_path, {"qnet", q.mlp().spec(), loop.theta()});
    return out;
}

SeedOutcome run_whittle_seed(const RunConfig& cfg, std::uint64_t seed, const Environment& arm) {
    SeedOutcome out;
    out.seed = seed;
    out.csv_path = seed_path(cfg, seed, ".csv");
    out.checkpoint_path = seed_path(cfg, seed, ".ckpt");
    out.index_checkpoint_path = seed_path(cfg, seed, ".index.ckpt");

    const auto [def_arms, def_budget] = default_rmab_size(arm.key());
    RmabConfig rc;
    rc.arms = cfg.arms > 0 ? cfg.arms : def_arms;
    rc.budget = cfg.budget > 0 ? cfg.budget : def_budget;
    rc.full_gradient = cfg.algorithm == Algorithm::WhittleFgdqn;
    rc.q_hidden = cfg.hidden.empty() ? std::vector<int>{64} : cfg.hidden;
    rc.index_hidden = cfg.index_hidden;
    rc.q_schedule = cfg.a_schedule;
    rc.sigma_schedule = cfg.b_schedule;
    rc.batch = cfg.batch;
    rc.capacity = cfg.capacity;
    rc.per_key_cap = cfg.per_key_cap;
    rc.warmup_transitions = cfg.warmup;
    rc.epsilon_start = cfg.epsilon;
    rc.epsilon_end = cfg.epsilon_end;
    rc.sigma_period = cfg.sigma_period;
    rc.target_sync_period = cfg.target_sync;
    rc.offset_kind = cfg.offset_kind;
    try {
        rc.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    std::vector<StateId> probes = cfg.probes;
    if (probes.empty() && arm.num_states() <= 16)
        for (StateId k = 0; k < arm.num_states(); ++k) probes.push_back(k);
    for (StateId k : probes)
        if (k < 0 || k >= arm.num_states()) throw ConfigError("probe state out of range");

    std::string header = std::string(kCsvHeader) + ",eval_index_policy_reward,mean_gap_loss";
    for (StateId k : probes) header += ",lambda_" + std::to_string(k);
    CsvWriter csv(out.csv_path, header);

    const WhittleNetworks nets(arm.encoding(), rc.q_hidden, rc.index_hidden);
    Rng init_rng = child_stream(seed, "init");
    Rng env_rng = child_stream(seed, "env");
    Rng explore_rng = child_stream(seed, "explore");
    Rng replay_rng = child_stream(seed, "replay");
    const long horizon = cfg.eval_horizon > 0 ? cfg.eval_horizon : default_eval_horizon(arm.key(), true);

    double gap_sum = 0.0;
    long gap_count = 0;
    auto observer = [&](const RmabProgress& p) {
        if (!std::isnan(p.gap_loss)) {
            gap_sum += p.gap_loss;
            ++gap_count;
        }
        const bool eval_now = p.step % cfg.eval_period == 0 || p.step == cfg.total_steps;
        if (!eval_now && p.step % cfg.log_period != 0) return;
        const Eigen::VectorXd lam = nets.lambda_table(p.state.sigma);
        const double proxy = p.q_proxy;
        std::string ev;
        if (eval_now) {
            Rng eval_rng = child_stream(seed, "eval", static_cast<std::uint64_t>(p.step));
            ev = fmt(evaluate_index_policy(arm, lam, rc.arms, rc.budget, horizon, eval_rng));
        }
        std::vector<std::string> cells{std::to_string(seed), std::to_string(p.step), fmt(p.q_loss),
                                       fmt(proxy),           ev,                     "0",
                                       ev,                   gap_count ? fmt(gap_sum / gap_count) : ""};
        for (StateId k : probes) cells.push_back(fmt(lam(k)));
        csv.row(cells);
        out.final_proxy = proxy;
        gap_sum = 0.0;
        gap_count = 0;
    };
    const RmabResult res =
        rmab_train(rc, arm, cfg.total_steps, init_rng, env_rng, explore_rng, replay_rng, observer);
    out.steps = res.steps_done;
    if (res.diverged) {
        out.diverged = true;
        out.checkpoint_path.clear();
        out.index_checkpoint_path.clear();
        std::vector<std::string> cells{std::to_string(seed), std::to_string(res.steps_done), "", "", "", "1", "", ""};
        cells.resize(cells.size() + probes.size());
        csv.row(cells);
        return out;
    }
    save_checkpoint(out.checkpoint_path, {"whittle-qnet", nets.qnet().spec(), res.state.theta});
    save_checkpoint(out.index_checkpoint_path, {"index", nets.index_net().spec(), res.state.sigma});
    return out;
}

}  // namespace

Algorithm parse_algorithm(const std::string& name) {
    for (const auto& [a, n] : kAlgorithms)
        if (n == name) return a;
    throw ConfigError("unknown algorithm '" + name + "'");
}

std::string to_string(Algorithm a) {
    for (const auto& [x, n] : kAlgorithms)
        if (x == a) return n;
    return "?";
}

void RunConfig::validate() const {
    if (total_steps < 0) throw ConfigError("total_steps must be non-negative");
    if (batch == 0) throw ConfigError("batch must be positive");
    if (capacity == 0 || per_key_cap == 0) throw ConfigError("replay capacity must be positive");
    if (log_period <= 0 || eval_period <= 0) throw ConfigError("log and eval periods must be positive");
    if (eval_horizon < 0) throw ConfigError("eval horizon must be positive");
    if (!(epsilon >= 0.0 && epsilon <= 1.0) || !(epsilon_end >= 0.0 && epsilon_end <= 1.0))
        throw ConfigError("epsilon must lie in [0, 1]");
    if (!(a_schedule.a0 > 0.0) || !(b_schedule.a0 > 0.0)) throw ConfigError("step sizes must be positive");
    if (!(eta > 0.0)) throw ConfigError("eta must be positive");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    for (int h : hidden)
        if (h <= 0) throw ConfigError("hidden widths must be positive");
    for (int h : index_hidden)
        if (h <= 0) throw ConfigError("hidden widths must be positive");
    if (is_whittle(algorithm)) {
        if (offset_kind == OffsetFn::Kind::GlobalMax || offset_kind == OffsetFn::Kind::Mean)
            throw ConfigError("whittle learners need a per-state offset (fixed-sa or max-at-state)");
        if (sigma_period <= 0) throw ConfigError("sigma_period must be positive");
        if (arms < 0 || budget < 0) throw ConfigError("arms and budget must be positive");
        if (arms > 0 && budget > 0 && budget >= arms) throw ConfigError("budget must be smaller than arms");
    }
}

RunConfig parse_config(std::istream& in) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (section == "env") continue;
        const auto it = kKnownKeys.find(section);
        if (it == kKnownKeys.end()) throw ConfigError("unknown config section [" + section + "]");
        for (const auto& [key, _] : body)
            if (!it->second.count(key)) throw ConfigError("unknown key " + section + "." + key);
    }
    auto str = [&](const std::string& path) { return tree.get_optional<std::string>(path); };

    RunConfig c;
    if (auto v = str("run.algorithm")) c.algorithm = parse_algorithm(*v);
    if (auto v = str("run.env")) c.env_key = *v;
    if (auto v = str("run.seeds")) c.seeds = convert_list<std::uint64_t>("seeds", *v);
    if (auto v = str("run.total_steps")) c.total_steps = convert<long>("total_steps", *v);
    if (auto v = str("run.out")) c.out_dir = *v;
    if (auto v = str("run.log_period")) c.log_period = convert<long>("log_period", *v);
    if (auto env = tree.get_child_optional("env"))
        for (const auto& [key, val] : *env) c.env_overrides[key] = convert<double>(key, val.data());

    if (auto v = str("net.hidden"); v && *v != "auto") c.hidden = convert_list<int>("hidden", *v);
    if (auto v = str("net.index_hidden")) c.index_hidden = convert_list<int>("index_hidden", *v);

    if (is_whittle(c.algorithm)) c.a_schedule = StepSchedule::power_law(0.05, 5000.0, 0.6);
    c.a_schedule = read_schedule(tree, "learner", "", c.a_schedule);
    c.b_schedule = read_schedule(tree, "whittle", "b_", c.b_schedule);
    if (auto v = str("learner.batch")) c.batch = convert<std::size_t>("batch", *v);
    if (auto v = str("learner.offset")) c.offset_kind = parse_offset_kind(*v);
    if (auto v = str("learner.offset_state"); v && *v != "auto")
        c.offset_state = convert<StateId>("offset_state", *v);
    if (auto v = str("learner.offset_action")) c.offset_action = convert<ActionId>("offset_action", *v);
    if (auto v = str("learner.eta")) c.eta = convert<double>("eta", *v);
    if (auto v = str("learner.rbar_mode")) c.rbar_mode = parse_rbar_mode(*v);
    c.target_sync = c.algorithm == Algorithm::DiffqDqn ? 0 : 100;
    if (auto v = str("learner.target_sync")) c.target_sync = convert<long>("target_sync", *v);

    if (auto v = str("whittle.arms")) c.arms = convert<int>("arms", *v);
    if (auto v = str("whittle.budget")) c.budget = convert<int>("budget", *v);
    if (auto v = str("whittle.sigma_period")) c.sigma_period = convert<long>("sigma_period", *v);
    if (auto v = str("whittle.probes")) c.probes = convert_list<StateId>("probes", *v);

    if (auto v = str("replay.capacity")) c.capacity = convert<std::size_t>("capacity", *v);
    if (auto v = str("replay.per_key_cap")) c.per_key_cap = convert<std::size_t>("per_key_cap", *v);
    if (auto v = str("replay.warmup")) c.warmup = convert<std::size_t>("warmup", *v);

    if (is_whittle(c.algorithm)) c.epsilon = 0.1;
    if (auto v = str("explore.epsilon")) c.epsilon = convert<double>("epsilon", *v);
    if (auto v = str("explore.epsilon_end")) c.epsilon_end = convert<double>("epsilon_end", *v);

    if (auto v = str("eval.period")) c.eval_period = convert<long>("eval.period", *v);
    if (auto v = str("eval.horizon")) c.eval_horizon = convert<long>("eval.horizon", *v);

    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    return parse_config(in);
}

std::string manifest_json(const RunConfig& c) {
    auto join = [](const auto& xs) {
        std::string s;
        for (const auto& x : xs) s += (s.empty() ? "" : ",") + std::to_string(x);
        return s;
    };
    auto sched = [](pt::ptree& t, const StepSchedule& s) {
        t.put("kind", s.kind == StepSchedule::Kind::PowerLaw ? "power" : "constant");
        t.put("a0", fmt17(s.a0));
        t.put("tau", fmt17(s.tau));
        t.put("kappa", fmt17(s.kappa));
    };
    pt::ptree t;
    t.put("build", FGDQN_GIT_DESCRIBE);
    t.put("algorithm", to_string(c.algorithm));
    t.put("env", c.env_key);
    for (const auto& [k, v] : c.env_overrides) t.put(pt::ptree::path_type("env_overrides/" + k, '/'), fmt17(v));
    t.put("seeds", join(c.seeds));
    t.put("total_steps", c.total_steps);
    t.put("hidden", c.hidden.empty() ? std::string("auto") : join(c.hidden));
    t.put("index_hidden", join(c.index_hidden));
    sched(t.put_child("a_schedule", {}), c.a_schedule);
    sched(t.put_child("b_schedule", {}), c.b_schedule);
    t.put("batch", c.batch);
    t.put("capacity", c.capacity);
    t.put("per_key_cap", c.per_key_cap);
    t.put("warmup", c.warmup);
    t.put("offset", to_string(c.offset_kind));
    t.put("offset_state", c.offset_state ? std::to_string(*c.offset_state) : std::string("auto"));
    t.put("offset_action", c.offset_action);
    t.put("eta", fmt17(c.eta));
    t.put("rbar_mode", to_string(c.rbar_mode));
    t.put("target_sync", c.target_sync);
    t.put("epsilon", fmt17(c.epsilon));
    t.put("epsilon_end", fmt17(c.epsilon_end));
    t.put("log_period", c.log_period);
    t.put("eval_period", c.eval_period);
    t.put("eval_horizon", c.eval_horizon);
    t.put("arms", c.arms);
    t.put("budget", c.budget);
    t.put("sigma_period", c.sigma_period);
    t.put("probes", join(c.probes));
    t.put("out", c.out_dir);
    std::ostringstream os;
    pt::write_json(os, t);
    return os.str();
}

MlpSpec default_q_spec(const Environment& env, const std::vector<int>& hidden) {
    MlpSpec spec;
    spec.input_dim = env.encoding().dimension();
    spec.output_dim = env.num_actions();
    if (!hidden.empty())
        spec.hidden = hidden;
    else if (env.num_states() > 200)
        spec.hidden = {128, 128};
    else
        spec.hidden = {64};
    return spec;
}

long default_eval_horizon(const std::string& env_key, bool index_policy) {
    if (env_key == "deadline-large") return 5000;
    return index_policy ? 1000 : 10'000;
}

std::pair<int, int> default_rmab_size(const std::string& env_key) {
    if (env_key.rfind("deadline", 0) == 0) return {4, 1};
    return {100, 20};
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    if (ckpt.params.size() != ckpt.spec.num_params())
        throw std::invalid_argument("checkpoint: parameter count does not match the layer widths");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << "fgdqn-checkpoint 1\nkind " << ckpt.kind << "\nwidths";
    for (int w : ckpt.spec.widths()) out << ' ' << w;
    out << "\nd " << ckpt.params.size() << '\n';
    for (Eigen::Index i = 0; i < ckpt.params.size(); ++i) out << fmt17(ckpt.params(i)) << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    auto fail = [&](const std::string& why) { return std::runtime_error("malformed checkpoint " + path + ": " + why); };
    std::string word, line;
    int version = 0;
    if (!(in >> word >> version) || word != "fgdqn-checkpoint" || version != 1) throw fail("bad magic line");
    Checkpoint c;
    if (!(in >> word >> c.kind) || word != "kind") throw fail("missing kind");
    in >> word;
    if (word != "widths") throw fail("missing widths");
    std::getline(in, line);
    std::vector<int> widths;
    {
        std::istringstream ws(line);
        for (int w; ws >> w;) widths.push_back(w);
    }
    if (widths.size() < 2) throw fail("need at least input and output widths");
    c.spec.input_dim = widths.front();
    c.spec.output_dim = widths.back();
    c.spec.hidden.assign(widths.begin() + 1, widths.end() - 1);
    Eigen::Index d = 0;
    if (!(in >> word >> d) || word != "d") throw fail("missing parameter count");
    if (d != c.spec.num_params()) throw fail("parameter count does not match the layer widths");
    c.params.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        if (!(in >> word)) throw fail("truncated parameter list");
        c.params(i) = std::strtod(word.c_str(), nullptr);
    }
    return c;
}

double evaluate_greedy(const Environment& env, const QNetwork& q, const Paramd& theta, long horizon, Rng& rng) {
    if (horizon <= 0) throw std::invalid_argument("evaluation horizon must be positive");
    std::vector<ActionId> policy(env.num_states());
    for (StateId s = 0; s < env.num_states(); ++s) policy[s] = q.greedy(theta, s);
    StateId s = uniform_int(rng, 0, env.num_states() - 1);
    double total = 0.0;
    for (long t = 0; t < horizon; ++t) {
        const auto r = env.step(s, policy[s], rng);
        total += r.reward;
        s = r.next_state;
    }
    return total / double(horizon);
}

bool TrainOutcome::all_diverged() const {
    return !seeds.empty() && std::all_of(seeds.begin(), seeds.end(), [](const SeedOutcome& s) { return s.diverged; });
}

SeedOutcome train_seed(const RunConfig& cfg, std::uint64_t seed) {
    std::unique_ptr<Environment> env;
    try {
        env = make_environment(cfg.env_key, cfg.env_overrides);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (cfg.offset_state && (*cfg.offset_state < 0 || *cfg.offset_state >= env->num_states()))
        throw ConfigError("offset_state out of range");
    if (cfg.offset_action < 0 || cfg.offset_action >= env->num_actions())
        throw ConfigError("offset_action out of range");
    fs::create_directories(cfg.out_dir);

    switch (cfg.algorithm) {
        case Algorithm::RviFgdqn:
        case Algorithm::RviDqn: {
            RviLoop loop{{}, cfg.algorithm == Algorithm::RviFgdqn};
            loop.st.schedule = cfg.a_schedule;
            loop.st.target_sync_period = cfg.target_sync;
            return run_tabular_seed<RviLoop>(cfg, seed, *env, loop,
                                             [&](RviLoop& l, StateId s0, ActionId u0, const QNetwork&, Rng&) {
                                                 l.st.offset = make_offset(cfg, s0, u0);
                                             });
        }
        case Algorithm::DiffqFgdqn:
        case Algorithm::DiffqDqn: {
            if (cfg.rbar_mode == RbarMode::GenerativeSweep && !env->tabular_model())
                throw ConfigError("generative-sweep mode needs an environment with a model");
            DiffqLoop loop{{}, cfg.algorithm == Algorithm::DiffqFgdqn, env.get()};
            loop.st.schedule = cfg.a_schedule;
            loop.st.eta = cfg.eta;
            loop.st.mode = cfg.rbar_mode;
            loop.st.target_sync_period = cfg.target_sync;
            return run_tabular_seed<DiffqLoop>(cfg, seed, *env, loop,
                                               [](DiffqLoop& l, StateId, ActionId, const QNetwork& q, Rng&) {
                                                   l.st.Y = Gradd::Zero(q.num_params());
                                               });
        }
        case Algorithm::WhittleFgdqn:
        case Algorithm::WhittleDqn:
            if (env->num_actions() != 2) throw ConfigError("whittle learners need two-action arms");
            return run_whittle_seed(cfg, seed, *env);
    }
    throw ConfigError("unhandled algorithm");
}

TrainOutcome train(const RunConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    {
        std::ofstream m(fs::path(cfg.out_dir) / "manifest.json");
        m << manifest_json(cfg);
    }
    TrainOutcome result;
    result.seeds.resize(cfg.seeds.size());
    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t start = 0; start < cfg.seeds.size(); start += workers) {
        const std::size_t stop = std::min(cfg.seeds.size(), start + workers);
        if (workers == 1) {
            result.seeds[start] = train_seed(cfg, cfg.seeds[start]);
            continue;
        }
        std::vector<std::future<SeedOutcome>> jobs;
        for (std::size_t i = start; i < stop; ++i)
            jobs.push_back(std::async(std::launch::async, train_seed, std::cref(cfg), cfg.seeds[i]));
        for (std::size_t i = start; i < stop; ++i) result.seeds[i] = jobs[i - start].get();
    }
    return result;
}

std::string oracle_fixture(const Environment& env) {
    const auto* m = env.tabular_model();
    if (!m) throw UnsupportedMode("oracle needs an environment with a model");
    const auto sol = relative_value_iteration(*m);
    std::ostringstream os;
    os << "env " << env.key() << "\nbeta " << fmt17(sol.beta) << "\nresidual " << fmt17(sol.residual)
       << "\niterations " << sol.iterations << "\nstates " << m->num_states() << "\nactions " << m->num_actions()
       << "\ncolumns state V";
    for (int u = 0; u < m->num_actions(); ++u) os << " Q" << u;
    os << '\n';
    for (int s = 0; s < m->num_states(); ++s) {
        os << s << ' ' << fmt17(sol.V(s));
        for (int u = 0; u < m->num_actions(); ++u) os << ' ' << fmt17(sol.Q(s, u));
        os << '\n';
    }
    return os.str();
}

std::string whittle_fixture(const Environment& env) {
    const auto* m = env.tabular_model();
    if (!m) throw UnsupportedMode("whittle oracle needs an environment with a model");
    if (m->num_actions() != 2) throw UnsupportedMode("whittle oracle needs two-action arms");
    const auto [lo, hi] = default_subsidy_bracket(*m);
    const auto report = indexability_check(*m, linear_grid(lo, hi, 201));
    std::ostringstream os;
    os << "env " << env.key() << "\nindexable " << (report.indexable ? 1 : 0) << "\nstates " << m->num_states()
       << "\ncolumns state lambda\n";
    if (report.indexable)
        for (int s = 0; s < m->num_states(); ++s) os << s << ' ' << fmt17(whittle_index_exact(*m, s, lo, hi)) << '\n';
    return os.str();
}

namespace {

std::map<std::string, std::string> read_header(std::istream& in, std::vector<std::vector<double>>& rows) {
    std::map<std::string, std::string> head;
    std::string line;
    bool in_rows = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        if (in_rows) {
            std::vector<double> row;
            for (double v; ls >> v;) row.push_back(v);
            rows.push_back(row);
            continue;
        }
        std::string key;
        ls >> key;
        std::string rest;
        std::getline(ls >> std::ws, rest);
        head[key] = rest;
        if (key == "columns") in_rows = true;
    }
    if (!in_rows) throw std::runtime_error("fixture has no columns line");
    return head;
}

}  // namespace

OracleFixture parse_oracle_fixture(std::istream& in) {
    std::vector<std::vector<double>> rows;
    const auto head = read_header(in, rows);
    OracleFixture f;
    f.beta = std::stod(head.at("beta"));
    const int A = std::stoi(head.at("actions"));
    f.V.resize(static_cast<Eigen::Index>(rows.size()));
    f.Q.resize(static_cast<Eigen::Index>(rows.size()), A);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != std::size_t(A) + 2) throw std::runtime_error("fixture row has the wrong width");
        f.V(i) = rows[i][1];
        for (int u = 0; u < A; ++u) f.Q(i, u) = rows[i][2 + u];
    }
    return f;
}

WhittleFixture parse_whittle_fixture(std::istream& in) {
    std::vector<std::vector<double>> rows;
    const auto head = read_header(in, rows);
    WhittleFixture f;
    f.indexable = head.at("indexable") == "1";
    f.index.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != 2) throw std::runtime_error("fixture row has the wrong width");
        f.index(i) = rows[i][1];
    }
    return f;
}

}  // namespace fgdqn
