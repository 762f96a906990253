#include "doctest.h"

#include "fgdqn/learners.hpp"
#include "fgdqn/oracle.hpp"
#include "support.hpp"

#include <cmath>

using namespace fgdqn;
using testing::fd_gradient;
using testing::relative_error;

namespace {

// Two states. Action 0 earns r(s) = s and stays, except that state 0 leaks
// to state 1 half the time; action 1 switches for free. Every policy is
// unichain and the optimal average reward is 1 (move to state 1 and stay).
std::unique_ptr<Environment> two_state() {
    TabularModelBuilder<double> b(2, 2);
    b.add(0, 0, 0, 0.5);
    b.add(0, 0, 1, 0.5);
    b.add(1, 0, 1, 1.0);
    for (StateId s = 0; s < 2; ++s) {
        b.reward(s, 0, double(s));
        b.add(s, 1, 1 - s, 1.0);
        b.reward(s, 1, 0.0);
    }
    return std::make_unique<TabularEnvironment>("two-state", b.build(), FeatureEncoding::one_hot(2));
}

QNetwork small_net(const Environment& env) {
    return QNetwork(MlpSpec{env.encoding().dimension(), {6}, env.num_actions()}, env.encoding());
}

Paramd jitter(Paramd theta, Rng& rng) {
    for (auto& v : theta) v += 0.2 * (uniform01(rng) - 0.5);
    return theta;
}

std::vector<OffsetFn> all_offsets() {
    return {OffsetFn::fixed(1, 0), OffsetFn::max_at(0), OffsetFn::global_max(), OffsetFn::mean()};
}

}  // namespace

TEST_CASE("step schedules") {
    const auto s = StepSchedule::power_law(0.5, 100.0, 0.75);
    CHECK(s(0) == doctest::Approx(0.5));
    CHECK(s(100) == doctest::Approx(0.5 / std::pow(2.0, 0.75)));
    CHECK(s.robbins_monro());
    CHECK_FALSE(StepSchedule::power_law(0.5, 100.0, 0.5).robbins_monro());
    CHECK_FALSE(StepSchedule::constant(0.1).robbins_monro());
    CHECK(StepSchedule::constant(0.1)(12345) == 0.1);
}

TEST_CASE("offset names round trip") {
    for (auto k : {OffsetFn::Kind::FixedStateAction, OffsetFn::Kind::MaxAtState, OffsetFn::Kind::GlobalMax,
                   OffsetFn::Kind::Mean})
        CHECK(parse_offset_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_offset_kind("median"), std::invalid_argument);
    CHECK(parse_rbar_mode(to_string(RbarMode::ReplayBatch)) == RbarMode::ReplayBatch);
}

TEST_CASE("offset gradients match finite differences") {
    const auto env = make_environment("circulant");
    const auto q = small_net(*env);
    Rng rng(21);
    for (int draw = 0; draw < 20; ++draw) {
        const Paramd theta = jitter(q.mlp().init(rng), rng);
        for (const auto& f : all_offsets()) {
            CAPTURE(to_string(f.kind));
            const auto fd = fd_gradient([&](const Paramd& t) { return offset_value(f, q, t); }, theta);
            CHECK(relative_error(offset_grad(f, q, theta), fd) < 1e-5);
        }
    }
    const auto mean = offset_value(OffsetFn::mean(), q, Paramd::Zero(q.num_params()));
    CHECK(mean == 0.0);
    CHECK_THROWS_AS(offset_value(OffsetFn::fixed(9, 0), q, Paramd::Zero(q.num_params())), std::invalid_argument);
}

TEST_CASE("single-transition FGDQN step descends the squared Bellman error") {
    // With one stored transition the conditional average is that transition's
    // TD error, so the update is exactly -a * grad(E^2 / 2).
    const auto env = make_environment("circulant");
    const auto q = small_net(*env);
    Rng rng(5);
    for (int draw = 0; draw < 40; ++draw) {
        const Transition t{uniform_int(rng, 0, 3), uniform_int(rng, 0, 1), uniform01(rng) - 0.5,
                           uniform_int(rng, 0, 3)};
        ReplayBuffer buf;
        buf.push(t);
        for (const auto& f : all_offsets()) {
            RviLearnerState st;
            st.theta = jitter(q.mlp().init(rng), rng);
            st.offset = f;
            st.schedule = StepSchedule::constant(0.01);
            const Paramd before = st.theta;
            auto half_sq = [&](const Paramd& th) {
                const double e = t.reward + q.values(th, t.next_state).maxCoeff() - offset_value(f, q, th) -
                                 q.value(th, t.state, t.action);
                return 0.5 * e * e;
            };
            const auto report = fgdqn_rvi_step(st, q, buf, 3, rng);
            CHECK(report.proxy == doctest::Approx(offset_value(f, q, before)));
            CHECK(report.step_size == 0.01);
            const Paramd step = (before - st.theta) / 0.01;
            CHECK(relative_error(step, fd_gradient(half_sq, before)) < 1e-4);
        }
    }
}

TEST_CASE("FGDQN step uses the conditional average over matching transitions") {
    const auto env = make_environment("circulant");
    const auto q = small_net(*env);
    Rng rng(9);
    ReplayBuffer buf;
    buf.push({0, 1, 0.0, 1});
    buf.push({0, 1, 0.0, 0});
    buf.push({0, 1, 1.0, 1});
    buf.push({2, 0, -1.0, 3});
    RviLearnerState st;
    st.theta = jitter(q.mlp().init(rng), rng);
    st.offset = OffsetFn::fixed(0, 0);
    st.schedule = StepSchedule::constant(0.02);
    const Paramd theta = st.theta;

    Rng replay(77);
    Rng mirror = replay;
    const std::size_t B = 8;
    fgdqn_rvi_step(st, q, buf, B, replay);

    const auto sampled = buf.sample_uniform(B, mirror);
    const double f = q.value(theta, 0, 0);
    auto maxq = [&](StateId s) { return q.values(theta, s).maxCoeff(); };
    auto ebar = [&](StateId x, ActionId u) {
        double sum = 0.0;
        int n = 0;
        for (std::size_t i = 0; i < buf.size(); ++i)
            if (buf.at(i).state == x && buf.at(i).action == u) {
                sum += buf.at(i).reward + maxq(buf.at(i).next_state);
                ++n;
            }
        return sum / n - f - q.value(theta, x, u);
    };
    Gradd g = Gradd::Zero(q.num_params());
    for (const auto& t : sampled) {
        const double e = ebar(t.state, t.action);
        g += e * (q.grad_max(theta, t.next_state).second - q.grad(theta, 0, 0) - q.grad(theta, t.state, t.action));
    }
    const Paramd expect = theta - 0.02 / B * g;
    CHECK((st.theta - expect).norm() < 1e-12);
    CHECK(st.n == 1);
}

TEST_CASE("DQN step is a semi-gradient step toward the frozen target") {
    const auto env = make_environment("circulant");
    const auto q = small_net(*env);
    Rng rng(10);
    ReplayBuffer buf;
    for (int i = 0; i < 20; ++i) buf.push({uniform_int(rng, 0, 3), uniform_int(rng, 0, 1), uniform01(rng), uniform_int(rng, 0, 3)});
    RviLearnerState st;
    st.theta = q.mlp().init(rng);
    st.target = jitter(st.theta, rng);
    st.offset = OffsetFn::fixed(1, 1);
    st.schedule = StepSchedule::constant(0.05);
    st.target_sync_period = 3;
    const Paramd theta = st.theta, target = st.target;

    Rng replay(4), mirror(4);
    dqn_rvi_step(st, q, buf, 5, replay);
    Gradd g = Gradd::Zero(q.num_params());
    for (const auto& t : buf.sample_uniform(5, mirror)) {
        const double z = t.reward + q.values(target, t.next_state).maxCoeff() - q.value(target, 1, 1);
        g += (z - q.value(theta, t.state, t.action)) * q.grad(theta, t.state, t.action);
    }
    CHECK((st.theta - (theta + 0.05 / 5 * g)).norm() < 1e-12);
    CHECK(st.target == target);
    dqn_rvi_step(st, q, buf, 5, replay);
    dqn_rvi_step(st, q, buf, 5, replay);
    CHECK(st.target == st.theta);  // synced on the third step
}

TEST_CASE("differential updates of rbar and Y in sweep mode") {
    const auto env = two_state();
    const auto q = small_net(*env);
    Rng rng(12);
    ReplayBuffer buf;
    buf.push({0, 0, 0.0, 0});
    buf.push({1, 1, 0.0, 0});
    DiffQLearnerState st;
    st.theta = jitter(q.mlp().init(rng), rng);
    st.rbar = 0.3;
    st.eta = 0.5;
    st.Y = Gradd::Constant(q.num_params(), 0.01);
    st.schedule = StepSchedule::constant(0.1);
    const Paramd theta = st.theta;
    const Gradd Y = st.Y;

    diffq_fgdqn_step(st, q, buf, *env, 4, rng);
    // The sweep draws one successor per (s, u); replay the draws with the
    // same stream, skipping the batch sample that precedes them.
    const auto& m = *env->tabular_model();
    Rng mirror(12);
    jitter(q.mlp().init(mirror), mirror);
    buf.sample_uniform(4, mirror);
    double td = 0.0;
    Gradd dg = Gradd::Zero(q.num_params());
    for (StateId s = 0; s < 2; ++s)
        for (ActionId u = 0; u < 2; ++u) {
            const StateId next = env->step(s, u, mirror).next_state;
            td += m.r(s, u) + q.values(theta, next).maxCoeff() - 0.3 - q.value(theta, s, u);
            dg += q.grad_max(theta, next).second - q.grad(theta, s, u);
        }
    CHECK(st.rbar == doctest::Approx(0.3 + 0.5 * 0.1 * td / 4));
    CHECK((st.Y - (Y + 0.5 * 0.1 * (dg / 4 - Y))).norm() < 1e-12);

    DiffQLearnerState semi;
    semi.theta = theta;
    semi.schedule = StepSchedule::constant(0.1);
    diffq_dqn_step(semi, q, buf, *env, 4, rng);
    CHECK(semi.Y.isZero());
}

TEST_CASE("sweep mode needs a model") {
    struct NoModel final : Environment {
        std::unique_ptr<Environment> inner = make_environment("circulant");
        const std::string& key() const override { return inner->key(); }
        int num_states() const override { return 4; }
        int num_actions() const override { return 2; }
        StepResult step(StateId s, ActionId u, Rng& rng) const override { return inner->step(s, u, rng); }
        const TabularModeld* tabular_model() const override { return nullptr; }
        const FeatureEncoding& encoding() const override { return inner->encoding(); }
    } env;
    const auto q = small_net(env);
    Rng rng(1);
    ReplayBuffer buf;
    buf.push({0, 0, 0.0, 1});
    DiffQLearnerState st;
    st.theta = q.mlp().init(rng);
    CHECK_THROWS_AS(diffq_fgdqn_step(st, q, buf, env, 2, rng), UnsupportedMode);
    st.mode = RbarMode::ReplayBatch;
    CHECK_NOTHROW(diffq_fgdqn_step(st, q, buf, env, 2, rng));
}

TEST_CASE("empty buffers and zero batches are rejected") {
    const auto env = make_environment("circulant");
    const auto q = small_net(*env);
    Rng rng(1);
    RviLearnerState st;
    st.theta = q.mlp().init(rng);
    ReplayBuffer empty;
    CHECK_THROWS_AS(fgdqn_rvi_step(st, q, empty, 4, rng), EmptyBuffer);
    ReplayBuffer one;
    one.push({0, 0, 0.0, 0});
    CHECK_THROWS_AS(fgdqn_rvi_step(st, q, one, 0, rng), std::invalid_argument);
}

TEST_CASE("a huge constant step overflows instead of producing NaN") {
    const auto env = make_environment("circulant");
    const auto q = small_net(*env);
    Rng rng(2);
    ReplayBuffer buf;
    for (int i = 0; i < 50; ++i) {
        const StateId s = uniform_int(rng, 0, 3);
        const ActionId u = uniform_int(rng, 0, 1);
        const auto r = env->step(s, u, rng);
        buf.push({s, u, r.reward, r.next_state});
    }
    RviLearnerState st;
    st.theta = q.mlp().init(rng);
    st.offset = OffsetFn::fixed(0, 0);
    st.schedule = StepSchedule::constant(1e6);
    bool overflowed = false;
    for (int i = 0; i < 200 && !overflowed; ++i) {
        try {
            dqn_rvi_step(st, q, buf, 8, rng);
        } catch (const NumericOverflow&) {
            overflowed = true;
        }
    }
    CHECK(overflowed);
    CHECK(st.theta.allFinite());
}

TEST_CASE("both RVI variants recover the optimal average reward of a two-state chain") {
    const auto env = two_state();
    const auto exact = relative_value_iteration(*env->tabular_model());
    REQUIRE(exact.beta == doctest::Approx(1.0));
    const auto q = small_net(*env);
    for (bool full : {true, false}) {
        CAPTURE(full);
        Rng rng(31);
        RviLearnerState st;
        st.theta = q.mlp().init(rng);
        st.offset = OffsetFn::fixed(1, 0);
        st.schedule = StepSchedule::power_law(0.1, 2000.0, 0.75);
        ReplayBuffer buf;
        for (StateId s = 0; s < 2; ++s)
            for (ActionId u = 0; u < 2; ++u)
                for (int k = 0; k < 4; ++k) {
                    const StateId next = u == 1 ? 1 - s : (s == 0 ? k % 2 : 1);
                    buf.push({s, u, double(s) * (u == 0), next});
                }
        StepReport rep;
        for (int n = 0; n < 6000; ++n) rep = full ? fgdqn_rvi_step(st, q, buf, 8, rng) : dqn_rvi_step(st, q, buf, 8, rng);
        CHECK(q.value(st.theta, 1, 0) == doctest::Approx(1.0).epsilon(0.03));
        CHECK(q.value(st.theta, 0, 0) == doctest::Approx(-0.5).epsilon(0.05));
        CHECK(q.greedy(st.theta, 0) == 1);
        CHECK(q.greedy(st.theta, 1) == 0);
    }
}
