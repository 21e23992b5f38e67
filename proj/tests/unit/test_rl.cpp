#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "generators.hpp"
#include "gradcheck.hpp"
#include "lanemerge/env/dataset.hpp"
#include "lanemerge/rl/agent.hpp"
#include "lanemerge/rl/checkpoint.hpp"
#include "lanemerge/rl/replay.hpp"
#include "lanemerge/rl/reward.hpp"
#include "lanemerge/rl/state_encoder.hpp"
#include "scenes.hpp"

using namespace lanemerge;
using namespace lanemerge::rl;

namespace {
StateVector random_state(std::mt19937_64& rng) {
    StateVector s{};
    for (auto& v : s) v = testing::uniform(rng, -2, 2);
    return s;
}

TrainConfig tiny_config(Variant v, std::uint64_t seed) {
    TrainConfig c;
    c.variant = v;
    c.hidden = {16, 16};
    c.total_env_steps = 3000;
    c.learning_starts = 200;
    c.epsilon_decay_steps = 2000;
    c.replay_capacity = 2000;
    c.batch_size = 16;
    c.target_sync = 100;
    c.seed = seed;
    return c;
}
}  // namespace

TEST_CASE("analytic gradients agree with finite differences") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 10; ++i) {
        for (auto v : {Variant::Plain, Variant::Dueling}) {
            const auto g = testing::gradient_check(v, rng);
            CHECK(g.relative_error < 1e-4);
        }
    }
}

TEST_CASE("dueling aggregation is invariant to shifts of the advantage head") {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 100; ++i) {
        Eigen::MatrixXd value = Eigen::MatrixXd::Random(1, 4);
        Eigen::MatrixXd adv = Eigen::MatrixXd::Random(5, 4);
        const double c = testing::uniform(rng, -100, 100);
        const Eigen::MatrixXd shifted = (adv.array() + c).matrix();
        const auto q1 = dueling_aggregate(value, adv);
        const auto q2 = dueling_aggregate(value, shifted);
        CHECK((q1 - q2).cwiseAbs().maxCoeff() < 1e-12);
        // mean over actions of Q equals V
        for (int col = 0; col < 4; ++col) CHECK(q1.col(col).mean() == doctest::Approx(value(0, col)));
    }
}

TEST_CASE("network shapes and batch forward agree with single-state queries") {
    QNetwork net(Variant::Dueling, {static_cast<int>(kStateDim), 8, 8}, 5, 3);
    std::mt19937_64 rng(4);
    Eigen::MatrixXd batch(kStateDim, 3);
    std::vector<StateVector> states;
    for (int c = 0; c < 3; ++c) {
        states.push_back(random_state(rng));
        for (std::size_t r = 0; r < kStateDim; ++r) batch(static_cast<Eigen::Index>(r), c) = states.back()[r];
    }
    const auto q = net.forward(batch);
    CHECK(q.rows() == 5);
    for (int c = 0; c < 3; ++c) CHECK((q.col(c) - net.q_values(states[static_cast<std::size_t>(c)])).norm() < 1e-12);
    CHECK_THROWS_AS(QNetwork::from_parameters(Variant::Plain, {3, 4}, 2, ParameterSet{}), std::invalid_argument);
}

TEST_CASE("td targets follow r + gamma * max Q'(s') for non-terminal transitions") {
    QNetwork target(Variant::Plain, {static_cast<int>(kStateDim), 6}, 5, 9);
    std::mt19937_64 rng(5);
    std::vector<ExperienceTransition> batch;
    for (int i = 0; i < 8; ++i) {
        batch.push_back({random_state(rng), static_cast<int>(rng() % 5), testing::uniform(rng, 0, 1), random_state(rng), i % 3 == 0});
    }
    const auto y = td_targets(target, batch, 0.9);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto q = target.q_values(batch[i].next_state);
        const double best = *std::max_element(q.data(), q.data() + q.size());
        const double expect = batch[i].done ? batch[i].reward : batch[i].reward + 0.9 * best;
        CHECK(y(static_cast<Eigen::Index>(i)) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("greedy action is the lowest-index maximum") {
    Eigen::VectorXd q(5);
    q << 1, 3, 3, -1, 0;
    CHECK(argmax(q) == 1);
    QNetwork net(Variant::Plain, {static_cast<int>(kStateDim), 4}, 5, 1);
    std::mt19937_64 rng(1);
    const auto s = random_state(rng);
    const auto greedy = select_action(net, s, 0.0, rng);
    CHECK(static_cast<int>(greedy) == argmax(net.q_values(s)));
    int differs = 0;
    for (int i = 0; i < 200; ++i) differs += select_action(net, s, 1.0, rng) != greedy;
    CHECK(differs > 100);  // uniform over 5 actions: about 160 expected
}

TEST_CASE("positive reward formula and the negative shift") {
    const auto inst = testing::straight_instance(40, 70, 10, 20);
    env::MergeEnv e(std::make_shared<const env::MergeInstance>(inst));
    auto s = e.reset();
    s.merging.speed = 18;
    s.merging.acceleration = 1.5;
    // Independent evaluation: gap midpoint between 12.25 and 67.75 is x=40 on y=0.
    const double d = std::hypot(40.0 - 40.0, 3.5 - 0.0);
    const double expect = 0.6 / (1 + d) + 0.2 / (1 + 2.0) + 0.2 / (1 + 1.5);
    CHECK(reward(s, RewardMode::Positive) == doctest::Approx(expect));
    CHECK(reward(s, RewardMode::Negative) == doctest::Approx(expect - 1.0));
    s.outcome = env::Outcome::Success;
    CHECK(reward(s, RewardMode::Positive) == 1.0);
    CHECK(reward(s, RewardMode::Negative) == 0.0);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 1000; ++i) {
        auto r = e.reset();
        r.merging.position.x = testing::uniform(rng, -100, 300);
        r.merging.speed = testing::uniform(rng, 0, 40);
        r.merging.acceleration = testing::uniform(rng, -4, 3);
        const double p = reward(r, RewardMode::Positive);
        CHECK(p > 0.0);
        CHECK(p <= 1.0);
    }
}

TEST_CASE("terminal return of a failure sits at the floor of each mode") {
    auto s = env::MergeEnv(std::make_shared<const env::MergeInstance>(testing::straight_instance(40, 70, 10))).reset();
    s.outcome = env::Outcome::Collision;
    CHECK(terminal_return(s, RewardMode::Positive, {}, 0.99, 1.0) == 0.0);
    CHECK(terminal_return(s, RewardMode::Negative, {}, 0.99, 1.0) == doctest::Approx(-100.0));
    s.outcome = env::Outcome::Success;
    // Flat success value with arrival weight 0: 1 + gamma/(1-gamma).
    CHECK(terminal_return(s, RewardMode::Positive, {}, 0.99, 0.0) == doctest::Approx(100.0));
    CHECK(terminal_return(s, RewardMode::Positive, {}, 0.99, 1.0) < 100.0);
}

TEST_CASE("state encoding layout") {
    const Rud m = testing::vehicle(1, 100, 3.5, 20);
    Rud p = testing::vehicle(2, 130, 0, 25);
    p.acceleration = 2.0;
    const Rud f = testing::vehicle(3, 80, 0, 15);
    const StateNorms n;
    const auto s = encode_state(m, p, f, n, 300.0);
    CHECK(s[0] == 0.0);
    CHECK(s[1] == 0.0);
    CHECK(s[2] == doctest::Approx(20.0 / n.speed));
    CHECK(s[7] == doctest::Approx(30.0 / n.position));
    CHECK(s[8] == doctest::Approx(-3.5 / n.lateral));
    CHECK(s[10] == doctest::Approx(2.0 / n.acceleration));
    CHECK(s[5] == doctest::Approx(4.5 * 1.8 / n.area));
    CHECK(s[6] == doctest::Approx((300.0 - 100.0) / n.lane_end));
    CHECK(s[14] == doctest::Approx(-20.0 / n.position));
    const auto unbounded = encode_state(m, p, f, n);
    CHECK(unbounded[6] == n.lane_end_cap);
    Rud bad = m;
    bad.speed = std::nan("");
    CHECK_THROWS_AS(encode_state(bad, p, f, n), InvariantError);
}

TEST_CASE("replay buffer is a ring of fixed capacity") {
    ReplayBuffer buf(3);
    for (int i = 0; i < 5; ++i) buf.push({{}, i % 5, static_cast<double>(i), {}, false});
    CHECK(buf.size() == 3);
    CHECK(buf.at(0).reward == 3.0);
    CHECK(buf.at(1).reward == 4.0);
    CHECK(buf.at(2).reward == 2.0);
    std::mt19937_64 rng(1);
    for (auto i : buf.sample_indices(100, rng)) CHECK(i < 3);
    CHECK_THROWS_AS(buf.push({{}, 7, 0, {}, false}), std::invalid_argument);
    CHECK_THROWS_AS(ReplayBuffer(0), std::invalid_argument);
}

TEST_CASE("momentum SGD follows the heavy-ball recursion") {
    QNetwork net(Variant::Plain, {2, 2}, 2, 1);
    const auto start = net.parameters();
    SgdMomentum opt(net, 0.1, 0.5);
    ParameterSet g = net.zeros_like();
    g[0].bias(0) = 1.0;
    opt.step(net, g);
    CHECK(net.parameters()[0].bias(0) == doctest::Approx(start[0].bias(0) - 0.1));
    opt.step(net, g);
    CHECK(net.parameters()[0].bias(0) == doctest::Approx(start[0].bias(0) - 0.1 - 0.15));
    SgdMomentum clipped(net, 1.0, 0.0, 0.5);
    g[0].bias(0) = 10.0;
    const double before = net.parameters()[0].bias(0);
    CHECK(clipped.step(net, g) == doctest::Approx(10.0));
    CHECK(net.parameters()[0].bias(0) == doctest::Approx(before - 0.5));
}

TEST_CASE("checkpoints round-trip and refuse corruption or the wrong variant") {
    QNetwork net(Variant::Dueling, {static_cast<int>(kStateDim), 8}, 5, 7);
    const auto dir = std::filesystem::temp_directory_path() / "lanemerge_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "m.lmqn";
    TrainConfig cfg;
    cfg.variant = Variant::Dueling;
    save_checkpoint(path, net, cfg);
    CHECK(load_checkpoint(path) == net);
    CHECK(std::filesystem::exists(path.string() + ".json"));
    CHECK_THROWS_AS(load_checkpoint(path, Variant::Plain), CheckpointError);
    const auto back = config_from_json(config_to_json(cfg));
    CHECK(back.variant == cfg.variant);
    CHECK(back.hidden == cfg.hidden);
    CHECK(back.env.d_safe == cfg.env.d_safe);

    auto bytes = serialize_network(net);
    bytes[bytes.size() / 2] ^= 0x40;
    CHECK_THROWS_AS(deserialize_network(bytes), CheckpointError);
    bytes = serialize_network(net);
    bytes.resize(bytes.size() - 9);
    CHECK_THROWS_AS(deserialize_network(bytes), CheckpointError);
    std::ofstream(path, std::ios::trunc) << "garbage";
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.lmqn"), CheckpointError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("training is deterministic per seed and labels its evaluation") {
    const auto pool = env::generate_synthetic(21, 40);
    const auto a = train(pool, tiny_config(Variant::Dueling, 5));
    const auto b = train(pool, tiny_config(Variant::Dueling, 5));
    const auto c = train(pool, tiny_config(Variant::Dueling, 6));
    CHECK(a.net == b.net);
    CHECK(a.histogram == b.histogram);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK_FALSE(a.net == c.net);
    CHECK(a.env_steps == 3000);
    CHECK(a.histogram.total() == a.env_steps);
    CHECK(a.outcomes.total() == a.episodes);
    const auto rep = evaluate(a.net, pool, tiny_config(Variant::Dueling, 5), "test");
    CHECK(rep.label == "test");
    CHECK(rep.instances == pool.size());
    CHECK(rep.outcomes.total() == pool.size());
}

TEST_CASE("training config validation") {
    auto c = tiny_config(Variant::Plain, 1);
    c.gamma = 1.5;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config(Variant::Plain, 1);
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("reward histogram bins") {
    RewardHistogram h(RewardMode::Positive);
    h.add(0.0, env::Outcome::InProgress);
    h.add(0.999, env::Outcome::InProgress);
    h.add(1.0, env::Outcome::Success);
    h.add(0.0, env::Outcome::Collision);
    CHECK(h.bins()[0] == 1);
    CHECK(h.bins()[49] == 1);
    CHECK(h.terminal_success() == 1);
    CHECK(h.total() == 4);
    CHECK(h.bin_of(0.5) == 25);
    RewardHistogram n(RewardMode::Negative);
    CHECK(n.bin_of(-1.0) == 0);
    CHECK(h.to_csv().rfind("kind,bin_lo,bin_hi,count", 0) == 0);
}

TEST_CASE("greedy rollout emits one waypoint per state") {
    const auto pool = env::generate_synthetic(3, 1);
    QNetwork net(Variant::Dueling, {static_cast<int>(kStateDim), 8}, 5, 2);
    env::MergeEnv e(std::make_shared<const env::MergeInstance>(pool[0]));
    const auto r = policy_rollout(net, e, {}, Uuid(1, 1), 1000);
    CHECK(r.outcome != env::Outcome::InProgress);
    CHECK(r.recommendation.waypoints.size() == r.states.size());
    CHECK(r.recommendation.target_uuid == pool[0].roles.merging);
    CHECK_NOTHROW(validate(r.recommendation));
}
