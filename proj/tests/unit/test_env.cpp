#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include "generators.hpp"
#include "lanemerge/env/dataset.hpp"
#include "lanemerge/env/driver_model.hpp"
#include "lanemerge/env/merge_env.hpp"
#include "scenes.hpp"

using namespace lanemerge;
using namespace lanemerge::env;

namespace {
EnvState state_of(const MergeInstance& inst) {
    return MergeEnv(std::make_shared<const MergeInstance>(inst)).reset();
}
}  // namespace

TEST_CASE("bumper gap and footprint overlap") {
    const Rud a = testing::vehicle(1, 0, 0, 10);
    const Rud b = testing::vehicle(2, 10, 0, 10);
    CHECK(bumper_gap(a, b) == doctest::Approx(10 - 4.5));
    CHECK_FALSE(footprints_overlap(a, b));
    Rud c = b;
    c.position.x = 4.5;  // touching only
    CHECK_FALSE(footprints_overlap(a, c));
    c.position.x = 4.4;
    CHECK(footprints_overlap(a, c));
    c.position.y = 1.8;
    CHECK_FALSE(footprints_overlap(a, c));
}

TEST_CASE("merge point sits in the middle of the gap on the target lane") {
    const LaneGeometry g;
    const Rud p = testing::vehicle(1, 50, 0, 10);
    const Rud f = testing::vehicle(2, 20, 0, 10);
    const Vec2 mp = merge_point(p, f, g);
    CHECK(mp.x == doctest::Approx((20 + 2.25 + 50 - 2.25) / 2));
    CHECK(mp.y == g.target_lane_y);
    CHECK_THROWS_AS(merge_point(f, p, g), EnvError);
}

TEST_CASE("outcome precedence: collision, success, lane end, timeout") {
    const EnvConfig cfg;
    auto s = state_of(testing::straight_instance(40, 70, 10));
    CHECK(detect_outcome(s, cfg) == Outcome::InProgress);

    auto ok = s;
    ok.merging.position.y = 0.0;
    CHECK(detect_outcome(ok, cfg) == Outcome::Success);

    auto tight = ok;
    tight.merging.position.x = 60.0;  // 5.5 m behind the preceding rear
    CHECK(detect_outcome(tight, cfg) == Outcome::InProgress);

    auto crash = ok;
    crash.merging.position.x = 68.0;
    CHECK(detect_outcome(crash, cfg) == Outcome::Collision);

    auto off = s;
    off.merging.position.y = 5.4;
    CHECK(detect_outcome(off, cfg) == Outcome::Collision);

    auto end = s;
    end.merging.position.x = 300.0;
    CHECK(detect_outcome(end, cfg) == Outcome::LaneEnd);
    end.steps = cfg.max_steps;
    CHECK(detect_outcome(end, cfg) == Outcome::LaneEnd);

    auto late = s;
    late.steps = cfg.max_steps;
    CHECK(detect_outcome(late, cfg) == Outcome::Timeout);
}

TEST_CASE("actions change controls within their limits") {
    const EnvConfig cfg;
    Rud m = testing::vehicle(1, 0, 3.5, 10);
    m.acceleration = 2.5;
    CHECK(apply_action(m, Action::Accelerate, cfg).acceleration == cfg.accel_max);
    m.acceleration = -3.5;
    CHECK(apply_action(m, Action::Decelerate, cfg).acceleration == cfg.accel_min);
    Rud h = m;
    for (int i = 0; i < 50; ++i) h = apply_action(h, Action::TurnLeft, cfg);
    CHECK(heading_deviation(h.heading) == doctest::Approx(-cfg.heading_max));
    const Rud r = apply_action(testing::vehicle(1, 0, 3.5, 10), Action::TurnRight, cfg);
    CHECK(r.heading == doctest::Approx(cfg.heading_step));
    CHECK(apply_action(m, Action::DoNothing, cfg) == m);
}

TEST_CASE("env step moves the merging vehicle by the closed form and replays the rest") {
    const auto inst = testing::straight_instance(40, 70, 10, 20, 70, true);
    const MergeEnv env(std::make_shared<const MergeInstance>(inst));
    std::mt19937_64 rng(2);
    for (int i = 0; i < 2000; ++i) {
        auto s = env.reset();
        s.merging.speed = testing::uniform(rng, 0, 30);
        s.merging.acceleration = testing::uniform(rng, -4, 3);
        s.merging.heading = normalize_heading(testing::uniform(rng, -0.3, 0.3));
        s.merging.position.x = testing::uniform(rng, -50, 100);
        const auto before = s.merging;
        const auto next = env.step(s, Action::DoNothing);
        const auto p = testing::closed_form_position(before.position, before.speed, before.acceleration, before.heading, 0.1);
        CHECK(std::hypot(next.merging.position.x - p.x, next.merging.position.y - p.y) < 1e-9);
        CHECK(next.preceding.position.x == doctest::Approx(70 + 2.0));
        CHECK(next.bystanders.size() == 1);
        CHECK(next.steps == 1);
    }
    auto s = env.reset();
    s.done = true;
    CHECK_THROWS_AS((void)env.step(s, Action::DoNothing), EnvError);
}

TEST_CASE("replay extrapolates at constant velocity past the recording") {
    const auto inst = testing::straight_instance(40, 70, 10, 20, 10);
    const MergeEnv env(std::make_shared<const MergeInstance>(inst));
    const Rud r = env.replay(inst.roles.preceding, 30);
    CHECK(r.position.x == doctest::Approx(70 + 20 * 3.0));
    CHECK(r.timestamp == inst.frames.front().timestamp + 3000);
}

TEST_CASE("instance validation") {
    auto inst = testing::straight_instance(40, 70, 10);
    CHECK_NOTHROW(validate(inst));
    auto gap = inst;
    gap.frames[3].timestamp += 7;
    CHECK_THROWS_AS(validate(gap), EnvError);
    auto missing = inst;
    missing.frames[0].ruds.pop_back();
    CHECK_THROWS_AS(validate(missing), EnvError);
    auto empty = inst;
    empty.frames.clear();
    CHECK_THROWS_AS(validate(empty), EnvError);
}

TEST_CASE("synthetic generator is deterministic and valid") {
    const auto a = generate_synthetic(4, 30);
    const auto b = generate_synthetic(4, 30);
    const auto c = generate_synthetic(5, 30);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    std::set<std::string> ids;
    for (const auto& inst : a) {
        CHECK_NOTHROW(validate(inst));
        ids.insert(inst.instance_id);
        const auto& f0 = inst.frames.front();
        const Rud* m = f0.find(inst.roles.merging);
        const Rud* p = f0.find(inst.roles.preceding);
        const Rud* f = f0.find(inst.roles.following);
        REQUIRE(m);
        CHECK(inst.geometry.on_merge_lane(m->position.y));
        CHECK(inst.geometry.on_target_lane(p->position.y));
        CHECK(p->position.x > f->position.x);
        for (const auto& r : f0.ruds) {
            const bool role = r.uuid == inst.roles.merging || r.uuid == inst.roles.preceding ||
                              r.uuid == inst.roles.following;
            CHECK(r.connected == role);
        }
    }
    CHECK(ids.size() == a.size());
}

TEST_CASE("split is a disjoint partition with the requested sizes") {
    auto pool = generate_synthetic(8, 100);
    const auto split = split_dataset(pool, {0.7, 0.2, 0.1}, 3);
    CHECK(split.train.size() == 70);
    CHECK(split.test.size() == 20);
    CHECK(split.validation.size() == 10);
    std::set<std::string> seen;
    for (const auto* part : {&split.train, &split.test, &split.validation}) {
        for (const auto& i : *part) CHECK(seen.insert(i.instance_id).second);
    }
    CHECK(seen.size() == 100);
    CHECK(split_dataset(pool, {0.7, 0.2, 0.1}, 3).test == split.test);
    CHECK_THROWS_AS(split_dataset(pool, {0.7, 0.2, 0.2}, 3), EnvError);
    CHECK_THROWS_AS(split_dataset(pool, {1.2, -0.2, 0.0}, 3), EnvError);
}

TEST_CASE("instances survive the NDJSON file format") {
    const auto inst = generate_synthetic(2, 5);
    const auto path = std::filesystem::temp_directory_path() / "lanemerge_instances_test.jsonl";
    write_instances(path, inst);
    CHECK(read_instances(path) == inst);
    CHECK(instance_from_json_line(instance_to_json_line(inst[0])) == inst[0]);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_instances(path), EnvError);
}

TEST_CASE("trajectory CSV import finds the lane change and its gap vehicles") {
    const auto rep = import_instances(std::filesystem::path(LANEMERGE_FIXTURES) / "trajectories.csv");
    CHECK(rep.rows_skipped == 1);
    CHECK(rep.vehicles == 4);
    REQUIRE(rep.instances.size() == 1);
    const auto& inst = rep.instances.front();
    CHECK(inst.source == InstanceSource::ImportedTrajectoryData);
    CHECK(inst.frames.size() == 70);
    CHECK_NOTHROW(validate(inst));
    const Rud* p = inst.frames.front().find(inst.roles.preceding);
    const Rud* f = inst.frames.front().find(inst.roles.following);
    REQUIRE(p);
    REQUIRE(f);
    CHECK(p->position.x > f->position.x);
    CHECK(inst.geometry.target_lane_y == doctest::Approx(0.0).epsilon(0.2));
    CHECK_THROWS_AS(import_instances("/nonexistent.csv"), EnvError);
}

TEST_CASE("human driver model is reproducible per seed") {
    const auto inst = testing::straight_instance(40, 70, 10);
    const MergeEnv env(std::make_shared<const MergeInstance>(inst));
    auto run = [&](std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        GapAcceptanceDriver d({}, rng);
        std::vector<Action> acts;
        auto s = env.reset();
        while (!s.done) {
            acts.push_back(d.decide(s, env.config(), rng));
            s = env.step(s, acts.back());
        }
        return acts;
    };
    CHECK(run(3) == run(3));
}
