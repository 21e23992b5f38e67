#include <doctest.h>

#include <cmath>
#include <random>

#include "generators.hpp"
#include "lanemerge/core/flat_config.hpp"
#include "lanemerge/core/kinematics.hpp"
#include "lanemerge/core/node.hpp"
#include "lanemerge/core/trajectory.hpp"
#include "lanemerge/core/types.hpp"

using namespace lanemerge;

TEST_CASE("uuid text form round-trips and rejects malformed input") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 1000; ++i) {
        const Uuid u = Uuid::generate(rng);
        CHECK(Uuid::parse(u.str()) == u);
        CHECK(u.str().size() == 36);
        CHECK(u.str()[14] == '4');  // version nibble
    }
    CHECK(Uuid::parse("6F1C2A4E-8B3D-4C5E-9F7A-0B1C2D3E4F50") == Uuid::parse("6f1c2a4e-8b3d-4c5e-9f7a-0b1c2d3e4f50"));
    CHECK_THROWS_AS(Uuid::parse("6f1c2a4e8b3d4c5e9f7a0b1c2d3e4f50"), std::invalid_argument);
    CHECK_THROWS_AS(Uuid::parse("6f1c2a4e-8b3d-4c5e-9f7a-0b1c2d3e4f5g"), std::invalid_argument);
    CHECK_THROWS_AS(Uuid::parse(""), std::invalid_argument);
}

TEST_CASE("same seed gives the same uuid sequence") {
    std::mt19937_64 a(9), b(9);
    for (int i = 0; i < 10; ++i) CHECK(Uuid::generate(a) == Uuid::generate(b));
}

TEST_CASE("heading helpers wrap into their ranges") {
    CHECK(normalize_heading(-0.1) == doctest::Approx(kTwoPi - 0.1));
    CHECK(normalize_heading(kTwoPi) == doctest::Approx(0.0));
    CHECK(heading_deviation(kTwoPi - 0.2) == doctest::Approx(-0.2));
    CHECK(heading_deviation(0.3) == doctest::Approx(0.3));
    std::mt19937_64 rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double h = testing::uniform(rng, -50, 50);
        const double n = normalize_heading(h);
        CHECK(n >= 0.0);
        CHECK(n < kTwoPi);
        const double d = heading_deviation(h);
        CHECK(d > -std::numbers::pi - 1e-12);
        CHECK(d <= std::numbers::pi + 1e-12);
        CHECK(std::cos(d) == doctest::Approx(std::cos(h)).epsilon(1e-9));
    }
}

TEST_CASE("rud invariants are enforced") {
    Rud r;
    r.uuid = Uuid(1, 2);
    CHECK_NOTHROW(validate(r));
    auto bad = r;
    bad.speed = -0.1;
    CHECK_THROWS_AS(validate(bad), InvariantError);
    bad = r;
    bad.heading = kTwoPi;
    CHECK_THROWS_AS(validate(bad), InvariantError);
    bad = r;
    bad.length = 0.0;
    CHECK_THROWS_AS(validate(bad), InvariantError);
    bad = r;
    bad.position.x = std::nan("");
    CHECK_THROWS_AS(validate(bad), InvariantError);
    bad = r;
    bad.timestamp = 0;
    CHECK_THROWS_AS(validate(bad), InvariantError);
}

TEST_CASE("recommendation waypoints must be strictly increasing in time") {
    TrajectoryRecommendation t;
    t.waypoints = {{100, {0, 0}, 1, 0}, {100, {1, 0}, 1, 0}};
    CHECK_THROWS_AS(validate(t), InvariantError);
    t.waypoints[1].timestamp = 101;
    CHECK_NOTHROW(validate(t));
    t.waypoints.clear();
    CHECK_THROWS_AS(validate(t), InvariantError);
}

TEST_CASE("advance matches the closed-form solution including stops") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20000; ++i) {
        KinematicState s{{testing::uniform(rng, -100, 100), testing::uniform(rng, -5, 5)},
                         testing::uniform(rng, 0, 40), testing::uniform(rng, -6, 4), testing::uniform(rng, 0, kTwoPi)};
        const double dt = testing::uniform(rng, 0, 3);
        const auto out = advance(s, dt);
        const auto p = testing::closed_form_position(s.position, s.speed, s.acceleration, s.heading, dt);
        CHECK(std::hypot(out.position.x - p.x, out.position.y - p.y) < 1e-9);
        CHECK(out.speed == doctest::Approx(testing::closed_form_speed(s.speed, s.acceleration, dt)));
        CHECK(out.acceleration == s.acceleration);
        CHECK(out.heading == s.heading);
    }
}

TEST_CASE("a braking vehicle stops and never reverses") {
    KinematicState s{{0, 0}, 10.0, -5.0, 0.0};
    const auto out = advance(s, 5.0);
    CHECK(out.speed == 0.0);
    CHECK(out.position.x == doctest::Approx(10.0));  // v^2 / 2|a|
    CHECK(advance(s, 0.0).position.x == 0.0);
}

TEST_CASE("flat config sections, comments, quotes and overrides") {
    const auto cfg = FlatConfig::parse(
        "# top\nseed = 4\n[link]\nlatency_ms = 30  # one way\nname = \"lte # 30\"\n[world]\ncamera = false\n");
    CHECK(cfg.get_int("seed", 0) == 4);
    CHECK(cfg.get_double("link.latency_ms", 0) == 30.0);
    CHECK(cfg.get_string("link.name", "") == "lte # 30");
    CHECK_FALSE(cfg.get_bool("world.camera", true));
    CHECK(cfg.get_int("missing", 7) == 7);
    auto c2 = cfg;
    c2.set_override("link.latency_ms=5");
    CHECK(c2.get_double("link.latency_ms", 0) == 5.0);
    CHECK_THROWS_AS(c2.set_override("no equals sign"), ConfigError);
    CHECK_THROWS_AS(FlatConfig::parse("x = 1\n[open\n"), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("link.name", 0), ConfigError);
}

TEST_CASE("state_on_plan interpolates between waypoints and extrapolates after") {
    const std::vector<Waypoint> plan{{1000, {0, 0}, 10, 0}, {1100, {1, 0.5}, 12, 2}, {1200, {2.2, 0.5}, 12, 0}};
    const auto mid = state_on_plan(plan, 1050);
    CHECK(mid.position.x == doctest::Approx(0.5));
    CHECK(mid.position.y == doctest::Approx(0.25));
    CHECK(mid.speed == doctest::Approx(11));
    CHECK(mid.heading == doctest::Approx(normalize_heading(std::atan2(0.5, 1.0))));
    const auto before = state_on_plan(plan, 900);
    CHECK(before.position.x == 0.0);
    const auto after = state_on_plan(plan, 1300);
    CHECK(after.position.x == doctest::Approx(2.2 + 1.2));
    CHECK(after.acceleration == 0.0);
}

TEST_CASE("topic and key helpers") {
    const Uuid u = Uuid::parse("6f1c2a4e-8b3d-4c5e-9f7a-0b1c2d3e4f50");
    CHECK(recommendation_topic(u) == "recommendations.6f1c2a4e-8b3d-4c5e-9f7a-0b1c2d3e4f50");
    CHECK(rud_key(u, 42) == "6f1c2a4e-8b3d-4c5e-9f7a-0b1c2d3e4f50@42");
}
