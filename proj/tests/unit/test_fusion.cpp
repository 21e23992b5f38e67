#include <doctest.h>

#include <random>

#include "generators.hpp"
#include "lanemerge/core/node.hpp"
#include "lanemerge/fusion/fusion.hpp"
#include "lanemerge/fusion/service.hpp"
#include "scenes.hpp"

using namespace lanemerge;
using namespace lanemerge::fusion;

namespace {
Rud camera(std::uint64_t id, double x, double y, Millis t) {
    Rud r = testing::vehicle(id, x, y, 20, false);
    r.source = Source::CameraSystem;
    r.timestamp = t;
    return r;
}
Rud car(std::uint64_t id, double x, double y, Millis t) {
    Rud r = testing::vehicle(id, x, y, 20, true);
    r.timestamp = t;
    return r;
}
}  // namespace

TEST_CASE("extrapolation follows uniformly accelerated motion") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 5000; ++i) {
        Rud r = testing::random_rud(rng);
        const Millis dt = static_cast<Millis>(rng() % 3000);
        const Rud e = extrapolate(r, r.timestamp + dt);
        const double s = static_cast<double>(dt) / 1000.0;
        const Vec2 p = testing::closed_form_position(r.position, r.speed, r.acceleration, r.heading, s);
        CHECK(std::abs(e.position.x - p.x) < 1e-9 * (1 + std::abs(p.x)));
        CHECK(std::abs(e.position.y - p.y) < 1e-9 * (1 + std::abs(p.y)));
        CHECK(std::abs(e.speed - testing::closed_form_speed(r.speed, r.acceleration, s)) < 1e-9);
        CHECK(e.heading == r.heading);
        CHECK(e.timestamp == r.timestamp + dt);
    }
    Rud brake = testing::vehicle(1, 0, 0, 10);
    brake.acceleration = -5;
    brake.timestamp = 1000;
    CHECK(extrapolate(brake, 11000).position.x == doctest::Approx(10.0));  // stops after 2 s, 10 m
    CHECK_THROWS_AS(extrapolate(brake, 999), InvariantError);
}

TEST_CASE("association confidence climbs, matches at the threshold and decays away") {
    FusionConfig c;
    FusionHistory h;
    const Rud cam = camera(10, 100, 0, 0);
    const std::vector<Rud> near{car(1, 101, 0, 0)};
    const std::vector<Rud> none;
    // 0.15, 0.30, 0.45 below the threshold; 0.60 matches.
    for (int i = 0; i < 3; ++i) CHECK_FALSE(associate(cam, near, h, c, i).matched_vehicle.has_value());
    const auto a = associate(cam, near, h, c, 3);
    REQUIRE(a.matched_vehicle.has_value());
    CHECK(*a.matched_vehicle == near[0].uuid);
    CHECK(a.entry->confidence == doctest::Approx(0.60));
    // Absent partner: 0.35, 0.10, then removed.
    CHECK(associate(cam, none, h, c, 4).entry->confidence == doctest::Approx(0.35));
    CHECK(associate(cam, none, h, c, 5).entry->confidence == doctest::Approx(0.10));
    CHECK_FALSE(associate(cam, none, h, c, 6).entry.has_value());
    CHECK(h.empty());
    // Outside the distance gate nothing starts.
    const std::vector<Rud> far{car(1, 110, 0, 0)};
    CHECK_FALSE(associate(cam, far, h, c, 7).entry.has_value());
    // Heading outside the angle gate.
    std::vector<Rud> turned{car(1, 100.5, 0, 0)};
    turned[0].heading = 0.5;
    CHECK_FALSE(in_gate(cam, turned[0], c));
}

TEST_CASE("history entries expire after the TTL") {
    FusionHistory h;
    h[Uuid(1, 1)] = {Uuid(1, 1), Uuid(2, 2), 0.5, 100};
    h[Uuid(3, 3)] = {Uuid(3, 3), Uuid(4, 4), 0.5, 900};
    clean_history(h, 1100, 500);
    CHECK(h.size() == 1);
    CHECK(h.count(Uuid(3, 3)) == 1);
    clean_history(h, 1400, 500);  // exactly the TTL is kept
    CHECK(h.size() == 1);
}

TEST_CASE("windows merge a tracked camera object into its vehicle") {
    FusionEngine engine;
    std::size_t fused = 0;
    for (int w = 1; w <= 10; ++w) {
        const Millis t = w * 100;
        engine.intake(car(1, 20.0 * t / 1000, 0, t - 40));
        engine.intake(camera(50, 20.0 * t / 1000 + 0.6, 0.2, t - 70));
        const auto out = engine.close(t);
        CHECK(out.inputs == 2);
        if (out.matches == 1) {
            ++fused;
            REQUIRE(out.ruds.size() == 1);
            CHECK(out.ruds[0].fused);
            CHECK(out.ruds[0].rud.source == Source::Fused);
            CHECK(out.ruds[0].rud.uuid == testing::vehicle(1, 0, 0, 0).uuid);
            CHECK(out.ruds[0].origin == rud_key(Uuid(0x1000 + 50, 50), t - 70));
        } else {
            CHECK(out.ruds.size() == 2);
        }
    }
    CHECK(fused == 7);  // windows 4 to 10
}

TEST_CASE("two connected vehicles side by side are never merged") {
    FusionHistory h;
    const std::vector<Rud> w{car(1, 100, 0, 50), car(2, 100.5, 0, 50), camera(9, 300, 0, 50)};
    for (int i = 0; i < 10; ++i) {
        const auto out = close_window(w, 100 + i * 100, {}, h);
        CHECK(out.ruds.size() == 3);
        CHECK(out.matches == 0);
    }
}

TEST_CASE("one camera object pairs with at most one vehicle") {
    FusionHistory h;
    const std::vector<Rud> w{car(1, 100, 0, 0), car(2, 101, 0, 0), camera(9, 100.25, 0, 0)};
    WindowOutput out;
    for (int i = 0; i < 5; ++i) out = close_window(w, i * 100, {}, h);
    CHECK(out.matches == 1);
    REQUIRE(out.ruds.size() == 2);
    CHECK(out.ruds[0].rud.uuid == Uuid(0x1001, 1));  // nearest
    CHECK(out.ruds[0].fused);
    CHECK_FALSE(out.ruds[1].fused);
}

TEST_CASE("engine keeps the latest RUD per source, drops stale ones and carries early ones") {
    FusionEngine engine;
    engine.intake(car(1, 0, 0, 10));
    engine.intake(car(1, 1, 0, 60));
    engine.intake(car(3, 0, 7, 350));    // future
    CHECK(engine.next_close(250) == 300);
    CHECK(engine.next_close(300) == 400);
    auto out = engine.close(120);
    REQUIRE(out.inputs == 1);
    CHECK(out.ruds[0].rud.position.x == doctest::Approx(1.0 + 20 * 0.06));
    CHECK(engine.buffered() == 1);
    engine.intake(car(2, 0, 3.5, 150));  // 250 ms old at t=400, beyond window + lateness
    out = engine.close(400);
    CHECK(out.stale_dropped == 1);
    CHECK(out.inputs == 1);
    CHECK(engine.buffered() == 0);
    FusionConfig bad;
    bad.threshold = 1.0;
    CHECK_THROWS_AS(FusionEngine{bad}, std::invalid_argument);
}

TEST_CASE("fusion service publishes each window on the global topic and logs it") {
    FusionService svc;
    Outbox out;
    V2XEnvelope e;
    e.topic = kTopicVehicleRuds;
    e.payload = car(1, 10, 0, 1000);
    svc.on_message(e, 1000, out);
    CHECK(out.empty());
    REQUIRE(svc.next_tick(1000).has_value());
    svc.on_tick(*svc.next_tick(1000), out);
    const auto msgs = out.take();
    std::size_t gdm = 0, fused_logs = 0;
    for (const auto& m : msgs) {
        gdm += m.topic == kTopicGdm;
        if (const auto* l = std::get_if<LogRecord>(&m.payload)) fused_logs += l->event == "rud_fused";
    }
    CHECK(gdm == 1);
    CHECK(fused_logs == 1);
    CHECK(svc.windows() == 1);
}
