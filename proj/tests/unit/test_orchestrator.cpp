#include <doctest.h>

#include <random>

#include "lanemerge/core/kinematics.hpp"
#include "lanemerge/core/trajectory.hpp"
#include "lanemerge/orchestrator/knowledge_base.hpp"
#include "lanemerge/orchestrator/orchestrator.hpp"
#include "scenes.hpp"

using namespace lanemerge;
using namespace lanemerge::orchestrator;

namespace {
constexpr Millis kT = 1'700'000'000'000;

Rud at(std::uint64_t id, double x, double y, bool connected = true, Millis t = kT) {
    Rud r = testing::vehicle(id, x, y, 20, connected);
    r.timestamp = t;
    return r;
}

V2XEnvelope gdm(const Rud& r) {
    V2XEnvelope e;
    e.topic = kTopicGdm;
    e.sender = "fusion";
    e.payload = r;
    return e;
}

std::vector<TrajectoryRecommendation> recos(const std::vector<OutMessage>& msgs) {
    std::vector<TrajectoryRecommendation> out;
    for (const auto& m : msgs) {
        if (const auto* r = std::get_if<TrajectoryRecommendation>(&m.payload)) {
            CHECK(m.topic == recommendation_topic(r->target_uuid));
            out.push_back(*r);
        }
    }
    return out;
}

std::size_t count_logs(const std::vector<OutMessage>& msgs, const std::string& event) {
    std::size_t n = 0;
    for (const auto& m : msgs) {
        if (const auto* l = std::get_if<LogRecord>(&m.payload)) n += l->event == event;
    }
    return n;
}

Orchestrator make(OrchestratorConfig cfg = {}) {
    return Orchestrator(std::make_shared<const rl::QNetwork>(testing::constant_policy(env::Action::TurnLeft)), cfg,
                        make_zones(1, 0.0));
}
}  // namespace

TEST_CASE("knowledge base keeps the newest RUD per vehicle") {
    KnowledgeBase kb(500);
    CHECK(kb.upsert(at(1, 10, 0, true, 1000)));
    CHECK_FALSE(kb.upsert(at(1, 5, 0, true, 900)));
    CHECK(kb.get(Uuid(0x1001, 1))->position.x == 10);
    CHECK(kb.upsert(at(1, 12, 0, true, 1000)));  // equal timestamps replace
    kb.upsert(at(2, 0, 0, true, 400));
    CHECK(kb.fresh(1000).size() == 1);
    CHECK(kb.evict_stale(1000) == 1);
    CHECK(kb.size() == 1);
    Rud bad = at(3, 0, 0);
    bad.speed = -1;
    CHECK_THROWS_AS(kb.upsert(bad), InvariantError);
}

TEST_CASE("situation detection picks the downstream merger and the nearest gap vehicles") {
    const auto zone = make_zones(1, 0.0).front();
    std::vector<Rud> ruds{at(1, 40, 3.5), at(5, 60, 3.5), at(2, 70, 0, false), at(3, 10, 0), at(6, 120, 0), at(7, -30, 0)};
    const auto s = detect_situation(ruds, zone, kT);
    REQUIRE(s.has_value());
    CHECK(s->merging == Uuid(0x1005, 5));
    CHECK(s->preceding == Uuid(0x1002, 2));  // unconnected is allowed
    CHECK(s->following == Uuid(0x1003, 3));
    // No vehicle ahead on the target lane: no situation.
    const std::vector<Rud> no_ahead{at(1, 40, 3.5), at(3, 10, 0)};
    CHECK_FALSE(detect_situation(no_ahead, zone, kT).has_value());
    // An unconnected merger cannot be coordinated.
    const std::vector<Rud> dark{at(1, 40, 3.5, false), at(2, 70, 0), at(3, 10, 0)};
    CHECK_FALSE(detect_situation(dark, zone, kT).has_value());
    // Zones are lateral translations.
    const auto zones = make_zones(3, 20.0);
    CHECK(zones[2].geometry.merge_lane_y == doctest::Approx(43.5));
    CHECK(zones[2].contains(at(1, 0, 40)));
    CHECK_FALSE(zones[0].contains(at(1, 0, 40)));
}

TEST_CASE("duplicate unconnected detections are dropped") {
    const std::vector<Rud> ruds{at(1, 40, 3.5), at(9, 40.5, 3.6, false), at(10, 80, 0, false)};
    const auto kept = drop_duplicates(ruds);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].uuid == ruds[0].uuid);
    CHECK(kept[1].uuid == ruds[2].uuid);
}

TEST_CASE("gap-opening profile decelerates to a stop without reversing") {
    Rud f = at(3, 10, 0);
    f.speed = 0.6;
    const auto reco = gap_opening_profile(f, Uuid(9, 9), kT, kT, -0.5, 2.0, 0.1);
    CHECK(reco.waypoints.size() == 21);
    CHECK(reco.waypoints.front().timestamp == kT);
    CHECK(reco.waypoints.back().timestamp == kT + 2000);
    CHECK(reco.waypoints.back().speed == 0.0);
    CHECK(reco.waypoints.back().position.x == doctest::Approx(10 + 0.36));  // v^2 / 2|a|
    for (std::size_t i = 1; i < reco.waypoints.size(); ++i) {
        CHECK(reco.waypoints[i].position.x >= reco.waypoints[i - 1].position.x);
    }
}

TEST_CASE("audit flags unsafe gaps and failed rollouts") {
    KnowledgeBase kb;
    for (const auto& r : {at(1, 40, 3.5), at(2, 70, 0), at(3, 10, 0)}) kb.upsert(r);
    const auto zone = make_zones(1, 0.0).front();
    const auto s = detect_situation(kb.fresh(kT), zone, kT);
    REQUIRE(s.has_value());
    std::mt19937_64 rng(1);
    OrchestratorConfig cfg;
    const auto good = recommend(*s, kb, testing::constant_policy(env::Action::TurnLeft), cfg, zone, kT, rng);
    CHECK(good.audit.ok);
    CHECK(good.rollout.outcome == env::Outcome::Success);
    REQUIRE(good.recommendations.size() == 2);
    CHECK(good.recommendations[0].target_uuid == s->merging);
    CHECK(good.recommendations[1].target_uuid == s->following);
    CHECK(good.audit.min_gap >= cfg.d_safe);
    // The same merge with a 30 m requirement cannot be approved.
    const auto strict = audit(good.rollout, 30.0);
    CHECK_FALSE(strict.ok);
    CHECK(strict.reason == "gap below safety distance");
    const auto stalled = recommend(*s, kb, testing::constant_policy(env::Action::DoNothing), cfg, zone, kT, rng);
    CHECK_FALSE(stalled.audit.ok);
    CHECK(stalled.recommendations.empty());
}

TEST_CASE("orchestrator service sends a plan to the merger and a gap request to the follower") {
    auto orch = make();
    orch.keep_emitted(true);
    Outbox out;
    orch.on_message(gdm(at(2, 70, 0)), kT, out);
    orch.on_message(gdm(at(3, 10, 0)), kT, out);
    CHECK(recos(out.take()).empty());
    orch.on_message(gdm(at(1, 40, 3.5)), kT, out);
    const auto msgs = out.take();
    const auto sent = recos(msgs);
    REQUIRE(sent.size() == 2);
    CHECK(sent[0].target_uuid == Uuid(0x1001, 1));
    CHECK(sent[1].target_uuid == Uuid(0x1003, 3));
    CHECK(count_logs(msgs, "reco_computed") == 2);
    CHECK(orch.emitted().size() == 1);
    // A RUD on the plan does not trigger a new one under the deviation cadence.
    const auto on_plan = state_on_plan(sent[0].waypoints, kT + 100);
    Rud next = at(1, on_plan.position.x, on_plan.position.y, true, kT + 100);
    next.speed = on_plan.speed;
    next.heading = on_plan.heading;
    orch.on_message(gdm(next), kT + 100, out);
    CHECK(recos(out.take()).empty());
    // A large deviation does.
    next.position.x += 5;
    next.timestamp = kT + 200;
    orch.on_message(gdm(at(2, 74, 0, true, kT + 200)), kT + 200, out);
    orch.on_message(gdm(at(3, 14, 0, true, kT + 200)), kT + 200, out);
    orch.on_message(gdm(next), kT + 200, out);
    const auto replan = recos(out.take());
    REQUIRE(replan.size() == 1);  // the follower was already asked
    CHECK(orch.state(sent[0].recommendation_id)->status == RecoStatus::Superseded);
}

TEST_CASE("unconnected vehicles never receive recommendations") {
    auto orch = make();
    Outbox out;
    orch.on_message(gdm(at(2, 70, 0, false)), kT, out);
    orch.on_message(gdm(at(3, 10, 0, false)), kT, out);
    orch.on_message(gdm(at(1, 40, 3.5)), kT, out);
    const auto sent = recos(out.take());
    REQUIRE(sent.size() == 1);
    CHECK(sent[0].target_uuid == Uuid(0x1001, 1));
    orch.on_message(gdm(at(4, 80, 3.5, false)), kT, out);
    CHECK(recos(out.take()).empty());
}

TEST_CASE("rejections are retried up to the limit, then the situation fails") {
    OrchestratorConfig cfg;
    cfg.retry_limit = 2;
    auto orch = make(cfg);
    Outbox out;
    orch.on_message(gdm(at(2, 70, 0)), kT, out);
    orch.on_message(gdm(at(3, 10, 0)), kT, out);
    orch.on_message(gdm(at(1, 40, 3.5)), kT, out);
    auto sent = recos(out.take());
    REQUIRE(!sent.empty());
    Uuid current = sent[0].recommendation_id;
    for (int attempt = 1; attempt <= 3; ++attempt) {
        V2XEnvelope fb;
        fb.topic = kTopicFeedback;
        fb.payload = ManeuverFeedback{current, Uuid(0x1001, 1), Verdict::Reject, kT + attempt};
        orch.on_message(fb, kT + attempt, out);
        const auto msgs = out.take();
        const auto again = recos(msgs);
        if (attempt <= 2) {
            REQUIRE(again.size() == 1);
            CHECK(orch.state(again[0].recommendation_id)->retry_count == attempt);
            current = again[0].recommendation_id;
        } else {
            CHECK(again.empty());
            CHECK(count_logs(msgs, "situation_failed") == 1);
        }
    }
    CHECK(orch.failed_situations() == 1);
    orch.on_message(gdm(at(1, 42, 3.5, true, kT + 100)), kT + 100, out);
    CHECK(recos(out.take()).empty());
    CHECK_THROWS_AS(orch.handle_feedback(ManeuverFeedback{Uuid(7, 7), Uuid(1, 1), Verdict::Accept, kT}, kT, out),
                    OrchestratorError);
}

TEST_CASE("departed vehicles leave the orchestrator's knowledge base") {
    auto orch = make();
    Outbox out;
    // One target-lane vehicle every 100 ms, each seen once; 500 ms staleness.
    for (std::uint64_t i = 0; i < 200; ++i) {
        const Millis t = kT + static_cast<Millis>(i) * 100;
        orch.on_message(gdm(at(100 + i, 20, 0, true, t)), t, out);
        CHECK(orch.knowledge_base().size() <= 12);
    }
    out.take();
}
