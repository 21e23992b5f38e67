#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "lanemerge/core/flat_config.hpp"
#include "lanemerge/env/dataset.hpp"
#include "lanemerge/harness/stack.hpp"
#include "lanemerge/rl/checkpoint.hpp"
#include "scenes.hpp"

using namespace lanemerge;
using namespace lanemerge::harness;

namespace {
struct Fixture {
    std::filesystem::path dir;
    std::filesystem::path model;
    std::filesystem::path instances;

    Fixture() {
        dir = std::filesystem::temp_directory_path() / "lanemerge_harness_test";
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        model = dir / "model.lmqn";
        rl::TrainConfig cfg;
        cfg.variant = rl::Variant::Plain;
        rl::save_checkpoint(model, testing::constant_policy(env::Action::TurnLeft), cfg);
        std::vector<env::MergeInstance> list;
        for (int i = 0; i < 3; ++i) {
            auto inst = testing::straight_instance(40 + 5 * i, 75 + 5 * i, 5 + 5 * i, 20, 70, true);
            inst.instance_id = "straight-" + std::to_string(i);
            list.push_back(std::move(inst));
        }
        instances = dir / "instances.ndjson";
        env::write_instances(instances, list);
    }
    ~Fixture() { std::filesystem::remove_all(dir); }

    [[nodiscard]] ScenarioConfig scenario(const std::string& name) const {
        ScenarioConfig s;
        s.run_id = name;
        s.model_path = model;
        s.instances_path = instances;
        s.out_dir = dir / name;
        return s;
    }
};

nlohmann::json without_wall_clock(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    j.erase("wall_clock");
    return j;
}
}  // namespace

TEST_CASE("in-process stack coordinates every merge and leaves bystanders alone") {
    const Fixture fx;
    const auto r = run_stack(fx.scenario("ideal"));
    CHECK(r.exit_code == 0);
    CHECK(r.world.merges == 3);
    CHECK(r.world.merges_with_reco == 3);
    CHECK(r.world.recos_merging >= 3);
    CHECK(r.world.recos_unconnected == 0);
    CHECK(r.world.outcomes.at("Success") == 3);
    CHECK(r.open_sessions_after == 0);
    CHECK(r.kpi.deliveries.size() == r.world.recos_merging + r.world.recos_following);
    for (const char* f : {"summary.json", "delivery_time.csv", "ecdf_distance.csv", "ecdf_accel.csv", "logs.ndjson"}) {
        CHECK(std::filesystem::exists(fx.dir / "ideal" / f));
    }
}

TEST_CASE("the 30 ms link profile still completes and delays delivery") {
    const Fixture fx;
    auto s = fx.scenario("lte");
    s.link = named_link_profile("lte-30ms");
    const auto r = run_stack(s);
    CHECK(r.exit_code == 0);
    CHECK(r.world.merges == 3);
    REQUIRE_FALSE(r.kpi.deliveries.empty());
    for (const auto& d : r.kpi.deliveries) CHECK(d.ms() >= 60.0);  // uplink plus downlink latency
}

TEST_CASE("human baseline runs without any recommendation") {
    const Fixture fx;
    auto s = fx.scenario("human");
    s.model_path.reset();
    s.human_baseline = true;
    const auto r = run_stack(s);
    CHECK(r.exit_code == 0);
    CHECK(r.world.merges == 3);
    CHECK(r.world.recos_merging == 0);
    CHECK(r.world.merges_with_reco == 0);
    CHECK(r.kpi.reco_computed == 0);
}

TEST_CASE("runs are reproducible apart from wall-clock values") {
    const Fixture fx;
    const auto a = run_stack(fx.scenario("rep"));
    const auto b = run_stack(fx.scenario("rep"));
    REQUIRE(a.exit_code == 0);
    CHECK(without_wall_clock(a.summary_json) == without_wall_clock(b.summary_json));
}

TEST_CASE("scenario configuration is validated") {
    ScenarioConfig s;
    CHECK_THROWS_AS(s.validate(), ConfigError);  // no model
    s.human_baseline = true;
    CHECK_NOTHROW(s.validate());
    s.zones = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.zones = 1;
    s.distributed = true;
    CHECK_THROWS_AS(s.validate(), ConfigError);  // no executable
    CHECK_THROWS_AS(named_link_profile("5g-magic"), ConfigError);
    CHECK(named_link_profile("lte-30ms").latency_ms == 30.0);
    CHECK(named_link_profile("ideal").is_ideal());

    const auto cfg = FlatConfig::parse(
        "[scenario]\nzones = 4\nlink_profile = lte-30ms\nhuman_baseline = true\n"
        "[link]\nlatency_ms = 45\n[orchestrator]\ncadence = every_update\n[world]\nmerges = 12\n"
        "[geometry]\nmerge_lane_end_x = 250\n");
    const auto parsed = scenario_from_config(cfg);
    CHECK(parsed.zones == 4);
    CHECK(parsed.link.latency_ms == 45.0);
    CHECK(parsed.orchestrator.cadence == orchestrator::Cadence::EveryUpdate);
    CHECK(parsed.world.merges == 12);
    CHECK(parsed.geometry.merge_lane_end_x == 250.0);
    CHECK_THROWS_AS(scenario_from_config(FlatConfig::parse("[orchestrator]\ncadence = sometimes\n")), ConfigError);
    CHECK_THROWS_AS(scenario_from_config(FlatConfig::parse("[scenario]\nzones = many\n")), ConfigError);

    env::LaneGeometry g;
    g.merge_lane_end_x = 222;
    const auto round = geometry_from_config(FlatConfig::parse(geometry_to_config(g)));
    CHECK(round == g);
}
