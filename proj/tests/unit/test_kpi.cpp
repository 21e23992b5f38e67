#include <doctest.h>

#include <filesystem>
#include <json.hpp>
#include <random>
#include <thread>

#include "generators.hpp"
#include "lanemerge/core/node.hpp"
#include "lanemerge/core/wire.hpp"
#include "lanemerge/gateway/socket.hpp"
#include "lanemerge/kpi/collector.hpp"
#include "lanemerge/kpi/kpi.hpp"
#include "oracles.hpp"

using namespace lanemerge;
using namespace lanemerge::kpi;
using namespace std::chrono_literals;

namespace {
StoredRecord rec(std::string event, std::string corr, Millis t, std::map<std::string, AttributeValue> attrs = {}) {
    return StoredRecord{LogRecord{"test", std::move(event), std::move(corr), t, std::move(attrs)}, t};
}

std::vector<StoredRecord> chain(const std::string& reco, Millis sent, Millis delivered) {
    const std::string raw = "veh@" + std::to_string(sent);
    const std::string fused = "veh@" + std::to_string(sent + 100);
    return {rec("rud_sent", raw, sent), rec("rud_fused", fused, sent + 100, {{"origin", raw}}),
            rec("reco_computed", reco, sent + 110, {{"origin", fused}}), rec("reco_delivered", reco, delivered)};
}

std::filesystem::path temp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}
}  // namespace

TEST_CASE("percentiles and ECDF agree with brute-force counting") {
    std::mt19937_64 rng(10);
    for (int set = 0; set < 200; ++set) {
        const std::size_t n = 1 + rng() % 300;
        std::vector<double> s(n);
        for (auto& v : s) v = std::round(testing::uniform(rng, -50, 50) * (set % 2 ? 1.0 : 10.0)) / 10.0;  // ties
        for (double p : {0.0, 1.0, 5.0, 50.0, 95.0, 99.0, 99.9, 100.0, testing::uniform(rng, 0, 100)}) {
            CHECK(percentile(s, p) == testing::brute_percentile(s, p));
        }
        const auto e = ecdf(s);
        REQUIRE(e.count() == n);
        for (std::size_t i = 0; i < n; ++i) CHECK(e.fractions[i] == doctest::Approx(testing::brute_ecdf(s, e.values[i])));
        for (int q = 0; q < 5; ++q) {
            const double x = testing::uniform(rng, -60, 60);
            CHECK(e.at(x) == doctest::Approx(testing::brute_ecdf(s, x)));
        }
    }
    const std::vector<double> thousand = [] {
        std::vector<double> v(1000);
        for (int i = 0; i < 1000; ++i) v[static_cast<std::size_t>(i)] = i + 1;
        return v;
    }();
    CHECK(percentile(thousand, 99.9) == 999);
    CHECK(percentile(thousand, 0) == 1);
    CHECK_THROWS_AS(percentile(std::vector<double>{}, 50), std::invalid_argument);
    CHECK_THROWS_AS(percentile(thousand, 101), std::invalid_argument);
    CHECK(ecdf(std::vector<double>{}).at(3.0) == 0.0);
}

TEST_CASE("inter-vehicle distances pair same-lane vehicles only") {
    Rud a, b, c;
    a.position = {0, 0};
    a.lane = 1;
    b.position = {20, 0};
    b.lane = 1;
    c.position = {10, 3.5};
    c.lane = 2;
    Rud unknown;
    const std::vector<std::vector<Rud>> frames{{a, b, c, unknown}};
    const auto d = inter_vehicle_distances(frames);
    REQUIRE(d.size() == 1);
    CHECK(d[0] == doctest::Approx(20 - 4.5));
}

TEST_CASE("delivery time is traced back to the first transmission") {
    auto records = chain("r1", 1000, 1180);
    const auto r = delivery_time(records, "r1");
    REQUIRE(r.sample.has_value());
    CHECK(r.sample->ms() == 180);
    CHECK(r.sample->origin == "veh@1000");
    // Without the fusion record the trigger itself must have been transmitted.
    auto direct = chain("r2", 2000, 2150);
    direct.erase(direct.begin() + 1);
    CHECK_FALSE(delivery_time(direct, "r2").sample.has_value());
    CHECK(delivery_time(direct, "r2").missing == "rud_sent");
    for (const auto& [drop, missing] : std::vector<std::pair<std::size_t, std::string>>{
             {0, "rud_sent"}, {2, "reco_computed"}, {3, "reco_delivered"}}) {
        auto broken = chain("r3", 3000, 3100);
        broken.erase(broken.begin() + static_cast<std::ptrdiff_t>(drop));
        const auto b = delivery_time(broken, "r3");
        CHECK_FALSE(b.sample.has_value());
        CHECK(b.missing == missing);
    }
    CHECK(delivery_time(chain("r4", 5000, 4000), "r4").missing == "causality");
    // Duplicate deliveries count once, at the first one.
    auto dup = chain("r5", 1000, 1100);
    dup.push_back(rec("reco_delivered", "r5", 1300));
    const auto s = summarize(dup);
    REQUIRE(s.deliveries.size() == 1);
    CHECK(s.deliveries[0].ms() == 100);
}

TEST_CASE("summary counts events and isolates wall-clock values") {
    auto records = chain("r1", 1000, 1100);
    auto more = chain("r2", 2000, 2300);
    records.insert(records.end(), more.begin(), more.end());
    records.push_back(rec("reco_delivered", "orphan", 5000));
    records.push_back(rec("merge_resolved", "m1", 6000, {{"outcome", std::string("success")}}));
    records.push_back(rec("merge_resolved", "m2", 6000, {{"outcome", std::string("collision")}}));
    records.push_back(rec("reco_computed", "aux", 6000, {{"origin", std::string("x")}, {"auxiliary", true}, {"compute_us", std::int64_t{40}}}));
    records.push_back(rec("ru_state", "v", 7000, {{"role", std::string("merging")}, {"accel", 1.0}, {"plan", true}, {"lane", std::int64_t{2}}}));
    records.push_back(rec("ru_state", "v", 7100, {{"role", std::string("merging")}, {"accel", -3.0}, {"plan", true}, {"lane", std::int64_t{2}}}));
    records.push_back(rec("ru_state", "v", 7200, {{"role", std::string("merging")}, {"accel", 2.5}, {"plan", false}}));
    const auto s = summarize(records);
    CHECK(s.deliveries.size() == 2);
    CHECK(s.incomplete_traces == 1);
    CHECK(s.merges.at("success") == 1);
    CHECK(s.reco_computed == 3);
    CHECK(s.reco_auxiliary == 1);
    CHECK(s.accelerations == std::vector<double>{1.0, -3.0});
    const auto j = nlohmann::json::parse(summary_json(s, R"({"run_id":"x"})"));
    CHECK(j["run"]["run_id"] == "x");
    CHECK(j["delivery_time_ms"]["count"] == 2);
    CHECK(j["delivery_time_ms"]["max"] == 300.0);
    CHECK(j["delivery_time_ms"]["incomplete"] == 1);
    CHECK(j["merges"]["total"] == 2);
    CHECK(j["merging_acceleration"]["share_0_to_2"] == 0.5);
    CHECK(j["wall_clock"].contains("orchestrator_compute_us"));
    for (const auto& [k, v] : j.items()) {
        if (k != "wall_clock") CHECK(v.dump().find("_us") == std::string::npos);
    }
    const auto dir = temp_dir("lanemerge_kpi_report");
    write_report(s, "all", dir);
    for (const char* f : {"delivery_time.csv", "ecdf_distance.csv", "ecdf_accel.csv", "summary.json"}) {
        CHECK(std::filesystem::exists(dir / f));
    }
    CHECK_THROWS_AS(write_report(s, "bogus", dir), std::invalid_argument);
    std::filesystem::remove_all(dir);
}

TEST_CASE("log store validates, spills and reads back") {
    const auto dir = temp_dir("lanemerge_kpi_spill");
    {
        LogStore store(dir / "logs.ndjson");
        CHECK(store.ingest({"c", "e", "id", 5, {{"k", 1.5}, {"s", std::string("q\"uote")}}}, 6));
        CHECK_FALSE(store.ingest({"", "e", "id", 5, {}}, 6));
        V2XEnvelope env;
        env.topic = kTopicLogs;
        env.sender = "x";
        env.payload = LogRecord{"c", "e2", "id", 7, {{"n", std::int64_t{3}}, {"b", false}}};
        CHECK(store.ingest_line(wire::encode_envelope(env), 8));
        CHECK(store.ingest_line(wire::to_json(LogRecord{"c", "e3", "id", 9, {}}).dump(), 10));
        CHECK_FALSE(store.ingest_line("{broken", 11));
        CHECK(store.size() == 3);
        CHECK(store.drops() == 2);
        store.flush();
        const auto snap = store.snapshot();
        const auto back = read_spill(dir / "logs.ndjson");
        REQUIRE(back.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(back[i].record == (*snap)[i].record);
            CHECK(back[i].received_at == (*snap)[i].received_at);
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("log collector ingests lines over TCP and the service ingests the logs topic") {
    LogStore store;
    LogCollector collector(store, net::Endpoint{"127.0.0.1", 0});
    collector.start();
    {
        auto fd = net::connect_tcp(net::Endpoint{"127.0.0.1", collector.port()});
        for (int i = 1; i <= 50; ++i) net::write_all(fd, wire::to_json(LogRecord{"c", "e", "id", i, {}}).dump() + "\n");
    }
    for (int i = 0; i < 200 && store.size() < 50; ++i) std::this_thread::sleep_for(10ms);
    CHECK(store.size() == 50);
    collector.stop();

    KpiService svc(store);
    Outbox out;
    V2XEnvelope e;
    e.topic = kTopicLogs;
    e.payload = LogRecord{"c", "late", "id", 1, {}};
    svc.on_message(e, 2, out);
    CHECK(store.size() == 51);
    CHECK(out.empty());
}
