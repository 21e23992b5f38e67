#include "lanemerge/harness/stack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lanemerge/core/clock.hpp"
#include "lanemerge/fusion/service.hpp"
#include "lanemerge/harness/distributed.hpp"
#include "lanemerge/harness/sim_runtime.hpp"
#include "lanemerge/rl/checkpoint.hpp"

namespace lanemerge::harness {

void ScenarioConfig::validate() const {
    if (!human_baseline && !model_path) throw ConfigError("run-stack needs a model checkpoint unless --human-baseline is set");
    if (zones <= 0) throw ConfigError("zone count must be positive");
    if (distributed && cli_path.empty()) throw ConfigError("distributed mode needs the service executable path");
    if (max_duration_s <= 0) throw ConfigError("max duration must be positive");
    fusion.validate();
    link.validate();
}

gateway::LinkProfile named_link_profile(const std::string& name) {
    if (name == "ideal") return gateway::LinkProfile::ideal();
    if (name == "lte-30ms") {
        gateway::LinkProfile p;
        p.latency_ms = 30.0;
        return p;
    }
    throw ConfigError("unknown link profile " + name);
}

env::LaneGeometry geometry_from_config(const FlatConfig& c, const std::string& prefix) {
    env::LaneGeometry g;
    g.merge_lane_y = c.get_double(prefix + "merge_lane_y", g.merge_lane_y);
    g.target_lane_y = c.get_double(prefix + "target_lane_y", g.target_lane_y);
    g.merge_lane_end_x = c.get_double(prefix + "merge_lane_end_x", g.merge_lane_end_x);
    g.lane_width = c.get_double(prefix + "lane_width", g.lane_width);
    g.merge_lane_id = static_cast<int>(c.get_int(prefix + "merge_lane_id", g.merge_lane_id));
    g.target_lane_id = static_cast<int>(c.get_int(prefix + "target_lane_id", g.target_lane_id));
    if (g.lane_width <= 0.0) throw ConfigError("lane width must be positive");
    if (std::abs(std::abs(g.merge_lane_y - g.target_lane_y) - g.lane_width) > 1e-9) {
        throw ConfigError("merge and target lanes must be adjacent");
    }
    return g;
}

std::string geometry_to_config(const env::LaneGeometry& g) {
    std::ostringstream o;
    o.precision(17);
    o << "merge_lane_y = " << g.merge_lane_y << "\ntarget_lane_y = " << g.target_lane_y
      << "\nmerge_lane_end_x = " << g.merge_lane_end_x << "\nlane_width = " << g.lane_width
      << "\nmerge_lane_id = " << g.merge_lane_id << "\ntarget_lane_id = " << g.target_lane_id << "\n";
    return o.str();
}

ScenarioConfig scenario_from_config(const FlatConfig& c) {
    ScenarioConfig s;
    s.run_id = c.get_string("scenario.run_id", s.run_id);
    s.seed = static_cast<std::uint64_t>(c.get_int("scenario.seed", static_cast<long long>(s.seed)));
    if (const auto p = c.get("scenario.instances")) s.instances_path = *p;
    s.synthetic_seed = static_cast<std::uint64_t>(c.get_int("scenario.synthetic_seed", static_cast<long long>(s.synthetic_seed)));
    s.synthetic_count = static_cast<std::size_t>(c.get_int("scenario.synthetic_count", static_cast<long long>(s.synthetic_count)));
    if (const auto p = c.get("scenario.model")) s.model_path = *p;
    s.human_baseline = c.get_bool("scenario.human_baseline", s.human_baseline);
    s.distributed = c.get_bool("scenario.distributed", s.distributed);
    s.zones = static_cast<int>(c.get_int("scenario.zones", s.zones));
    s.zone_offset_y = c.get_double("scenario.zone_offset_y", s.zone_offset_y);
    s.stagger_zones = c.get_bool("scenario.stagger_zones", s.stagger_zones);
    s.geometry = geometry_from_config(c, "geometry.");
    s.out_dir = c.get_string("scenario.out", s.out_dir.string());
    s.max_duration_s = c.get_double("scenario.max_duration_s", s.max_duration_s);

    s.link = named_link_profile(c.get_string("scenario.link_profile", "ideal"));
    bool any_link = false;
    for (const auto& [k, v] : c.values()) any_link = any_link || k.rfind("link.", 0) == 0;
    if (any_link) {
        FlatConfig merged;
        merged.set("uplink_kbps", std::to_string(s.link.uplink_kbps));
        merged.set("downlink_kbps", std::to_string(s.link.downlink_kbps));
        merged.set("latency_ms", std::to_string(s.link.latency_ms));
        merged.set("jitter_ms", std::to_string(s.link.jitter_ms));
        merged.set("loss", std::to_string(s.link.loss));
        merged.set("seed", std::to_string(s.link.seed));
        for (const auto& [k, v] : c.values()) {
            if (k.rfind("link.", 0) == 0) merged.set(k.substr(5), v);
        }
        s.link = gateway::LinkProfile::from_config(merged);
    }

    auto& f = s.fusion;
    f.window_ms = c.get_int("fusion.window_ms", f.window_ms);
    f.distance_gate = c.get_double("fusion.distance_gate", f.distance_gate);
    f.angle_gate = c.get_double("fusion.angle_gate", f.angle_gate);
    f.increment = c.get_double("fusion.increment", f.increment);
    f.decrement = c.get_double("fusion.decrement", f.decrement);
    f.threshold = c.get_double("fusion.threshold", f.threshold);
    f.history_ttl_ms = c.get_int("fusion.history_ttl_ms", f.history_ttl_ms);
    f.max_lateness_ms = c.get_int("fusion.max_lateness_ms", f.max_lateness_ms);

    auto& o = s.orchestrator;
    const auto cadence = c.get_string("orchestrator.cadence", "deviation");
    if (cadence != "deviation" && cadence != "every_update") throw ConfigError("unknown cadence " + cadence);
    o.cadence = cadence == "deviation" ? orchestrator::Cadence::Deviation : orchestrator::Cadence::EveryUpdate;
    if (c.has("orchestrator.d_safe")) o.d_safe = c.get_double("orchestrator.d_safe", o.d_safe);
    o.deviation_m = c.get_double("orchestrator.deviation_m", o.deviation_m);
    o.deviation_mps = c.get_double("orchestrator.deviation_mps", o.deviation_mps);
    o.aux_decel = c.get_double("orchestrator.aux_decel", o.aux_decel);
    o.aux_duration_s = c.get_double("orchestrator.aux_duration_s", o.aux_duration_s);
    o.retry_limit = static_cast<int>(c.get_int("orchestrator.retry_limit", o.retry_limit));
    o.staleness_ms = c.get_int("orchestrator.staleness_ms", o.staleness_ms);

    auto& w = s.world;
    w.merges = static_cast<std::size_t>(c.get_int("world.merges", static_cast<long long>(w.merges)));
    const auto fb = c.get_string("world.feedback", std::string(to_string(w.feedback)));
    const auto policy = feedback_policy_from_string(fb);
    if (!policy) throw ConfigError("unknown feedback policy " + fb);
    w.feedback = *policy;
    w.camera = c.get_bool("world.camera", w.camera);
    w.camera_sigma = c.get_double("world.camera_sigma", w.camera_sigma);
    w.log_ground_truth = c.get_bool("world.log_ground_truth", w.log_ground_truth);
    return s;
}

std::vector<env::MergeInstance> load_scenario_instances(const ScenarioConfig& s) {
    if (s.instances_path) return env::read_instances(*s.instances_path);
    return env::generate_synthetic(s.synthetic_seed, s.synthetic_count);
}

namespace {

struct Prepared {
    std::vector<env::MergeInstance> instances;
    std::shared_ptr<const rl::QNetwork> policy;
    orchestrator::OrchestratorConfig ocfg;
    WorldConfig wcfg;
};

Prepared prepare(const ScenarioConfig& s) {
    Prepared p;
    p.instances = load_scenario_instances(s);
    p.ocfg = s.orchestrator;
    p.ocfg.seed = s.seed;
    if (s.model_path) {
        p.policy = std::make_shared<const rl::QNetwork>(rl::load_checkpoint(*s.model_path));
        const auto sidecar = s.model_path->string() + ".json";
        if (std::filesystem::exists(sidecar)) {
            std::ifstream in(sidecar);
            std::stringstream text;
            text << in.rdbuf();
            const auto tc = rl::config_from_json(text.str());
            const double d_safe = p.ocfg.d_safe;
            p.ocfg.env = tc.env;
            p.ocfg.norms = tc.norms;
            p.ocfg.reward_mode = tc.reward_mode;
            p.ocfg.d_safe = std::max(d_safe, tc.env.d_safe);
        }
    }
    p.wcfg = s.world;
    p.wcfg.zones = orchestrator::make_zones(s.zones, s.zone_offset_y, s.geometry);
    p.wcfg.env = p.ocfg.env;
    p.wcfg.human_baseline = s.human_baseline;
    p.wcfg.seed = s.seed;
    return p;
}

std::string run_json(const ScenarioConfig& s, const WorldStats& w, std::size_t instances) {
    nlohmann::ordered_json j;
    j["run_id"] = s.run_id;
    j["mode"] = s.distributed ? "distributed" : "in-process";
    j["human_baseline"] = s.human_baseline;
    j["zones"] = s.zones;
    j["instances"] = instances;
    j["seed"] = s.seed;
    j["merges"] = w.merges;
    j["outcomes"] = w.outcomes;
    j["merges_with_recommendation"] = w.merges_with_reco;
    j["deliveries_to_merging"] = w.recos_merging;
    j["deliveries_to_following"] = w.recos_following;
    j["deliveries_to_unconnected"] = w.recos_unconnected;
    j["feedback_sent"] = w.feedback_sent;
    return j.dump();
}

void finish(StackResult& r, const ScenarioConfig& s, const std::vector<kpi::StoredRecord>& records, std::uint64_t drops,
            std::size_t instances) {
    r.kpi = kpi::summarize(records);
    r.kpi.drops = drops;
    const auto run = run_json(s, r.world, instances);
    kpi::write_report(r.kpi, "all", s.out_dir, run);
    r.summary_json = kpi::summary_json(r.kpi, run);
}

StackResult run_in_process(const ScenarioConfig& s) {
    StackResult r;
    Prepared p = prepare(s);
    std::filesystem::create_directories(s.out_dir);
    kpi::LogStore store(s.out_dir / "logs.ndjson");
    SimOptions opts;
    if (!s.link.is_ideal()) opts.vehicle_link = s.link;
    opts.start_ms = 1'700'000'000'000;
    SimRuntime rt(opts, [&](const LogRecord& rec) { store.ingest(rec, rec.t); });

    fusion::FusionService fusion_node(s.fusion);
    rt.add_node(fusion_node);
    std::unique_ptr<orchestrator::Orchestrator> orch;
    if (!s.human_baseline) {
        orch = std::make_unique<orchestrator::Orchestrator>(p.policy, p.ocfg, p.wcfg.zones);
        orch->keep_emitted(s.keep_plans);
        rt.add_node(*orch);
    }
    const std::size_t n_instances = p.instances.size();
    World world(p.wcfg, std::move(p.instances), rt);
    world.start();
    const Millis first = opts.start_ms + world.frame_ms();
    rt.set_frame_driver([&](Millis t) { world.frame(t); }, first, world.frame_ms(), [&] { return !world.finished(); });
    rt.run(opts.start_ms + static_cast<Millis>(s.max_duration_s * 1000.0));
    const bool done = world.finished();
    world.shutdown();
    r.world = world.stats();
    r.open_sessions_after = rt.open_sessions() - (orch ? 2 : 1);
    if (orch) {
        r.rejected_plans = orch->rejected_plans();
        if (s.keep_plans) r.plans = orch->emitted();
    }
    store.flush();
    finish(r, s, *store.snapshot(), store.drops(), n_instances);
    if (!done) {
        r.exit_code = 2;
        r.error = "not every merge resolved before the time limit";
    }
    return r;
}

std::string fmt(double v) {
    std::ostringstream o;
    o << v;
    return o.str();
}

StackResult run_distributed(const ScenarioConfig& s) {
    StackResult r;
    Prepared p = prepare(s);
    std::filesystem::create_directories(s.out_dir);
    const auto& dir = s.out_dir;
    for (const char* f : {"gateway.ready", "kpi.ready", "fusion.ready", "orchestrator.ready", "logs.ndjson"}) {
        std::filesystem::remove(dir / f);
    }
    const std::uint16_t gw_port = free_port();
    const std::uint16_t kpi_port = free_port();
    const std::string gw = "127.0.0.1:" + std::to_string(gw_port);
    const std::string kp = "127.0.0.1:" + std::to_string(kpi_port);

    std::vector<std::unique_ptr<ChildProcess>> children;
    auto spawn = [&](std::vector<std::string> args, const std::string& ready) {
        children.push_back(std::make_unique<ChildProcess>(s.cli_path, std::move(args), dir / (ready + ".log")));
        if (!wait_for_file(dir / (ready + ".ready"), 15000)) {
            throw std::runtime_error("service " + ready + " did not become ready");
        }
    };
    try {
        spawn({"gateway", "--listen", gw, "--uplink-kbps", fmt(s.link.uplink_kbps), "--downlink-kbps",
               fmt(s.link.downlink_kbps), "--latency-ms", fmt(s.link.latency_ms), "--jitter-ms", fmt(s.link.jitter_ms),
               "--loss", fmt(s.link.loss), "--link-seed", std::to_string(s.link.seed), "--stats-out",
               (dir / "gateway_stats.json").string(), "--ready", (dir / "gateway.ready").string()},
              "gateway");
        spawn({"kpi", "serve", "--gateway", gw, "--listen", kp, "--out", dir.string(), "--ready",
               (dir / "kpi.ready").string()},
              "kpi");
        spawn({"fusion", "--gateway", gw, "--window-ms", std::to_string(s.fusion.window_ms), "--max-lateness-ms",
               std::to_string(s.fusion.max_lateness_ms), "--ready", (dir / "fusion.ready").string()},
              "fusion");
        if (!s.human_baseline) {
            std::ofstream(dir / "lane_geometry.cfg") << geometry_to_config(s.geometry);
            spawn({"orchestrator", "--gateway", gw, "--model", s.model_path->string(), "--zones",
                   std::to_string(s.zones), "--zone-offset", fmt(s.zone_offset_y),
                   "--lane-geometry", (dir / "lane_geometry.cfg").string(), "--cadence",
                   s.orchestrator.cadence == orchestrator::Cadence::EveryUpdate ? "every_update" : "deviation",
                   "--d-safe", fmt(p.ocfg.d_safe), "--seed", std::to_string(s.seed), "--ready",
                   (dir / "orchestrator.ready").string()},
                  "orchestrator");
        }
    } catch (const std::exception& e) {
        for (auto& c : children) c->terminate(1000);
        r.exit_code = 3;
        r.error = e.what();
        return r;
    }

    const std::size_t n_instances = p.instances.size();
    bool crashed = false;
    bool done = false;
    {
        SocketTransport transport(net::Endpoint::parse(gw), net::Endpoint::parse(kp));
        World world(p.wcfg, std::move(p.instances), transport);
        world.start();
        const Millis period = world.frame_ms();
        const auto n_zones = static_cast<Millis>(world.zone_count());
        const Millis spread = s.stagger_zones ? period : 0;
        Millis t = (monotonic_ms() / period + 1) * period;
        const Millis deadline = monotonic_ms() + static_cast<Millis>(s.max_duration_s * 1000.0);
        int checks = 0;
        while (!world.finished() && monotonic_ms() < deadline && !stop_requested().load()) {
            // Optionally zones broadcast on staggered phases instead of one burst per frame.
            for (Millis z = 0; z < n_zones; ++z) {
                const Millis slot = t + z * spread / n_zones;
                if (z == 0 || spread > 0) transport.pump(slot);
                world.frame_zone(static_cast<std::size_t>(z), std::max(slot, monotonic_ms()));
            }
            t += period;
            if (++checks % 10 == 0) {
                for (auto& c : children) crashed = crashed || !c->running();
                if (crashed) break;
            }
        }
        transport.pump(monotonic_ms() + 500);  // let in-flight recommendations land
        done = world.finished();
        world.shutdown();
        r.world = world.stats();
        transport.close_all();
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    int worst = 0;
    // Producers first, then the KPI collector, the gateway last.
    for (auto it = children.rbegin(); it != children.rend(); ++it) worst = std::max(worst, (*it)->terminate(10000));
    if (crashed || worst != 0) {
        r.exit_code = 4;
        r.error = "a service exited abnormally";
    }
    if (std::filesystem::exists(dir / "gateway_stats.json")) {
        std::ifstream in(dir / "gateway_stats.json");
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (!j.is_discarded() && j.contains("forwarding_us")) r.forwarding_us = j["forwarding_us"].get<std::vector<std::int64_t>>();
    }
    std::vector<kpi::StoredRecord> records;
    if (std::filesystem::exists(dir / "logs.ndjson")) records = kpi::read_spill(dir / "logs.ndjson");
    finish(r, s, records, 0, n_instances);
    if (r.exit_code == 0 && !done) {
        r.exit_code = 2;
        r.error = "not every merge resolved before the time limit";
    }
    return r;
}

}  // namespace

StackResult run_stack(const ScenarioConfig& scenario) {
    scenario.validate();
    return scenario.distributed ? run_distributed(scenario) : run_in_process(scenario);
}

}  // namespace lanemerge::harness
