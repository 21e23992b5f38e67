// lanemerge: training, evaluation, stack runs and the individual services.
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "lanemerge/core/clock.hpp"
#include "lanemerge/core/flat_config.hpp"
#include "lanemerge/core/wire.hpp"
#include "lanemerge/env/dataset.hpp"
#include "lanemerge/fusion/service.hpp"
#include "lanemerge/gateway/server.hpp"
#include "lanemerge/harness/distributed.hpp"
#include "lanemerge/harness/stack.hpp"
#include "lanemerge/kpi/collector.hpp"
#include "lanemerge/kpi/kpi.hpp"
#include "lanemerge/orchestrator/orchestrator.hpp"
#include "lanemerge/rl/agent.hpp"
#include "lanemerge/rl/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace lanemerge;
using nlohmann::ordered_json;

namespace {

/// Shared by every subcommand: flat config file, key=value overrides, seed.
struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "flat key = value config file")->check(CLI::ExistingFile);
        app->add_option("--set", overrides, "override a config key (section.key=value)");
        app->add_option("--seed", seed, "random seed");
    }
    [[nodiscard]] FlatConfig load() const {
        FlatConfig cfg = config.empty() ? FlatConfig{} : FlatConfig::load(config);
        for (const auto& o : overrides) cfg.set_override(o);
        return cfg;
    }
};

void put_if(FlatConfig& cfg, const std::string& key, const std::optional<std::string>& v) {
    if (v) cfg.set(key, *v);
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

env::EnvConfig env_from_config(const FlatConfig& c, env::EnvConfig e = {}) {
    e.timestep = c.get_double("env.timestep", e.timestep);
    e.accel_step = c.get_double("env.accel_step", e.accel_step);
    e.accel_min = c.get_double("env.accel_min", e.accel_min);
    e.accel_max = c.get_double("env.accel_max", e.accel_max);
    e.heading_step = c.get_double("env.heading_step", e.heading_step);
    e.heading_max = c.get_double("env.heading_max", e.heading_max);
    e.d_safe = c.get_double("env.d_safe", e.d_safe);
    e.max_steps = static_cast<int>(c.get_int("env.max_steps", e.max_steps));
    return e;
}

rl::Variant variant_from(const std::string& s) {
    if (s == "dqn") return rl::Variant::Plain;
    if (s == "dueling") return rl::Variant::Dueling;
    throw ConfigError("unknown variant " + s + " (dqn or dueling)");
}

rl::RewardMode reward_from(const std::string& s) {
    if (s == "positive") return rl::RewardMode::Positive;
    if (s == "negative") return rl::RewardMode::Negative;
    throw ConfigError("unknown reward mode " + s + " (positive or negative)");
}

rl::TrainConfig train_config_from(const FlatConfig& c) {
    rl::TrainConfig t;
    t.variant = variant_from(c.get_string("train.variant", "dueling"));
    t.reward_mode = reward_from(c.get_string("train.reward", "positive"));
    if (const auto h = c.get("train.hidden")) t.hidden = parse_int_list(*h);
    t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
    t.momentum = c.get_double("train.momentum", t.momentum);
    t.gamma = c.get_double("train.gamma", t.gamma);
    t.grad_clip = c.get_double("train.grad_clip", t.grad_clip);
    t.replay_capacity = static_cast<std::size_t>(c.get_int("train.replay_capacity", static_cast<long long>(t.replay_capacity)));
    t.batch_size = static_cast<std::size_t>(c.get_int("train.batch_size", static_cast<long long>(t.batch_size)));
    t.target_sync = static_cast<std::size_t>(c.get_int("train.target_sync", static_cast<long long>(t.target_sync)));
    t.train_every = static_cast<std::size_t>(c.get_int("train.train_every", static_cast<long long>(t.train_every)));
    t.learning_starts = static_cast<std::size_t>(c.get_int("train.learning_starts", static_cast<long long>(t.learning_starts)));
    t.epsilon_start = c.get_double("train.epsilon_start", t.epsilon_start);
    t.epsilon_end = c.get_double("train.epsilon_end", t.epsilon_end);
    t.epsilon_decay_steps =
        static_cast<std::size_t>(c.get_int("train.epsilon_decay_steps", static_cast<long long>(t.epsilon_decay_steps)));
    t.total_env_steps = static_cast<std::size_t>(c.get_int("train.steps", static_cast<long long>(t.total_env_steps)));
    t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", static_cast<long long>(t.seed)));
    t.arrival_weight = c.get_double("train.arrival_weight", t.arrival_weight);
    const auto size = c.get_string("train.size_encoding", "area");
    if (size != "area" && size != "dimensions") throw ConfigError("size_encoding must be area or dimensions");
    t.norms.size = size == "area" ? rl::SizeEncoding::Area : rl::SizeEncoding::Dimensions;
    t.env = env_from_config(c, t.env);
    t.validate();
    return t;
}

/// Instance pool from `data.instances` or the synthetic generator.
std::vector<env::MergeInstance> load_pool(const FlatConfig& c) {
    if (const auto p = c.get("data.instances")) return env::read_instances(*p);
    return env::generate_synthetic(static_cast<std::uint64_t>(c.get_int("data.synthetic_seed", 11)),
                                   static_cast<std::size_t>(c.get_int("data.synthetic_count", 2000)));
}

env::SplitRatios ratios_from(const FlatConfig& c) {
    env::SplitRatios r;
    r.train = c.get_double("data.train", r.train);
    r.test = c.get_double("data.test", r.test);
    r.validation = c.get_double("data.validation", r.validation);
    return r;
}

ordered_json outcomes_json(const rl::OutcomeCounts& o) {
    return {{"success", o.success}, {"collision", o.collision}, {"lane_end", o.lane_end}, {"timeout", o.timeout}};
}

ordered_json eval_json(const rl::EvalReport& r) {
    ordered_json j;
    j["label"] = r.label;
    j["instances"] = r.instances;
    j["success_rate"] = r.success_rate;
    j["mean_reward"] = r.mean_reward;
    j["outcomes"] = outcomes_json(r.outcomes);
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

template <typename T>
std::string curve_csv(const char* x, const char* y, const std::vector<T>& v) {
    std::ostringstream o;
    o.precision(10);
    o << x << ',' << y << '\n';
    for (std::size_t i = 0; i < v.size(); ++i) o << i << ',' << v[i] << '\n';
    return o.str();
}

// train ---------------------------------------------------------------------

ordered_json train_one(const rl::TrainConfig& config, const env::DatasetSplit& split, const fs::path& out) {
    fs::create_directories(out);
    std::cerr << "training " << rl::to_string(config.variant) << " (" << rl::to_string(config.reward_mode)
              << " rewards, seed " << config.seed << ", " << config.total_env_steps << " steps) on "
              << split.train.size() << " instances\n";
    const auto t0 = monotonic_ms();
    rl::TrainResult r = rl::train(split.train, config);
    const auto t1 = monotonic_ms();
    rl::save_checkpoint(out / "model.lmqn", r.net, config);
    write_text(out / "reward_histogram.csv", r.histogram.to_csv());
    write_text(out / "loss_curve.csv", curve_csv("k_thousand_steps", "mean_loss", r.loss_curve));
    write_text(out / "success_curve.csv", curve_csv("hundred_episodes", "success_rate", r.success_curve));

    ordered_json j;
    j["variant"] = std::string(rl::to_string(config.variant));
    j["reward"] = std::string(rl::to_string(config.reward_mode));
    j["seed"] = config.seed;
    j["checkpoint"] = (out / "model.lmqn").string();
    j["episodes"] = r.episodes;
    j["env_steps"] = r.env_steps;
    j["gradient_steps"] = r.gradient_steps;
    j["training_outcomes"] = outcomes_json(r.outcomes);
    j["terminal_success_rewards"] = r.histogram.terminal_success();
    j["evaluation"] = ordered_json::array();
    if (!split.test.empty()) j["evaluation"].push_back(eval_json(rl::evaluate(r.net, split.test, config, "test")));
    if (!split.validation.empty()) {
        j["evaluation"].push_back(eval_json(rl::evaluate(r.net, split.validation, config, "validation")));
    }
    j["wall_clock"] = {{"train_ms", t1 - t0}};
    write_text(out / "train_summary.json", j.dump(2) + "\n");
    return j;
}

int cmd_train(const Common& common, std::optional<std::string> variant, std::optional<std::string> reward,
              std::optional<long long> steps, std::optional<std::string> instances, const std::string& out_dir) {
    FlatConfig cfg = common.load();
    put_if(cfg, "train.reward", reward);
    if (steps) cfg.set("train.steps", std::to_string(*steps));
    put_if(cfg, "data.instances", instances);
    if (common.seed) cfg.set("train.seed", std::to_string(*common.seed));
    const std::string which = variant.value_or(cfg.get_string("train.variant", "dueling"));

    auto pool = load_pool(cfg);
    const auto split = env::split_dataset(std::move(pool), ratios_from(cfg),
                                          static_cast<std::uint64_t>(cfg.get_int("data.split_seed", 3)));
    const fs::path out = out_dir;
    fs::create_directories(out);
    env::write_instances(out / "test.jsonl", split.test);
    env::write_instances(out / "validation.jsonl", split.validation);

    std::vector<std::string> variants = which == "both" ? std::vector<std::string>{"dqn", "dueling"}
                                                        : std::vector<std::string>{which};
    ordered_json all = ordered_json::array();
    for (const auto& v : variants) {
        cfg.set("train.variant", v);
        const auto tc = train_config_from(cfg);
        try {
            all.push_back(train_one(tc, split, variants.size() > 1 ? out / v : out));
        } catch (const rl::TrainingDiverged& e) {
            std::cerr << "training diverged: " << e.what() << '\n';
            return 3;
        }
    }
    if (variants.size() > 1) {
        ordered_json cmp;
        cmp["budget_env_steps"] = train_config_from(cfg).total_env_steps;
        cmp["runs"] = all;
        write_text(out / "comparison.json", cmp.dump(2) + "\n");
    }
    std::cout << (all.size() == 1 ? all[0] : all).dump(2) << '\n';
    return 0;
}

// evaluate ------------------------------------------------------------------

int cmd_evaluate(const Common& common, const std::string& model, std::optional<std::string> variant,
                 const std::vector<std::string>& sets, const std::string& out) {
    FlatConfig cfg = common.load();
    std::optional<rl::Variant> expected;
    if (variant) expected = variant_from(*variant);
    const rl::QNetwork net = rl::load_checkpoint(model, expected);
    rl::TrainConfig tc;
    std::ifstream side(model + ".json");
    if (side) {
        std::stringstream text;
        text << side.rdbuf();
        tc = rl::config_from_json(text.str());
    }
    tc.env = env_from_config(cfg, tc.env);

    ordered_json reports = ordered_json::array();
    auto run = [&](const std::vector<env::MergeInstance>& inst, const std::string& label) {
        reports.push_back(eval_json(rl::evaluate(net, inst, tc, label)));
    };
    if (sets.empty()) {
        auto pool = load_pool(cfg);
        const auto split = env::split_dataset(std::move(pool), ratios_from(cfg),
                                              static_cast<std::uint64_t>(cfg.get_int("data.split_seed", 3)));
        run(split.train, "train");
        run(split.test, "test");
        run(split.validation, "validation");
    }
    for (const auto& s : sets) {
        // LABEL=path or a bare path labelled by its stem
        const auto eq = s.find('=');
        const std::string label = eq == std::string::npos ? fs::path(s).stem().string() : s.substr(0, eq);
        const std::string path = eq == std::string::npos ? s : s.substr(eq + 1);
        run(env::read_instances(path), label);
    }
    ordered_json j;
    j["checkpoint"] = model;
    j["variant"] = std::string(rl::to_string(net.variant()));
    j["reports"] = reports;
    if (!out.empty()) write_text(out, j.dump(2) + "\n");
    std::cout << j.dump(2) << '\n';
    return 0;
}

// run-stack -----------------------------------------------------------------

struct StackFlags {
    std::optional<std::string> model, instances, link_profile, cadence, feedback, out, run_id;
    std::optional<int> zones;
    std::optional<long long> synthetic_count, merges;
    std::optional<double> max_duration, d_safe;
    bool human_baseline = false;
    bool distributed = false;
};

int cmd_run_stack(const Common& common, const StackFlags& f, const std::string& self) {
    FlatConfig cfg = common.load();
    put_if(cfg, "scenario.model", f.model);
    put_if(cfg, "scenario.instances", f.instances);
    put_if(cfg, "scenario.out", f.out);
    put_if(cfg, "scenario.run_id", f.run_id);
    put_if(cfg, "orchestrator.cadence", f.cadence);
    put_if(cfg, "world.feedback", f.feedback);
    if (f.zones) cfg.set("scenario.zones", std::to_string(*f.zones));
    if (f.synthetic_count) cfg.set("scenario.synthetic_count", std::to_string(*f.synthetic_count));
    if (f.merges) cfg.set("world.merges", std::to_string(*f.merges));
    if (f.max_duration) cfg.set("scenario.max_duration_s", std::to_string(*f.max_duration));
    if (f.d_safe) cfg.set("orchestrator.d_safe", std::to_string(*f.d_safe));
    if (f.human_baseline) cfg.set("scenario.human_baseline", "true");
    if (f.distributed) cfg.set("scenario.distributed", "true");
    if (common.seed) cfg.set("scenario.seed", std::to_string(*common.seed));
    if (f.link_profile) {
        if (fs::exists(*f.link_profile)) {
            const auto file = FlatConfig::load(*f.link_profile);
            for (const auto& [k, v] : file.values()) cfg.set("link." + k, v);
        } else {
            cfg.set("scenario.link_profile", *f.link_profile);
        }
    }
    harness::ScenarioConfig s = harness::scenario_from_config(cfg);
    s.cli_path = self;
    harness::install_stop_handlers();
    const auto r = harness::run_stack(s);
    std::cout << r.summary_json << '\n';
    if (r.exit_code != 0) std::cerr << "run-stack: " << r.error << '\n';
    return r.exit_code;
}

// report --------------------------------------------------------------------

int cmd_report(const std::string& logs, const std::string& metric, const std::string& out) {
    const auto ok = std::find(std::begin(kpi::kMetricNames), std::end(kpi::kMetricNames), metric) !=
                    std::end(kpi::kMetricNames);
    if (!ok && metric != "all") throw ConfigError("unknown metric " + metric);
    if (!fs::exists(logs)) throw ConfigError("no log file at " + logs);
    const auto records = kpi::read_spill(logs);
    const auto summary = kpi::summarize(records);
    fs::create_directories(out);
    kpi::write_report(summary, metric, out);
    std::cerr << "wrote " << metric << " report for " << records.size() << " records to " << out << '\n';
    return 0;
}

int cmd_compare(const std::vector<std::string>& summaries, const std::string& out) {
    std::ostringstream csv;
    csv << "run,variant,reward,seed,terminal_success_rewards,episodes,test_success_rate\n";
    for (const auto& path : summaries) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read " + path);
        const auto j = nlohmann::json::parse(in);
        const auto runs = j.is_array() ? j : (j.contains("runs") ? j["runs"] : nlohmann::json::array({j}));
        for (const auto& r : runs) {
            double test_rate = std::nan("");
            for (const auto& e : r.value("evaluation", nlohmann::json::array())) {
                if (e.value("label", "") == "test") test_rate = e.value("success_rate", test_rate);
            }
            csv << path << ',' << r.value("variant", "") << ',' << r.value("reward", "") << ','
                << r.value("seed", 0ULL) << ',' << r.value("terminal_success_rewards", 0ULL) << ','
                << r.value("episodes", 0ULL) << ',' << test_rate << '\n';
        }
    }
    fs::create_directories(out);
    write_text(fs::path(out) / "comparison.csv", csv.str());
    std::cout << csv.str();
    return 0;
}

// data ----------------------------------------------------------------------

int cmd_gen_data(const Common& common, std::size_t count, const std::string& out, const std::string& split_dir) {
    const auto seed = common.seed.value_or(11);
    auto inst = env::generate_synthetic(seed, count);
    if (!out.empty()) env::write_instances(out, inst);
    if (!split_dir.empty()) {
        const FlatConfig cfg = common.load();
        const auto split = env::split_dataset(inst, ratios_from(cfg), static_cast<std::uint64_t>(cfg.get_int("data.split_seed", 3)));
        fs::create_directories(split_dir);
        env::write_instances(fs::path(split_dir) / "train.jsonl", split.train);
        env::write_instances(fs::path(split_dir) / "test.jsonl", split.test);
        env::write_instances(fs::path(split_dir) / "validation.jsonl", split.validation);
    }
    std::cerr << "generated " << inst.size() << " instances (seed " << seed << ")\n";
    return 0;
}

int cmd_import(const std::string& csv, const std::string& out, const env::ImportRules& rules) {
    const auto rep = env::import_instances(csv, rules);
    env::write_instances(out, rep.instances);
    ordered_json j;
    j["rows_read"] = rep.rows_read;
    j["rows_skipped"] = rep.rows_skipped;
    j["vehicles"] = rep.vehicles;
    j["instances"] = rep.instances.size();
    j["transitions_without_gap"] = rep.transitions_without_gap;
    std::cout << j.dump(2) << '\n';
    return 0;
}

// services ------------------------------------------------------------------

void touch(const std::string& path) {
    if (!path.empty()) std::ofstream(path) << "ready\n";
}

void wait_for_stop() {
    while (!harness::stop_requested().load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

double percentile_us(std::vector<std::int64_t> v, double q) {
    if (v.empty()) return 0.0;
    std::vector<double> d(v.begin(), v.end());
    return kpi::percentile(d, q);
}

struct GatewayFlags {
    std::string listen;
    std::optional<int> port;
    std::string link_profile_file, log_endpoint, stats_out, ready;
    std::optional<double> uplink, downlink, latency, jitter, loss;
    std::optional<std::uint64_t> link_seed;
    std::size_t high_water = 1024;
};

int cmd_gateway(const Common& common, const GatewayFlags& f) {
    const FlatConfig cfg = common.load();
    gateway::ServerOptions opts;
    opts.listen = net::Endpoint::parse(f.listen.empty() ? cfg.get_string("gateway.listen", "127.0.0.1:5700") : f.listen);
    if (f.port) opts.listen.port = static_cast<std::uint16_t>(*f.port);
    opts.broker.high_water = f.high_water;

    FlatConfig link;
    if (!f.link_profile_file.empty()) link = FlatConfig::load(f.link_profile_file);
    for (const auto& [k, v] : cfg.values()) {
        if (k.rfind("link.", 0) == 0) link.set(k.substr(5), v);
    }
    auto put = [&](const char* k, const std::optional<double>& v) {
        if (v) link.set(k, std::to_string(*v));
    };
    put("uplink_kbps", f.uplink);
    put("downlink_kbps", f.downlink);
    put("latency_ms", f.latency);
    put("jitter_ms", f.jitter);
    put("loss", f.loss);
    if (f.link_seed) link.set("seed", std::to_string(*f.link_seed));
    else if (common.seed) link.set("seed", std::to_string(*common.seed));
    if (!link.values().empty()) {
        auto profile = gateway::LinkProfile::from_config(link);
        profile.validate();
        if (!profile.is_ideal()) opts.vehicle_link = profile;
    }

    harness::install_stop_handlers();
    gateway::GatewayServer server(opts);
    server.start();
    std::cerr << "gateway listening on " << opts.listen.host << ':' << server.port() << '\n';

    // Optional direct log line to a KPI collector: one gateway_stats record per second.
    net::Fd log_fd;
    if (!f.log_endpoint.empty()) {
        try {
            log_fd = net::connect_tcp(net::Endpoint::parse(f.log_endpoint));
        } catch (const net::SocketError& e) {
            std::cerr << "gateway: log endpoint unavailable: " << e.what() << '\n';
        }
    }
    touch(f.ready);
    std::uint64_t seq = 0;
    Millis next_stats = monotonic_ms() + 1000;
    while (!harness::stop_requested().load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        if (log_fd.valid() && monotonic_ms() >= next_stats) {
            next_stats += 1000;
            const auto st = server.stats();
            LogRecord rec{"gateway", "gateway_stats", "gateway", monotonic_ms(), {}};
            rec.attributes["connections"] = static_cast<std::int64_t>(st.connections);
            rec.attributes["live"] = static_cast<std::int64_t>(server.live_connections());
            rec.attributes["malformed"] = static_cast<std::int64_t>(st.malformed);
            try {
                net::write_all(log_fd, wire::encode_envelope(V2XEnvelope{kTopicLogs, "gateway", ++seq, rec.t, rec}));
            } catch (const net::SocketError&) {
                log_fd.reset();
            }
        }
    }
    const auto samples = server.forwarding_samples();
    const auto st = server.stats();
    server.stop();
    if (!f.stats_out.empty()) {
        ordered_json j;
        j["connections"] = st.connections;
        j["malformed"] = st.malformed;
        j["rejected_handshakes"] = st.rejected_handshakes;
        j["link_lost"] = st.link_lost;
        j["forwarding_p50_us"] = percentile_us(samples, 0.5);
        j["forwarding_p99_us"] = percentile_us(samples, 0.99);
        j["forwarding_us"] = samples;
        write_text(f.stats_out, j.dump() + "\n");
    }
    return 0;
}

int cmd_fusion(const Common& common, const std::string& gw, std::optional<long long> window,
               std::optional<long long> lateness, const std::string& ready) {
    FlatConfig cfg = common.load();
    if (window) cfg.set("fusion.window_ms", std::to_string(*window));
    if (lateness) cfg.set("fusion.max_lateness_ms", std::to_string(*lateness));
    const auto s = harness::scenario_from_config(cfg);
    harness::install_stop_handlers();
    fusion::FusionService node(s.fusion);
    harness::run_service(node, net::Endpoint::parse(gw), harness::stop_requested(), ready);
    return 0;
}

struct OrchestratorFlags {
    std::string gateway, model, lane_geometry, ready;
    std::optional<std::string> cadence;
    std::optional<int> zones;
    std::optional<double> zone_offset, d_safe;
};

int cmd_orchestrator(const Common& common, const OrchestratorFlags& f) {
    FlatConfig cfg = common.load();
    put_if(cfg, "orchestrator.cadence", f.cadence);
    if (f.d_safe) cfg.set("orchestrator.d_safe", std::to_string(*f.d_safe));
    if (f.zones) cfg.set("scenario.zones", std::to_string(*f.zones));
    if (f.zone_offset) cfg.set("scenario.zone_offset_y", std::to_string(*f.zone_offset));
    if (!f.lane_geometry.empty()) {
        const auto file = FlatConfig::load(f.lane_geometry);
        for (const auto& [k, v] : file.values()) cfg.set("geometry." + k, v);
    }
    auto s = harness::scenario_from_config(cfg);
    auto policy = std::make_shared<const rl::QNetwork>(rl::load_checkpoint(f.model));
    auto oc = s.orchestrator;
    oc.seed = common.seed.value_or(s.seed);
    std::ifstream side(f.model + ".json");
    if (side) {
        std::stringstream text;
        text << side.rdbuf();
        const auto tc = rl::config_from_json(text.str());
        oc.env = tc.env;
        oc.norms = tc.norms;
        oc.reward_mode = tc.reward_mode;
        if (!f.d_safe && !cfg.has("orchestrator.d_safe")) oc.d_safe = std::max(oc.d_safe, tc.env.d_safe);
    }
    harness::install_stop_handlers();
    orchestrator::Orchestrator node(policy, oc, orchestrator::make_zones(s.zones, s.zone_offset_y, s.geometry));
    harness::run_service(node, net::Endpoint::parse(f.gateway), harness::stop_requested(), f.ready);
    return 0;
}

int cmd_kpi_serve(const Common& common, const std::string& gw, const std::string& listen, const std::string& out,
                  const std::string& ready) {
    (void)common;
    fs::create_directories(out);
    kpi::LogStore store(fs::path(out) / "logs.ndjson");
    kpi::LogCollector collector(store, net::Endpoint::parse(listen));
    collector.start();
    std::cerr << "kpi collector on port " << collector.port() << '\n';
    harness::install_stop_handlers();
    if (!gw.empty()) {
        kpi::KpiService node(store);
        harness::run_service(node, net::Endpoint::parse(gw), harness::stop_requested(), ready);
    } else {
        touch(ready);
        wait_for_stop();
    }
    collector.stop();
    store.flush();
    const auto snap = store.snapshot();
    auto summary = kpi::summarize(*snap);
    summary.drops = store.drops();
    kpi::write_report(summary, "all", out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lane-merge coordination: RL training, V2X services and KPI reports"};
    app.require_subcommand(1);
    std::error_code ec;
    const auto self = fs::read_symlink("/proc/self/exe", ec);
    const std::string exe = ec ? fs::absolute(argv[0]).string() : self.string();

    int rc = 0;

    // train
    Common train_c;
    std::optional<std::string> t_variant, t_reward, t_instances;
    std::optional<long long> t_steps;
    std::string t_out = "out/train";
    auto* train = app.add_subcommand("train", "train a DQN or Dueling-DQN merge policy");
    train_c.attach(train);
    train->add_option("--variant", t_variant, "dqn, dueling or both");
    train->add_option("--reward", t_reward, "positive or negative");
    train->add_option("--steps", t_steps, "environment step budget");
    train->add_option("--instances", t_instances, "NDJSON instance pool (synthetic otherwise)");
    train->add_option("--out", t_out, "output directory");
    train->callback([&] { rc = cmd_train(train_c, t_variant, t_reward, t_steps, t_instances, t_out); });

    // evaluate
    Common eval_c;
    std::string e_model, e_out;
    std::optional<std::string> e_variant;
    std::vector<std::string> e_sets;
    auto* evaluate = app.add_subcommand("evaluate", "greedy evaluation of a checkpoint");
    eval_c.attach(evaluate);
    evaluate->add_option("--model", e_model, "checkpoint")->required();
    evaluate->add_option("--variant", e_variant, "expected variant (dqn or dueling)");
    evaluate->add_option("--instances", e_sets, "[label=]instances.jsonl, repeatable");
    evaluate->add_option("--out", e_out, "write the report here too");
    evaluate->callback([&] { rc = cmd_evaluate(eval_c, e_model, e_variant, e_sets, e_out); });

    // run-stack
    Common stack_c;
    StackFlags sf;
    auto* stack = app.add_subcommand("run-stack", "run gateway, fusion, orchestrator, KPI and the simulated road");
    stack_c.attach(stack);
    stack->add_option("--model", sf.model, "policy checkpoint");
    stack->add_option("--instances", sf.instances, "NDJSON merge instances");
    stack->add_option("--synthetic-count", sf.synthetic_count, "synthetic instances when no file is given");
    stack->add_option("--link-profile", sf.link_profile, "ideal, lte-30ms or a link config file");
    stack->add_option("--zones", sf.zones, "parallel coordination zones");
    stack->add_option("--merges", sf.merges, "merges to play");
    stack->add_option("--cadence", sf.cadence, "deviation or every_update");
    stack->add_option("--feedback", sf.feedback, "always-accept, reject-first or scripted-aborts");
    stack->add_option("--d-safe", sf.d_safe, "safety distance in metres");
    stack->add_option("--max-duration", sf.max_duration, "time limit in seconds");
    stack->add_option("--out", sf.out, "output directory");
    stack->add_option("--run-id", sf.run_id, "label stored in summary.json");
    stack->add_flag("--human-baseline", sf.human_baseline, "replay recorded merges without the orchestrator");
    stack->add_flag("--distributed", sf.distributed, "one OS process per service over loopback TCP");
    stack->callback([&] { rc = cmd_run_stack(stack_c, sf, exe); });

    // report
    Common rep_c;
    std::string r_logs, r_metric = "all", r_out = "out/report";
    std::vector<std::string> r_compare;
    auto* report = app.add_subcommand("report", "KPI reports from a log spill, or a training comparison");
    rep_c.attach(report);
    report->add_option("--logs", r_logs, "logs.ndjson from a stack run");
    report->add_option("--metric", r_metric, "delivery_time, ecdf_distance, ecdf_accel, summary or all");
    report->add_option("--compare", r_compare, "train_summary.json / comparison.json files");
    report->add_option("--out", r_out, "output directory");
    report->callback([&] {
        if (!r_compare.empty()) rc = cmd_compare(r_compare, r_out);
        else if (!r_logs.empty()) rc = cmd_report(r_logs, r_metric, r_out);
        else throw CLI::ValidationError("report", "--logs or --compare is required");
    });

    // gen-data
    Common gen_c;
    std::size_t g_count = 100;
    std::string g_out, g_split;
    auto* gen = app.add_subcommand("gen-data", "synthetic merge instances");
    gen_c.attach(gen);
    gen->add_option("--count", g_count, "instances");
    gen->add_option("--out", g_out, "NDJSON output");
    gen->add_option("--split-dir", g_split, "also write train/test/validation files here");
    gen->callback([&] {
        if (g_out.empty() && g_split.empty()) throw CLI::ValidationError("gen-data", "--out or --split-dir is required");
        rc = cmd_gen_data(gen_c, g_count, g_out, g_split);
    });

    // import-data
    Common imp_c;
    std::string i_csv, i_out;
    env::ImportRules rules;
    std::optional<double> i_lane_end;
    auto* imp = app.add_subcommand("import-data", "extract merge instances from a trajectory CSV");
    imp_c.attach(imp);
    imp->add_option("--csv", i_csv, "vehicle_id,frame,x,y,speed,accel,heading,length,width,lane")->required()->check(CLI::ExistingFile);
    imp->add_option("--out", i_out, "NDJSON output")->required();
    imp->add_option("--merge-lane", rules.merge_lane_id, "lane id of the on-ramp");
    imp->add_option("--target-lane", rules.target_lane_id, "lane id merged into");
    imp->add_option("--frames-before", rules.frames_before, "frames kept before the lane change");
    imp->add_option("--frames-after", rules.frames_after, "frames kept after it");
    imp->add_option("--timestep", rules.timestep, "seconds per frame");
    imp->add_option("--lane-end-x", i_lane_end, "x where the on-ramp ends");
    imp->callback([&] {
        rules.merge_lane_end_x = i_lane_end;
        rc = cmd_import(i_csv, i_out, rules);
    });

    // gateway
    Common gw_c;
    GatewayFlags gf;
    auto* gw = app.add_subcommand("gateway", "V2X message broker over TCP");
    gw_c.attach(gw);
    gw->add_option("--listen", gf.listen, "host:port");
    gw->add_option("--port", gf.port, "listening port (default 5700)");
    gw->add_option("--link-profile", gf.link_profile_file, "link config file")->check(CLI::ExistingFile);
    gw->add_option("--log-endpoint", gf.log_endpoint, "KPI collector host:port");
    gw->add_option("--uplink-kbps", gf.uplink);
    gw->add_option("--downlink-kbps", gf.downlink);
    gw->add_option("--latency-ms", gf.latency);
    gw->add_option("--jitter-ms", gf.jitter);
    gw->add_option("--loss", gf.loss);
    gw->add_option("--link-seed", gf.link_seed);
    gw->add_option("--high-water", gf.high_water, "per-session queue limit");
    gw->add_option("--stats-out", gf.stats_out, "write forwarding statistics here on exit");
    gw->add_option("--ready", gf.ready, "file created once listening");
    gw->callback([&] { rc = cmd_gateway(gw_c, gf); });

    // fusion
    Common fu_c;
    std::string fu_gw = "127.0.0.1:5700", fu_ready;
    std::optional<long long> fu_window, fu_late;
    auto* fu = app.add_subcommand("fusion", "camera and vehicle RUD fusion service");
    fu_c.attach(fu);
    fu->add_option("--gateway", fu_gw, "gateway host:port");
    fu->add_option("--window-ms", fu_window, "synchronisation window");
    fu->add_option("--max-lateness-ms", fu_late, "how late a RUD may arrive for its window");
    fu->add_option("--ready", fu_ready, "file created once subscribed");
    fu->callback([&] { rc = cmd_fusion(fu_c, fu_gw, fu_window, fu_late, fu_ready); });

    // orchestrator
    Common or_c;
    OrchestratorFlags of;
    of.gateway = "127.0.0.1:5700";
    auto* orch = app.add_subcommand("orchestrator", "traffic orchestrator service");
    or_c.attach(orch);
    orch->add_option("--gateway", of.gateway, "gateway host:port");
    orch->add_option("--model", of.model, "policy checkpoint")->required()->check(CLI::ExistingFile);
    orch->add_option("--lane-geometry", of.lane_geometry, "lane geometry config")->check(CLI::ExistingFile);
    orch->add_option("--d-safe", of.d_safe, "safety distance in metres");
    orch->add_option("--zones", of.zones, "coordination zones");
    orch->add_option("--zone-offset", of.zone_offset, "lateral offset between zones");
    orch->add_option("--cadence", of.cadence, "deviation or every_update");
    orch->add_option("--ready", of.ready, "file created once subscribed");
    orch->callback([&] { rc = cmd_orchestrator(or_c, of); });

    // kpi serve / kpi report
    auto* kpi_cmd = app.add_subcommand("kpi", "KPI collection and reports");
    kpi_cmd->require_subcommand(1);
    Common ks_c;
    std::string ks_gw, ks_listen = "127.0.0.1:5701", ks_out = "out/kpi", ks_ready;
    auto* serve = kpi_cmd->add_subcommand("serve", "collect logs from the gateway and a direct TCP port");
    ks_c.attach(serve);
    serve->add_option("--gateway", ks_gw, "gateway host:port (optional)");
    serve->add_option("--listen", ks_listen, "direct log port");
    serve->add_option("--out", ks_out, "spill and report directory");
    serve->add_option("--ready", ks_ready, "file created once listening");
    serve->callback([&] { rc = cmd_kpi_serve(ks_c, ks_gw, ks_listen, ks_out, ks_ready); });
    Common kr_c;
    std::string kr_logs, kr_metric = "all", kr_out = "out/kpi";
    auto* kreport = kpi_cmd->add_subcommand("report", "write one KPI report");
    kr_c.attach(kreport);
    kreport->add_option("--logs", kr_logs, "log spill")->required();
    kreport->add_option("--metric", kr_metric, "delivery_time, ecdf_distance, ecdf_accel, summary or all");
    kreport->add_option("--out", kr_out, "output directory");
    kreport->callback([&] { rc = cmd_report(kr_logs, kr_metric, kr_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const rl::CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return rc;
}
