#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lanemerge/core/flat_config.hpp"
#include "lanemerge/env/dataset.hpp"
#include "lanemerge/fusion/fusion.hpp"
#include "lanemerge/gateway/link.hpp"
#include "lanemerge/harness/world.hpp"
#include "lanemerge/kpi/kpi.hpp"
#include "lanemerge/orchestrator/orchestrator.hpp"

namespace lanemerge::harness {

struct ScenarioConfig {
    std::string run_id = "run";
    std::uint64_t seed = 1;
    /// NDJSON instances (from gen-data/import-data); synthetic ones otherwise.
    std::optional<std::filesystem::path> instances_path;
    std::uint64_t synthetic_seed = 101;
    std::size_t synthetic_count = 50;
    std::optional<std::filesystem::path> model_path;
    bool human_baseline = false;
    bool distributed = false;
    gateway::LinkProfile link = gateway::LinkProfile::ideal();
    int zones = 1;
    double zone_offset_y = 20.0;
    env::LaneGeometry geometry;  // zone 0; the others are shifted copies
    fusion::FusionConfig fusion;
    orchestrator::OrchestratorConfig orchestrator;
    WorldConfig world;  // zones are filled from `zones`
    std::filesystem::path out_dir = "out/run";
    double max_duration_s = 3600.0;
    /// Distributed mode: spread zone broadcasts over the frame period.
    bool stagger_zones = false;
    /// Executable providing the service subcommands (distributed mode).
    std::filesystem::path cli_path;
    /// Keep every emitted plan in memory (in-process mode, for audits).
    bool keep_plans = false;

    /// Throws ConfigError on inconsistent settings.
    void validate() const;
};

/// Reads the `[scenario]`, `[link]`, `[fusion]`, `[orchestrator]`,
/// `[geometry]` and `[world]` sections of a flat config. Unset keys keep their defaults.
ScenarioConfig scenario_from_config(const FlatConfig& cfg);

/// Reads `merge_lane_y`, `target_lane_y`, `merge_lane_end_x`, `lane_width`,
/// `merge_lane_id`, `target_lane_id` under `prefix`.
env::LaneGeometry geometry_from_config(const FlatConfig& cfg, const std::string& prefix = "");
std::string geometry_to_config(const env::LaneGeometry& g);

/// Named link profiles: "ideal", "lte-30ms" (30 ms one way, default bandwidths).
gateway::LinkProfile named_link_profile(const std::string& name);

std::vector<env::MergeInstance> load_scenario_instances(const ScenarioConfig& s);

struct StackResult {
    int exit_code = 0;
    std::string error;
    WorldStats world;
    kpi::KpiSummary kpi;
    std::string summary_json;  // as written to summary.json
    std::vector<std::int64_t> forwarding_us;   // broker forwarding samples (distributed mode)
    std::vector<orchestrator::Plan> plans;     // emitted plans (keep_plans)
    std::uint64_t rejected_plans = 0;
    std::size_t open_sessions_after = 0;
};

/// Runs the full stack, writes the KPI reports into out_dir and returns the
/// collected results. Exit code 0 iff every merge resolved and no service failed.
StackResult run_stack(const ScenarioConfig& scenario);

}  // namespace lanemerge::harness
