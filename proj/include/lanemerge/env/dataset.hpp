#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lanemerge/env/merge_env.hpp"

namespace lanemerge::env {

/// How lane changes are recognised in an imported trajectory table.
struct ImportRules {
    int merge_lane_id = 7;
    int target_lane_id = 6;
    int frames_before = 40;   // frames kept before the lane transition
    int frames_after = 29;    // frames kept after it
    double timestep = 0.1;    // seconds per frame
    Millis epoch_ms = 1'600'000'000'000;
    std::optional<double> merge_lane_end_x;  // defaults to the furthest merge-lane x seen
};

struct ImportReport {
    std::vector<MergeInstance> instances;
    std::size_t rows_read = 0;
    std::size_t rows_skipped = 0;
    std::size_t vehicles = 0;
    std::size_t transitions_without_gap = 0;
};

/// Reads a CSV with columns vehicle_id,frame,x,y,speed,accel,heading,length,width,lane.
/// Throws EnvError if the file cannot be read or yields no instance.
ImportReport import_instances(const std::filesystem::path& path, const ImportRules& rules = {});

struct SyntheticOptions {
    std::size_t frames = 70;
    double timestep = 0.1;
    double d_safe = 10.0;
    double lane_width = 3.5;
    Millis epoch_ms = 1'700'000'000'000;
};

/// Deterministic per seed. Role vehicles plus 0-2 unconnected bystanders; the
/// merging vehicle's recorded frames come from the noisy gap-acceptance driver.
std::vector<MergeInstance> generate_synthetic(std::uint64_t seed, std::size_t n, const SyntheticOptions& opts = {});

struct SplitRatios {
    double train = 0.7;
    double test = 0.2;
    double validation = 0.1;
};

struct DatasetSplit {
    std::vector<MergeInstance> train;
    std::vector<MergeInstance> test;
    std::vector<MergeInstance> validation;
};

/// Random disjoint partition; frames inside each instance stay chronological.
/// Throws EnvError unless ratios are non-negative and sum to 1 within 1e-9.
DatasetSplit split_dataset(std::vector<MergeInstance> instances, SplitRatios ratios, std::uint64_t seed);

std::string instance_to_json_line(const MergeInstance& instance);
MergeInstance instance_from_json_line(std::string_view line);
void write_instances(const std::filesystem::path& path, std::span<const MergeInstance> instances);
std::vector<MergeInstance> read_instances(const std::filesystem::path& path);

}  // namespace lanemerge::env
