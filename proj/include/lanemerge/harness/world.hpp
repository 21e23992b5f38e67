#pragma once

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lanemerge/env/merge_env.hpp"
#include "lanemerge/harness/transport.hpp"
#include "lanemerge/orchestrator/orchestrator.hpp"

namespace lanemerge::harness {

enum class FeedbackPolicy { AlwaysAccept, RejectFirst, ScriptedAborts };
std::optional<FeedbackPolicy> feedback_policy_from_string(std::string_view s);
std::string_view to_string(FeedbackPolicy p);

struct WorldConfig {
    std::vector<orchestrator::CoordinationZone> zones;
    env::EnvConfig env;
    Millis frame_ms = 100;
    bool camera = true;
    double camera_sigma = 0.5;        // metres, per axis
    double camera_speed_sigma = 0.3;
    double camera_accel_sigma = 0.8;
    double camera_heading_sigma = 0.02;
    /// Merging vehicles replay their recorded (human-driver) frames and ignore recommendations.
    bool human_baseline = false;
    FeedbackPolicy feedback = FeedbackPolicy::AlwaysAccept;
    std::vector<int> scripted_aborts{2};  // 1-based per-vehicle recommendation indices to abort
    /// Total merges to run; 0 runs every instance once. Instances are reused cyclically.
    std::size_t merges = 0;
    bool log_ground_truth = true;
    /// Listen on the recommendation topics of unconnected vehicles (must stay silent).
    bool monitor_unconnected = true;
    std::uint64_t seed = 1;
};

struct WorldStats {
    std::map<std::string, std::uint64_t> outcomes;
    std::uint64_t merges = 0;
    std::uint64_t recos_merging = 0;     // deliveries to merging vehicles
    std::uint64_t recos_following = 0;
    std::uint64_t recos_other = 0;
    std::uint64_t recos_unconnected = 0; // seen on an unconnected vehicle's topic
    std::uint64_t merges_with_reco = 0;
    std::uint64_t feedback_sent = 0;
    std::uint64_t late_recos = 0;        // arrived after the episode ended
};

/// Ground-truth traffic for every coordination zone. Each zone plays merge
/// instances one after another; role vehicles are connected, bystanders are
/// seen only by the camera.
class World {
public:
    World(WorldConfig config, std::vector<env::MergeInstance> instances, Transport& transport);

    /// Opens the camera session. Call once before the first frame.
    void start();
    /// Advances every zone to `now` and publishes the frame.
    void frame(Millis now);
    /// Advances one zone only; lets callers spread zones over the frame period.
    void frame_zone(std::size_t zone, Millis now);
    [[nodiscard]] std::size_t zone_count() const { return episodes_.size(); }
    [[nodiscard]] bool finished() const;
    /// Closes every session.
    void shutdown();

    [[nodiscard]] const WorldStats& stats() const { return stats_; }
    [[nodiscard]] Millis frame_ms() const { return config_.frame_ms; }

private:
    struct Vehicle {
        Uuid uuid;
        Uuid camera_uuid;
        Uuid recorded;       // uuid in the source instance
        std::string role;    // merging, preceding, following, bystander
        bool connected = false;
        SessionHandle session = 0;
        std::optional<TrajectoryRecommendation> plan;
        int recos_received = 0;
        Rud state;
    };
    struct Episode {
        bool active = false;
        std::uint64_t generation = 0;
        std::shared_ptr<const env::MergeInstance> instance;
        std::unique_ptr<env::MergeEnv> env;
        int step = 0;
        std::vector<Vehicle> vehicles;  // merging, preceding, following, bystanders
        bool got_reco = false;
    };

    void begin(std::size_t zone, Millis now);
    void end(std::size_t zone, env::Outcome outcome, Millis now);
    Rud place(const Episode& ep, const Vehicle& v, std::size_t zone, Millis now) const;
    void on_recommendation(std::size_t zone, std::uint64_t generation, std::size_t vehicle,
                           const TrajectoryRecommendation& reco, Millis at);

    WorldConfig config_;
    std::vector<std::shared_ptr<const env::MergeInstance>> instances_;
    Transport& transport_;
    std::mt19937_64 rng_;
    std::vector<Episode> episodes_;
    SessionHandle camera_ = 0;
    SessionHandle monitor_ = 0;
    std::size_t next_instance_ = 0;
    std::size_t started_ = 0;
    std::size_t target_ = 0;
    std::uint64_t generation_ = 0;
    WorldStats stats_;
};

/// Translates an instance so its merge-lane end and target lane coincide
/// with `zone`. Throws env::EnvError if the lane layouts differ.
env::MergeInstance place_instance(const env::MergeInstance& instance, const orchestrator::CoordinationZone& zone);

}  // namespace lanemerge::harness
