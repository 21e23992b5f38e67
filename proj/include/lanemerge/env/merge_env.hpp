#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lanemerge/core/types.hpp"

namespace lanemerge::env {

class EnvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Action { Accelerate, Decelerate, TurnLeft, TurnRight, DoNothing };
inline constexpr std::size_t kActionCount = 5;
inline constexpr std::array<Action, kActionCount> kAllActions{
    Action::Accelerate, Action::Decelerate, Action::TurnLeft, Action::TurnRight, Action::DoNothing};

enum class Outcome { InProgress, Success, Collision, LaneEnd, Timeout };

std::string_view to_string(Action a);
std::string_view to_string(Outcome o);

inline constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }

/// Two straight parallel lanes along +x. The merge lane ends at `merge_lane_end_x`.
struct LaneGeometry {
    double merge_lane_y = 3.5;
    double target_lane_y = 0.0;
    double merge_lane_end_x = 300.0;
    double lane_width = 3.5;
    int merge_lane_id = 2;
    int target_lane_id = 1;

    [[nodiscard]] bool on_target_lane(double y) const;
    [[nodiscard]] bool on_merge_lane(double y) const;
    [[nodiscard]] double road_min_y() const;
    [[nodiscard]] double road_max_y() const;
    [[nodiscard]] std::optional<int> lane_of(double y) const;
    /// Same geometry translated laterally by `dy`.
    [[nodiscard]] LaneGeometry shifted(double dy) const;

    bool operator==(const LaneGeometry&) const = default;
};

struct EnvConfig {
    double timestep = 0.1;
    double accel_step = 1.0;
    double accel_min = -4.0;
    double accel_max = 3.0;
    double heading_step = deg(2.0);
    double heading_max = deg(20.0);
    double d_safe = 10.0;
    int max_steps = 150;
};

struct Roles {
    Uuid merging;
    Uuid preceding;
    Uuid following;
    bool operator==(const Roles&) const = default;
};

struct Frame {
    Millis timestamp = 0;
    std::vector<Rud> ruds;

    [[nodiscard]] const Rud* find(const Uuid& id) const;
    bool operator==(const Frame&) const = default;
};

enum class InstanceSource { ImportedTrajectoryData, Synthetic };

/// One chronological merge episode with labelled merging/preceding/following vehicles.
struct MergeInstance {
    std::string instance_id;
    double timestep = 0.1;
    std::vector<Frame> frames;
    Roles roles;
    InstanceSource source = InstanceSource::Synthetic;
    LaneGeometry geometry;

    bool operator==(const MergeInstance&) const = default;
};

/// Throws EnvError if frames are empty, mis-spaced, or miss a role vehicle.
void validate(const MergeInstance& instance);

struct EnvState {
    Rud merging;
    Rud preceding;
    Rud following;
    std::vector<Rud> bystanders;
    int steps = 0;
    LaneGeometry geometry;
    bool done = false;
    Outcome outcome = Outcome::InProgress;
};

/// Rear bumper of `ahead` minus front bumper of `behind`, along x.
double bumper_gap(const Rud& behind, const Rud& ahead);

/// Axis-aligned length x width footprints overlap (touching does not count).
bool footprints_overlap(const Rud& a, const Rud& b);

/// Midpoint of the gap between the following vehicle's front and the preceding
/// vehicle's rear, on the target-lane centerline. Throws EnvError if the gap is not positive.
Vec2 merge_point(const Rud& preceding, const Rud& following, const LaneGeometry& geometry);

/// Exactly one outcome; precedence Collision > Success > LaneEnd > Timeout.
Outcome detect_outcome(const EnvState& state, const EnvConfig& config);

/// Applies `action` to the merging vehicle's controls without moving it.
Rud apply_action(const Rud& merging, Action action, const EnvConfig& config);

/// Kinematic environment over one merge instance. The merging vehicle is driven
/// by actions; every other vehicle replays the instance's recorded frames and
/// continues at constant velocity past the last frame.
class MergeEnv {
public:
    MergeEnv(std::shared_ptr<const MergeInstance> instance, EnvConfig config = {});

    [[nodiscard]] EnvState reset() const;
    /// Throws EnvError when `state` is already done.
    [[nodiscard]] EnvState step(const EnvState& state, Action action) const;

    /// Recorded (or extrapolated) description of a replayed vehicle at `step`.
    [[nodiscard]] Rud replay(const Uuid& id, int step) const;

    [[nodiscard]] const MergeInstance& instance() const { return *instance_; }
    [[nodiscard]] const EnvConfig& config() const { return config_; }
    [[nodiscard]] Millis timestamp_at(int step) const;

private:
    std::shared_ptr<const MergeInstance> instance_;
    EnvConfig config_;
    std::unordered_map<Uuid, std::vector<Rud>> tracks_;
    std::vector<Uuid> bystander_ids_;
};

}  // namespace lanemerge::env
