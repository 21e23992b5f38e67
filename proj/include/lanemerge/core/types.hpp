#pragma once

#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lanemerge/core/uuid.hpp"

namespace lanemerge {

/// Milliseconds since epoch. Every component exchanges integer-ms timestamps.
using Millis = std::int64_t;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Vec2&) const = default;
};

/// Axis-aligned rectangle in the local metric frame, bounds inclusive.
struct BoundingBox {
    Vec2 min;
    Vec2 max;

    [[nodiscard]] bool contains(Vec2 p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
    }
    bool operator==(const BoundingBox&) const = default;
};

/// Raised when a value violates its domain invariants.
class InvariantError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Source { ConnectedVehicle, CameraSystem, Fused };

/// One road user's timestamped kinematic and identity snapshot.
///
/// Heading is measured from the road axis (+x) towards +y, which points to the
/// right of travel in this frame; positive heading therefore steers right.
struct RoadUserDescription {
    Uuid uuid;
    Source source = Source::ConnectedVehicle;
    Millis timestamp = 1;
    Vec2 position;
    double speed = 0.0;
    double acceleration = 0.0;
    double heading = 0.0;
    double length = 4.5;
    double width = 1.8;
    std::optional<int> lane;
    bool connected = false;

    bool operator==(const RoadUserDescription&) const = default;
};
using Rud = RoadUserDescription;

struct Waypoint {
    Millis timestamp = 0;
    Vec2 position;
    double speed = 0.0;
    double acceleration = 0.0;
    bool operator==(const Waypoint&) const = default;
};

struct TrajectoryRecommendation {
    Uuid recommendation_id;
    Uuid target_uuid;
    std::vector<Waypoint> waypoints;
    Millis created_at = 1;
    Millis origin_rud_timestamp = 1;
    bool operator==(const TrajectoryRecommendation&) const = default;
};

enum class Verdict { Accept, Reject, Abort };

struct ManeuverFeedback {
    Uuid recommendation_id;
    Uuid vehicle_uuid;
    Verdict verdict = Verdict::Accept;
    Millis timestamp = 1;
    bool operator==(const ManeuverFeedback&) const = default;
};

using AttributeValue = std::variant<std::string, std::int64_t, double, bool>;

struct LogRecord {
    std::string component;
    std::string event;
    std::string correlation_id;
    Millis t = 1;
    std::map<std::string, AttributeValue> attributes;
    bool operator==(const LogRecord&) const = default;
};

enum class ClientRole { Vehicle, Camera, Fusion, Orchestrator, Kpi };

enum class SubscribeAction { Hello, Subscribe, Unsubscribe, Ack };

/// Session control: the handshake (Hello), topic (un)subscription and broker acks.
struct SubscribeRequest {
    SubscribeAction action = SubscribeAction::Hello;
    ClientRole role = ClientRole::Vehicle;
    std::string topic;
    std::optional<BoundingBox> bound;
    bool operator==(const SubscribeRequest&) const = default;
};

enum class MsgType { RudUpdate, Recommendation, Feedback, LogRecord, Subscribe };

using Payload = std::variant<RoadUserDescription, TrajectoryRecommendation, ManeuverFeedback,
                             LogRecord, SubscribeRequest>;

struct V2XEnvelope {
    std::string topic;
    std::string sender;
    std::uint64_t seq = 0;
    Millis sent_at = 1;
    Payload payload;

    [[nodiscard]] MsgType msg_type() const { return static_cast<MsgType>(payload.index()); }
    bool operator==(const V2XEnvelope&) const = default;
};

/// Wraps `heading` into [0, 2pi).
double normalize_heading(double heading);

/// Signed deviation of `heading` from the road axis, in (-pi, pi].
double heading_deviation(double heading);

// Invariant checks; each throws InvariantError naming the offending field.
void validate(const RoadUserDescription& rud);
void validate(const TrajectoryRecommendation& reco);
void validate(const ManeuverFeedback& fb);
void validate(const LogRecord& rec);
void validate(const SubscribeRequest& req);
void validate(const V2XEnvelope& env);

// Enum <-> wire tag.
std::string_view to_string(Source s);
std::string_view to_string(Verdict v);
std::string_view to_string(ClientRole r);
std::string_view to_string(SubscribeAction a);
std::string_view to_string(MsgType t);

std::optional<Source> source_from_string(std::string_view s);
std::optional<Verdict> verdict_from_string(std::string_view s);
std::optional<ClientRole> role_from_string(std::string_view s);
std::optional<SubscribeAction> action_from_string(std::string_view s);
std::optional<MsgType> msg_type_from_string(std::string_view s);

}  // namespace lanemerge
