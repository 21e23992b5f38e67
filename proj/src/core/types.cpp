#include "lanemerge/core/types.hpp"

#include <array>
#include <cmath>
#include <string>

namespace lanemerge {

double normalize_heading(double heading) {
    double h = std::fmod(heading, kTwoPi);
    if (h < 0.0) h += kTwoPi;
    if (h >= kTwoPi) h = 0.0;  // fmod(-tiny) + 2pi can round up to 2pi
    return h;
}

double heading_deviation(double heading) {
    const double h = normalize_heading(heading);
    return h > std::numbers::pi ? h - kTwoPi : h;
}

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw InvariantError(what);
}

bool finite(double v) { return std::isfinite(v); }

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view s) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<E>(i);
    }
    return std::nullopt;
}

constexpr std::array<std::string_view, 3> kSourceNames{"ConnectedVehicle", "CameraSystem", "Fused"};
constexpr std::array<std::string_view, 3> kVerdictNames{"Accept", "Reject", "Abort"};
constexpr std::array<std::string_view, 5> kRoleNames{"Vehicle", "Camera", "Fusion", "Orchestrator",
                                                     "Kpi"};
constexpr std::array<std::string_view, 4> kActionNames{"Hello", "Subscribe", "Unsubscribe", "Ack"};
constexpr std::array<std::string_view, 5> kMsgTypeNames{"RudUpdate", "Recommendation", "Feedback",
                                                        "LogRecord", "Subscribe"};

}  // namespace

void validate(const RoadUserDescription& r) {
    require(finite(r.position.x) && finite(r.position.y), "rud.position must be finite");
    require(finite(r.speed) && finite(r.acceleration) && finite(r.heading) && finite(r.length) &&
                finite(r.width),
            "rud kinematics must be finite");
    require(r.speed >= 0.0, "rud.speed must be >= 0");
    require(r.length > 0.0, "rud.length must be > 0");
    require(r.width > 0.0, "rud.width must be > 0");
    require(r.heading >= 0.0 && r.heading < kTwoPi, "rud.heading must lie in [0, 2pi)");
    require(r.timestamp > 0, "rud.timestamp must be > 0");
}

void validate(const TrajectoryRecommendation& reco) {
    require(!reco.waypoints.empty(), "recommendation needs at least one waypoint");
    require(reco.created_at > 0 && reco.origin_rud_timestamp > 0, "recommendation timestamps must be > 0");
    Millis prev = 0;
    bool first = true;
    for (const auto& w : reco.waypoints) {
        require(finite(w.position.x) && finite(w.position.y) && finite(w.speed) && finite(w.acceleration),
                "waypoint values must be finite");
        require(w.speed >= 0.0, "waypoint speed must be >= 0");
        require(first || w.timestamp > prev, "waypoint timestamps must be strictly increasing");
        prev = w.timestamp;
        first = false;
    }
}

void validate(const ManeuverFeedback& fb) { require(fb.timestamp > 0, "feedback.timestamp must be > 0"); }

void validate(const LogRecord& rec) {
    require(!rec.component.empty(), "log.component must be non-empty");
    require(!rec.event.empty(), "log.event must be non-empty");
    require(rec.t > 0, "log.t must be > 0");
    for (const auto& [key, value] : rec.attributes) {
        require(!key.empty(), "log attribute keys must be non-empty");
        if (const auto* d = std::get_if<double>(&value)) require(finite(*d), "log attributes must be finite");
    }
}

void validate(const SubscribeRequest& req) {
    if (req.action == SubscribeAction::Subscribe || req.action == SubscribeAction::Unsubscribe) {
        require(!req.topic.empty(), "subscription topic must be non-empty");
    }
    if (req.bound) {
        const auto& b = *req.bound;
        require(finite(b.min.x) && finite(b.min.y) && finite(b.max.x) && finite(b.max.y),
                "bound must be finite");
        require(b.min.x <= b.max.x && b.min.y <= b.max.y, "bound min must not exceed max");
    }
}

void validate(const V2XEnvelope& env) {
    require(!env.topic.empty(), "envelope.topic must be non-empty");
    require(env.sent_at > 0, "envelope.sent_at must be > 0");
    std::visit([](const auto& p) { validate(p); }, env.payload);
}

std::string_view to_string(Source s) { return kSourceNames.at(static_cast<std::size_t>(s)); }
std::string_view to_string(Verdict v) { return kVerdictNames.at(static_cast<std::size_t>(v)); }
std::string_view to_string(ClientRole r) { return kRoleNames.at(static_cast<std::size_t>(r)); }
std::string_view to_string(SubscribeAction a) { return kActionNames.at(static_cast<std::size_t>(a)); }
std::string_view to_string(MsgType t) { return kMsgTypeNames.at(static_cast<std::size_t>(t)); }

std::optional<Source> source_from_string(std::string_view s) { return lookup<Source>(kSourceNames, s); }
std::optional<Verdict> verdict_from_string(std::string_view s) { return lookup<Verdict>(kVerdictNames, s); }
std::optional<ClientRole> role_from_string(std::string_view s) { return lookup<ClientRole>(kRoleNames, s); }
std::optional<SubscribeAction> action_from_string(std::string_view s) {
    return lookup<SubscribeAction>(kActionNames, s);
}
std::optional<MsgType> msg_type_from_string(std::string_view s) { return lookup<MsgType>(kMsgTypeNames, s); }

}  // namespace lanemerge
