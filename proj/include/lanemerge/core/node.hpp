#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lanemerge/core/types.hpp"

namespace lanemerge {

inline constexpr const char* kTopicVehicleRuds = "rud.vehicles";
inline constexpr const char* kTopicCameraRuds = "rud.camera";
inline constexpr const char* kTopicGdm = "gdm.ruds";
inline constexpr const char* kTopicFeedback = "feedback";
inline constexpr const char* kTopicLogs = "logs";

inline std::string recommendation_topic(const Uuid& vehicle) { return "recommendations." + vehicle.str(); }

/// `<uuid>@<timestamp>`: how a RUD is referred to in log correlation ids.
inline std::string rud_key(const Uuid& id, Millis t) { return id.str() + "@" + std::to_string(t); }

struct TopicSubscription {
    std::string topic;
    std::optional<BoundingBox> bound;
};

struct OutMessage {
    std::string topic;
    Payload payload;
};

/// Messages a node wants published, in order.
class Outbox {
public:
    void publish(std::string topic, Payload payload) { items_.push_back({std::move(topic), std::move(payload)}); }
    void log(LogRecord record) { items_.push_back({kTopicLogs, std::move(record)}); }
    [[nodiscard]] bool empty() const { return items_.empty(); }
    std::vector<OutMessage> take() { return std::exchange(items_, {}); }

private:
    std::vector<OutMessage> items_;
};

/// A backend service independent of transport. The in-process runtime and the
/// TCP service loop both drive nodes through this interface.
class ServiceNode {
public:
    virtual ~ServiceNode() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    [[nodiscard]] virtual ClientRole role() const = 0;
    [[nodiscard]] virtual std::vector<TopicSubscription> subscriptions() const = 0;
    virtual void on_message(const V2XEnvelope& envelope, Millis now, Outbox& out) = 0;
    /// Time of the next periodic callback strictly after `now`, if any.
    [[nodiscard]] virtual std::optional<Millis> next_tick(Millis /*now*/) const { return std::nullopt; }
    virtual void on_tick(Millis /*now*/, Outbox& /*out*/) {}
};

}  // namespace lanemerge
