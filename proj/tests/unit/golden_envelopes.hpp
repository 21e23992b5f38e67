#pragma once

#include <utility>
#include <vector>

#include "lanemerge/core/types.hpp"

namespace lanemerge::testing {

/// One envelope per msg_type with fixed field values; tests/fixtures/golden
/// holds their exact encodings.
inline std::vector<std::pair<const char*, V2XEnvelope>> golden_envelopes() {
    const Uuid vehicle = Uuid::parse("6f1c2a4e-8b3d-4c5e-9f7a-0b1c2d3e4f50");
    const Uuid reco = Uuid::parse("a0b1c2d3-e4f5-4a6b-8c7d-9e0f1a2b3c4d");

    Rud rud;
    rud.uuid = vehicle;
    rud.source = Source::ConnectedVehicle;
    rud.timestamp = 1700000000100;
    rud.position = {120.5, 3.5};
    rud.speed = 22.25;
    rud.acceleration = 0.5;
    rud.heading = 0.0;
    rud.length = 4.5;
    rud.width = 1.8;
    rud.lane = 2;
    rud.connected = true;

    TrajectoryRecommendation tr;
    tr.recommendation_id = reco;
    tr.target_uuid = vehicle;
    tr.created_at = 1700000000140;
    tr.origin_rud_timestamp = 1700000000100;
    tr.waypoints = {{1700000000100, {120.5, 3.5}, 22.25, 0.5}, {1700000000200, {122.75, 3.25}, 22.3, 1.0}};

    ManeuverFeedback fb{reco, vehicle, Verdict::Reject, 1700000000180};

    LogRecord log{"orchestrator", "reco_computed", reco.str(), 1700000000140, {}};
    log.attributes["compute_us"] = std::int64_t{412};
    log.attributes["auxiliary"] = false;
    log.attributes["origin"] = std::string("6f1c2a4e-8b3d-4c5e-9f7a-0b1c2d3e4f50@1700000000100");
    log.attributes["zone"] = std::int64_t{0};

    SubscribeRequest sub{SubscribeAction::Subscribe, ClientRole::Fusion, "rud.vehicles",
                         BoundingBox{{-200.0, -5.0}, {400.0, 8.5}}};

    return {
        {"rud_update", V2XEnvelope{"rud.vehicles", "vehicle-0", 7, 1700000000101, rud}},
        {"recommendation", V2XEnvelope{"recommendations." + vehicle.str(), "orchestrator", 3, 1700000000141, tr}},
        {"feedback", V2XEnvelope{"feedback", "vehicle-0", 2, 1700000000181, fb}},
        {"log_record", V2XEnvelope{"logs", "orchestrator", 11, 1700000000142, log}},
        {"subscribe", V2XEnvelope{"rud.vehicles", "fusion", 1, 1700000000000, sub}},
    };
}

}  // namespace lanemerge::testing
