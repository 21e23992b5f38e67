#include "lanemerge/core/wire.hpp"

#include <cmath>
#include <limits>

namespace lanemerge::wire {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void schema_fail(const std::string& what) { throw SchemaError("schema violation: " + what); }

const json& field(const json& j, const char* key) {
    if (!j.is_object()) schema_fail(std::string("expected object around '") + key + "'");
    auto it = j.find(key);
    if (it == j.end()) schema_fail(std::string("missing field '") + key + "'");
    return *it;
}

double get_number(const json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_number()) schema_fail(std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

std::int64_t get_int(const json& j, const char* key) {
    const auto& v = field(j, key);
    if (v.is_number_unsigned()) {
        const auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
            schema_fail(std::string("field '") + key + "' out of range");
        }
        return static_cast<std::int64_t>(u);
    }
    if (!v.is_number_integer()) schema_fail(std::string("field '") + key + "' must be an integer");
    return v.get<std::int64_t>();
}

std::uint64_t get_uint(const json& j, const char* key) {
    const auto& v = field(j, key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    schema_fail(std::string("field '") + key + "' must be a non-negative integer");
}

const std::string& get_string(const json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_string()) schema_fail(std::string("field '") + key + "' must be a string");
    return v.get_ref<const std::string&>();
}

bool get_bool(const json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_boolean()) schema_fail(std::string("field '") + key + "' must be a boolean");
    return v.get<bool>();
}

Uuid get_uuid(const json& j, const char* key) {
    try {
        return Uuid::parse(get_string(j, key));
    } catch (const std::invalid_argument&) {
        schema_fail(std::string("field '") + key + "' is not a uuid");
    }
}

template <typename E>
E get_enum(const json& j, const char* key, std::optional<E> (*from)(std::string_view)) {
    auto e = from(get_string(j, key));
    if (!e) schema_fail(std::string("field '") + key + "' has unknown value");
    return *e;
}

ordered_json vec_json(Vec2 v) { return ordered_json{{"x", v.x}, {"y", v.y}}; }

Vec2 vec_from(const json& j) { return {get_number(j, "x"), get_number(j, "y")}; }

ordered_json attr_json(const AttributeValue& v) {
    return std::visit([](const auto& x) { return ordered_json(x); }, v);
}

AttributeValue attr_from(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number_float()) return v.get<double>();
    if (v.is_number_unsigned()) {
        const auto u = v.get<std::uint64_t>();
        if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
            schema_fail("log attribute out of range");
        }
        return static_cast<std::int64_t>(u);
    }
    if (v.is_number_integer()) return v.get<std::int64_t>();
    schema_fail("log attributes must be scalar");
}

ordered_json payload_json(const RoadUserDescription& r) { return to_json(r); }
ordered_json payload_json(const TrajectoryRecommendation& r) { return to_json(r); }
ordered_json payload_json(const LogRecord& r) { return to_json(r); }

ordered_json payload_json(const ManeuverFeedback& fb) {
    return ordered_json{{"recommendation_id", fb.recommendation_id.str()},
                        {"vehicle_uuid", fb.vehicle_uuid.str()},
                        {"verdict", to_string(fb.verdict)},
                        {"timestamp", fb.timestamp}};
}

ordered_json payload_json(const SubscribeRequest& req) {
    ordered_json j{{"action", to_string(req.action)}, {"role", to_string(req.role)}, {"topic", req.topic}};
    if (req.bound) {
        j["bound"] = ordered_json{{"min", vec_json(req.bound->min)}, {"max", vec_json(req.bound->max)}};
    } else {
        j["bound"] = nullptr;
    }
    return j;
}

ManeuverFeedback feedback_from_json(const json& j) {
    ManeuverFeedback fb;
    fb.recommendation_id = get_uuid(j, "recommendation_id");
    fb.vehicle_uuid = get_uuid(j, "vehicle_uuid");
    fb.verdict = get_enum<Verdict>(j, "verdict", verdict_from_string);
    fb.timestamp = get_int(j, "timestamp");
    return fb;
}

SubscribeRequest subscribe_from_json(const json& j) {
    SubscribeRequest req;
    req.action = get_enum<SubscribeAction>(j, "action", action_from_string);
    req.role = get_enum<ClientRole>(j, "role", role_from_string);
    req.topic = get_string(j, "topic");
    const auto& b = field(j, "bound");
    if (!b.is_null()) req.bound = BoundingBox{vec_from(field(b, "min")), vec_from(field(b, "max"))};
    return req;
}

template <typename T>
void checked(const T& value) {
    try {
        validate(value);
    } catch (const InvariantError& e) {
        schema_fail(e.what());
    }
}

}  // namespace

ordered_json to_json(const RoadUserDescription& r) {
    ordered_json j{{"uuid", r.uuid.str()},
                   {"source", to_string(r.source)},
                   {"timestamp", r.timestamp},
                   {"position", vec_json(r.position)},
                   {"speed", r.speed},
                   {"acceleration", r.acceleration},
                   {"heading", r.heading},
                   {"length", r.length},
                   {"width", r.width}};
    j["lane"] = r.lane ? ordered_json(*r.lane) : ordered_json(nullptr);
    j["connected"] = r.connected;
    return j;
}

ordered_json to_json(const TrajectoryRecommendation& reco) {
    ordered_json wps = ordered_json::array();
    for (const auto& w : reco.waypoints) {
        wps.push_back(ordered_json{{"timestamp", w.timestamp},
                                   {"position", vec_json(w.position)},
                                   {"speed", w.speed},
                                   {"acceleration", w.acceleration}});
    }
    return ordered_json{{"recommendation_id", reco.recommendation_id.str()},
                        {"target_uuid", reco.target_uuid.str()},
                        {"created_at", reco.created_at},
                        {"origin_rud_timestamp", reco.origin_rud_timestamp},
                        {"waypoints", std::move(wps)}};
}

ordered_json to_json(const LogRecord& rec) {
    ordered_json attrs = ordered_json::object();
    for (const auto& [k, v] : rec.attributes) attrs[k] = attr_json(v);
    return ordered_json{{"component", rec.component},
                        {"event", rec.event},
                        {"correlation_id", rec.correlation_id},
                        {"t", rec.t},
                        {"attributes", std::move(attrs)}};
}

RoadUserDescription rud_from_json(const json& j) {
    RoadUserDescription r;
    r.uuid = get_uuid(j, "uuid");
    r.source = get_enum<Source>(j, "source", source_from_string);
    r.timestamp = get_int(j, "timestamp");
    r.position = vec_from(field(j, "position"));
    r.speed = get_number(j, "speed");
    r.acceleration = get_number(j, "acceleration");
    r.heading = get_number(j, "heading");
    r.length = get_number(j, "length");
    r.width = get_number(j, "width");
    const auto& lane = field(j, "lane");
    if (!lane.is_null()) {
        if (!lane.is_number_integer()) schema_fail("field 'lane' must be an integer or null");
        r.lane = lane.get<int>();
    }
    r.connected = get_bool(j, "connected");
    checked(r);
    return r;
}

TrajectoryRecommendation recommendation_from_json(const json& j) {
    TrajectoryRecommendation reco;
    reco.recommendation_id = get_uuid(j, "recommendation_id");
    reco.target_uuid = get_uuid(j, "target_uuid");
    reco.created_at = get_int(j, "created_at");
    reco.origin_rud_timestamp = get_int(j, "origin_rud_timestamp");
    const auto& wps = field(j, "waypoints");
    if (!wps.is_array()) schema_fail("field 'waypoints' must be an array");
    for (const auto& w : wps) {
        reco.waypoints.push_back(Waypoint{get_int(w, "timestamp"), vec_from(field(w, "position")),
                                          get_number(w, "speed"), get_number(w, "acceleration")});
    }
    checked(reco);
    return reco;
}

LogRecord log_record_from_json(const json& j) {
    LogRecord rec;
    rec.component = get_string(j, "component");
    rec.event = get_string(j, "event");
    rec.correlation_id = get_string(j, "correlation_id");
    rec.t = get_int(j, "t");
    const auto& attrs = field(j, "attributes");
    if (!attrs.is_object()) schema_fail("field 'attributes' must be an object");
    for (const auto& [k, v] : attrs.items()) rec.attributes.emplace(k, attr_from(v));
    checked(rec);
    return rec;
}

std::string encode_envelope(const V2XEnvelope& env) {
    try {
        validate(env);
    } catch (const InvariantError& e) {
        throw SchemaError(std::string("cannot encode: ") + e.what());
    }
    ordered_json j{{"msg_type", to_string(env.msg_type())},
                   {"topic", env.topic},
                   {"sender", env.sender},
                   {"seq", env.seq},
                   {"sent_at", env.sent_at}};
    j["payload"] = std::visit([](const auto& p) { return payload_json(p); }, env.payload);
    std::string line;
    try {
        line = j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
    } catch (const json::type_error& e) {
        throw SchemaError(std::string("cannot encode: ") + e.what());
    }
    line.push_back('\n');
    return line;
}

V2XEnvelope decode_envelope(std::string_view line) {
    if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find('\n') != std::string_view::npos) throw ParseError("envelope must be a single line");

    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed envelope: ") + e.what());
    }
    if (!j.is_object()) schema_fail("envelope must be an object");

    const auto& tag = get_string(j, "msg_type");
    const auto type = msg_type_from_string(tag);
    if (!type) throw UnknownTypeError("unknown msg_type '" + tag + "'");

    V2XEnvelope env;
    env.topic = get_string(j, "topic");
    env.sender = get_string(j, "sender");
    env.seq = get_uint(j, "seq");
    env.sent_at = get_int(j, "sent_at");
    const auto& p = field(j, "payload");
    switch (*type) {
        case MsgType::RudUpdate: env.payload = rud_from_json(p); break;
        case MsgType::Recommendation: env.payload = recommendation_from_json(p); break;
        case MsgType::Feedback: env.payload = feedback_from_json(p); break;
        case MsgType::LogRecord: env.payload = log_record_from_json(p); break;
        case MsgType::Subscribe: env.payload = subscribe_from_json(p); break;
    }
    checked(env);
    return env;
}

bool SequenceTracker::observe(const V2XEnvelope& env) {
    auto key = std::make_pair(env.sender, env.topic);
    auto it = last_.find(key);
    if (it != last_.end() && env.seq <= it->second) {
        ++violations_;
        return false;
    }
    last_[std::move(key)] = env.seq;
    return true;
}

}  // namespace lanemerge::wire
