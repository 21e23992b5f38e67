#include "lanemerge/harness/world.hpp"

#include <algorithm>
#include <cmath>

#include "lanemerge/core/kinematics.hpp"
#include "lanemerge/core/node.hpp"
#include "lanemerge/core/trajectory.hpp"

namespace lanemerge::harness {

std::optional<FeedbackPolicy> feedback_policy_from_string(std::string_view s) {
    if (s == "always-accept") return FeedbackPolicy::AlwaysAccept;
    if (s == "reject-first") return FeedbackPolicy::RejectFirst;
    if (s == "scripted-aborts") return FeedbackPolicy::ScriptedAborts;
    return std::nullopt;
}

std::string_view to_string(FeedbackPolicy p) {
    switch (p) {
        case FeedbackPolicy::AlwaysAccept: return "always-accept";
        case FeedbackPolicy::RejectFirst: return "reject-first";
        case FeedbackPolicy::ScriptedAborts: return "scripted-aborts";
    }
    return "?";
}

env::MergeInstance place_instance(const env::MergeInstance& instance, const orchestrator::CoordinationZone& zone) {
    const auto& from = instance.geometry;
    const auto& to = zone.geometry;
    const double sep_from = from.merge_lane_y - from.target_lane_y;
    const double sep_to = to.merge_lane_y - to.target_lane_y;
    if (std::abs(sep_from - sep_to) > 1e-6 || std::abs(from.lane_width - to.lane_width) > 1e-6) {
        throw env::EnvError("instance " + instance.instance_id + " has a lane layout unlike the zone's");
    }
    const double dx = to.merge_lane_end_x - from.merge_lane_end_x;
    const double dy = to.target_lane_y - from.target_lane_y;
    env::MergeInstance out = instance;
    out.geometry = to;
    for (auto& f : out.frames) {
        for (auto& r : f.ruds) {
            r.position.x += dx;
            r.position.y += dy;
            r.lane = to.lane_of(r.position.y);
        }
    }
    return out;
}

World::World(WorldConfig config, std::vector<env::MergeInstance> instances, Transport& transport)
    : config_(std::move(config)), transport_(transport), rng_(config_.seed) {
    if (config_.zones.empty()) throw std::invalid_argument("world needs at least one zone");
    if (instances.empty()) throw std::invalid_argument("world needs at least one merge instance");
    if (config_.frame_ms <= 0) throw std::invalid_argument("frame period must be positive");
    for (auto& inst : instances) {
        if (std::llround(inst.timestep * 1000.0) != config_.frame_ms) {
            throw env::EnvError("instance " + inst.instance_id + " timestep differs from the world frame period");
        }
        env::validate(inst);
        instances_.push_back(std::make_shared<const env::MergeInstance>(std::move(inst)));
    }
    target_ = config_.merges == 0 ? instances_.size() : config_.merges;
    episodes_.resize(config_.zones.size());
}

void World::start() {
    if (config_.camera) camera_ = transport_.connect("camera", ClientRole::Camera, {});
    if (config_.monitor_unconnected) {
        monitor_ = transport_.connect("monitor", ClientRole::Kpi, [this](const V2XEnvelope& e, Millis) {
            if (std::holds_alternative<TrajectoryRecommendation>(e.payload)) ++stats_.recos_unconnected;
        });
    }
}

void World::begin(std::size_t zone, Millis now) {
    const auto& source = instances_[next_instance_++ % instances_.size()];
    ++started_;
    env::MergeInstance placed = place_instance(*source, config_.zones[zone]);
    for (std::size_t k = 0; k < placed.frames.size(); ++k) {
        placed.frames[k].timestamp = now + static_cast<Millis>(k) * config_.frame_ms;
        for (auto& r : placed.frames[k].ruds) r.timestamp = placed.frames[k].timestamp;
    }
    Episode& ep = episodes_[zone];
    ep = Episode{};
    ep.active = true;
    ep.generation = ++generation_;
    ep.instance = std::make_shared<const env::MergeInstance>(std::move(placed));
    env::EnvConfig ec = config_.env;
    ec.timestep = static_cast<double>(config_.frame_ms) / 1000.0;
    ep.env = std::make_unique<env::MergeEnv>(ep.instance, ec);

    const auto& roles = ep.instance->roles;
    const auto& first = ep.instance->frames.front();
    auto add = [&](const Rud& r, const char* role) {
        Vehicle v;
        v.uuid = Uuid::generate(rng_);
        v.camera_uuid = Uuid::generate(rng_);
        v.recorded = r.uuid;
        v.role = role;
        v.connected = r.connected;
        v.state = r;
        ep.vehicles.push_back(std::move(v));
    };
    add(*first.find(roles.merging), "merging");
    add(*first.find(roles.preceding), "preceding");
    add(*first.find(roles.following), "following");
    for (const auto& r : first.ruds) {
        if (r.uuid != roles.merging && r.uuid != roles.preceding && r.uuid != roles.following) add(r, "bystander");
    }
    for (std::size_t i = 0; i < ep.vehicles.size(); ++i) {
        Vehicle& v = ep.vehicles[i];
        const std::string topic = recommendation_topic(v.uuid);
        if (!v.connected) {
            if (monitor_ != 0) transport_.subscribe(monitor_, topic);
            continue;
        }
        const auto gen = ep.generation;
        v.session = transport_.connect("veh-" + v.uuid.str().substr(0, 8), ClientRole::Vehicle,
                                       [this, zone, gen, i](const V2XEnvelope& e, Millis at) {
                                           if (const auto* r = std::get_if<TrajectoryRecommendation>(&e.payload)) {
                                               on_recommendation(zone, gen, i, *r, at);
                                           }
                                       });
        transport_.subscribe(v.session, topic);
    }
}

Rud World::place(const Episode& ep, const Vehicle& v, std::size_t zone, Millis now) const {
    Rud r = v.state;
    const bool follow = v.plan && !(config_.human_baseline && v.role == "merging");
    if (follow) {
        const auto k = state_on_plan(v.plan->waypoints, now);
        r.position = k.position;
        r.speed = k.speed;
        r.acceleration = k.acceleration;
        r.heading = k.heading;
    } else if (v.role == "merging") {
        const auto& frames = ep.instance->frames;
        const auto last = std::min<std::size_t>(static_cast<std::size_t>(ep.step), frames.size() - 1);
        r = *frames[last].find(v.recorded);
        if (static_cast<std::size_t>(ep.step) > last) {
            KinematicState k = kinematics_of(r);
            k.acceleration = 0.0;
            k = advance(k, static_cast<double>(ep.step - static_cast<int>(last)) * ep.env->config().timestep);
            r.position = k.position;
            r.acceleration = 0.0;
        }
    } else {
        r = ep.env->replay(v.recorded, ep.step);
    }
    r.uuid = v.uuid;
    r.timestamp = now;
    r.connected = v.connected;
    r.source = v.connected ? Source::ConnectedVehicle : Source::CameraSystem;
    r.lane = config_.zones[zone].geometry.lane_of(r.position.y);
    return r;
}

void World::frame(Millis now) {
    for (std::size_t z = 0; z < episodes_.size(); ++z) frame_zone(z, now);
}

void World::frame_zone(std::size_t z, Millis now) {
    {
        Episode& ep = episodes_.at(z);
        if (!ep.active) {
            if (started_ >= target_) return;
            begin(z, now);
        } else {
            ++ep.step;
        }
        for (auto& v : ep.vehicles) v.state = place(ep, v, z, now);

        env::EnvState s;
        s.merging = ep.vehicles[0].state;
        s.preceding = ep.vehicles[1].state;
        s.following = ep.vehicles[2].state;
        for (std::size_t i = 3; i < ep.vehicles.size(); ++i) s.bystanders.push_back(ep.vehicles[i].state);
        s.steps = ep.step;
        s.geometry = config_.zones[z].geometry;
        const auto outcome = env::detect_outcome(s, ep.env->config());

        std::normal_distribution<double> noise(0.0, 1.0);
        for (const auto& v : ep.vehicles) {
            if (v.connected) {
                transport_.publish(v.session, kTopicVehicleRuds, v.state, now);
                transport_.log({"vehicle", "rud_sent", rud_key(v.uuid, now), now, {{"zone", std::int64_t(z)}}});
            }
            if (camera_ != 0) {
                Rud c = v.state;
                c.uuid = v.camera_uuid;
                c.source = Source::CameraSystem;
                c.connected = false;
                c.position.x += config_.camera_sigma * noise(rng_);
                c.position.y += config_.camera_sigma * noise(rng_);
                c.speed = std::max(0.0, c.speed + config_.camera_speed_sigma * noise(rng_));
                c.acceleration += config_.camera_accel_sigma * noise(rng_);
                c.heading = normalize_heading(c.heading + config_.camera_heading_sigma * noise(rng_));
                c.lane = config_.zones[z].geometry.lane_of(c.position.y);
                transport_.publish(camera_, kTopicCameraRuds, c, now);
            }
            if (config_.log_ground_truth) {
                LogRecord rec{"world", "ru_state", rud_key(v.uuid, now), now, {}};
                rec.attributes["zone"] = static_cast<std::int64_t>(z);
                rec.attributes["x"] = v.state.position.x;
                rec.attributes["y"] = v.state.position.y;
                if (v.state.lane) rec.attributes["lane"] = static_cast<std::int64_t>(*v.state.lane);
                rec.attributes["length"] = v.state.length;
                rec.attributes["speed"] = v.state.speed;
                rec.attributes["accel"] = v.state.acceleration;
                rec.attributes["role"] = v.role;
                rec.attributes["plan"] = v.plan.has_value() && !config_.human_baseline;
                transport_.log(rec);
            }
        }
        if (outcome != env::Outcome::InProgress) end(z, outcome, now);
    }
}

void World::on_recommendation(std::size_t zone, std::uint64_t generation, std::size_t index,
                              const TrajectoryRecommendation& reco, Millis at) {
    Episode& ep = episodes_[zone];
    if (!ep.active || ep.generation != generation) {
        ++stats_.late_recos;
        return;
    }
    Vehicle& v = ep.vehicles[index];
    ++v.recos_received;
    LogRecord rec{"vehicle", "reco_delivered", reco.recommendation_id.str(), at, {}};
    rec.attributes["zone"] = static_cast<std::int64_t>(zone);
    rec.attributes["role"] = v.role;
    transport_.log(rec);
    if (v.role == "merging") {
        ++stats_.recos_merging;
        ep.got_reco = true;
    } else if (v.role == "following") {
        ++stats_.recos_following;
    } else {
        ++stats_.recos_other;
    }

    Verdict verdict = Verdict::Accept;
    if (config_.feedback == FeedbackPolicy::RejectFirst && v.recos_received == 1) verdict = Verdict::Reject;
    if (config_.feedback == FeedbackPolicy::ScriptedAborts &&
        std::find(config_.scripted_aborts.begin(), config_.scripted_aborts.end(), v.recos_received) !=
            config_.scripted_aborts.end()) {
        verdict = Verdict::Abort;
    }
    if (verdict == Verdict::Accept && (!v.plan || reco.created_at >= v.plan->created_at)) v.plan = reco;
    transport_.publish(v.session, kTopicFeedback, ManeuverFeedback{reco.recommendation_id, v.uuid, verdict, at}, at);
    ++stats_.feedback_sent;
}

void World::end(std::size_t zone, env::Outcome outcome, Millis now) {
    Episode& ep = episodes_[zone];
    LogRecord rec{"world", "merge_resolved", ep.instance->instance_id + "#" + std::to_string(ep.generation), now, {}};
    rec.attributes["zone"] = static_cast<std::int64_t>(zone);
    rec.attributes["outcome"] = std::string(env::to_string(outcome));
    rec.attributes["steps"] = static_cast<std::int64_t>(ep.step);
    rec.attributes["recommendations"] = static_cast<std::int64_t>(ep.vehicles[0].recos_received);
    rec.attributes["baseline"] = config_.human_baseline;
    transport_.log(rec);
    ++stats_.outcomes[std::string(env::to_string(outcome))];
    ++stats_.merges;
    if (ep.got_reco) ++stats_.merges_with_reco;
    for (auto& v : ep.vehicles) {
        if (v.session != 0) transport_.disconnect(v.session);
        v.session = 0;
    }
    ep.active = false;
}

bool World::finished() const {
    if (started_ < target_) return false;
    return std::none_of(episodes_.begin(), episodes_.end(), [](const Episode& e) { return e.active; });
}

void World::shutdown() {
    for (auto& ep : episodes_) {
        for (auto& v : ep.vehicles) {
            if (v.session != 0) transport_.disconnect(v.session);
            v.session = 0;
        }
        ep.active = false;
    }
    if (camera_ != 0) transport_.disconnect(camera_);
    if (monitor_ != 0) transport_.disconnect(monitor_);
    camera_ = monitor_ = 0;
}

}  // namespace lanemerge::harness
