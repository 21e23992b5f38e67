#include "lanemerge/env/merge_env.hpp"

#include <algorithm>
#include <cmath>

#include "lanemerge/core/kinematics.hpp"

namespace lanemerge::env {

std::string_view to_string(Action a) {
    switch (a) {
        case Action::Accelerate: return "Accelerate";
        case Action::Decelerate: return "Decelerate";
        case Action::TurnLeft: return "TurnLeft";
        case Action::TurnRight: return "TurnRight";
        case Action::DoNothing: return "DoNothing";
    }
    return "?";
}

std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::InProgress: return "InProgress";
        case Outcome::Success: return "Success";
        case Outcome::Collision: return "Collision";
        case Outcome::LaneEnd: return "LaneEnd";
        case Outcome::Timeout: return "Timeout";
    }
    return "?";
}

bool LaneGeometry::on_target_lane(double y) const { return std::abs(y - target_lane_y) <= lane_width / 2.0; }

bool LaneGeometry::on_merge_lane(double y) const { return std::abs(y - merge_lane_y) <= lane_width / 2.0; }

double LaneGeometry::road_min_y() const { return std::min(merge_lane_y, target_lane_y) - lane_width / 2.0; }

double LaneGeometry::road_max_y() const { return std::max(merge_lane_y, target_lane_y) + lane_width / 2.0; }

std::optional<int> LaneGeometry::lane_of(double y) const {
    if (on_target_lane(y)) return target_lane_id;
    if (on_merge_lane(y)) return merge_lane_id;
    return std::nullopt;
}

LaneGeometry LaneGeometry::shifted(double dy) const {
    LaneGeometry g = *this;
    g.merge_lane_y += dy;
    g.target_lane_y += dy;
    return g;
}

const Rud* Frame::find(const Uuid& id) const {
    for (const auto& r : ruds) {
        if (r.uuid == id) return &r;
    }
    return nullptr;
}

void validate(const MergeInstance& inst) {
    if (inst.frames.empty()) throw EnvError("instance " + inst.instance_id + " has no frames");
    if (!(inst.timestep > 0.0)) throw EnvError("instance timestep must be positive");
    const auto& r = inst.roles;
    if (r.merging == r.preceding || r.merging == r.following || r.preceding == r.following) {
        throw EnvError("instance " + inst.instance_id + " role uuids must be distinct");
    }
    const auto step_ms = inst.timestep * 1000.0;
    for (std::size_t k = 0; k < inst.frames.size(); ++k) {
        const auto& f = inst.frames[k];
        if (!f.find(r.merging) || !f.find(r.preceding) || !f.find(r.following)) {
            throw EnvError("instance " + inst.instance_id + " frame " + std::to_string(k) + " misses a role vehicle");
        }
        if (k > 0) {
            const double spacing = static_cast<double>(f.timestamp - inst.frames[k - 1].timestamp);
            if (std::abs(spacing - step_ms) > 1.0) {
                throw EnvError("instance " + inst.instance_id + " frame spacing off timestep at frame " +
                               std::to_string(k));
            }
        }
        for (const auto& rud : f.ruds) lanemerge::validate(rud);
    }
}

double bumper_gap(const Rud& behind, const Rud& ahead) {
    return (ahead.position.x - ahead.length / 2.0) - (behind.position.x + behind.length / 2.0);
}

bool footprints_overlap(const Rud& a, const Rud& b) {
    return std::abs(a.position.x - b.position.x) < (a.length + b.length) / 2.0 &&
           std::abs(a.position.y - b.position.y) < (a.width + b.width) / 2.0;
}

Vec2 merge_point(const Rud& preceding, const Rud& following, const LaneGeometry& geometry) {
    const double front_of_following = following.position.x + following.length / 2.0;
    const double rear_of_preceding = preceding.position.x - preceding.length / 2.0;
    if (rear_of_preceding - front_of_following <= 0.0) {
        throw EnvError("merge_point: preceding vehicle is not ahead of the following vehicle");
    }
    return {(front_of_following + rear_of_preceding) / 2.0, geometry.target_lane_y};
}

Outcome detect_outcome(const EnvState& s, const EnvConfig& config) {
    const auto& m = s.merging;
    const auto& g = s.geometry;
    if (m.position.y < g.road_min_y() || m.position.y > g.road_max_y()) return Outcome::Collision;
    if (footprints_overlap(m, s.preceding) || footprints_overlap(m, s.following)) return Outcome::Collision;
    for (const auto& b : s.bystanders) {
        if (footprints_overlap(m, b)) return Outcome::Collision;
    }
    const bool on_target = g.on_target_lane(m.position.y);
    if (on_target && bumper_gap(s.following, m) >= config.d_safe && bumper_gap(m, s.preceding) >= config.d_safe) {
        return Outcome::Success;
    }
    if (!on_target && m.position.x + m.length / 2.0 >= g.merge_lane_end_x) return Outcome::LaneEnd;
    if (s.steps >= config.max_steps) return Outcome::Timeout;
    return Outcome::InProgress;
}

Rud apply_action(const Rud& merging, Action action, const EnvConfig& config) {
    Rud out = merging;
    switch (action) {
        case Action::Accelerate:
            out.acceleration = std::clamp(merging.acceleration + config.accel_step, config.accel_min, config.accel_max);
            break;
        case Action::Decelerate:
            out.acceleration = std::clamp(merging.acceleration - config.accel_step, config.accel_min, config.accel_max);
            break;
        case Action::TurnLeft:
        case Action::TurnRight: {
            const double delta = action == Action::TurnLeft ? -config.heading_step : config.heading_step;
            const double dev =
                std::clamp(heading_deviation(merging.heading) + delta, -config.heading_max, config.heading_max);
            out.heading = normalize_heading(dev);
            break;
        }
        case Action::DoNothing: break;
    }
    return out;
}

MergeEnv::MergeEnv(std::shared_ptr<const MergeInstance> instance, EnvConfig config)
    : instance_(std::move(instance)), config_(config) {
    if (!instance_ || instance_->frames.empty()) throw EnvError("MergeEnv needs a non-empty instance");
    const auto& first = instance_->frames.front();
    const auto& roles = instance_->roles;
    if (!first.find(roles.merging) || !first.find(roles.preceding) || !first.find(roles.following)) {
        throw EnvError("MergeEnv: first frame misses a role vehicle");
    }
    for (const auto& r : first.ruds) {
        if (r.uuid != roles.merging && r.uuid != roles.preceding && r.uuid != roles.following) {
            bystander_ids_.push_back(r.uuid);
        }
    }
    for (const auto& r : first.ruds) {
        if (r.uuid == roles.merging) continue;
        auto& track = tracks_[r.uuid];
        for (const auto& f : instance_->frames) {
            const Rud* found = f.find(r.uuid);
            if (!found) break;
            track.push_back(*found);
        }
    }
}

Millis MergeEnv::timestamp_at(int step) const {
    return instance_->frames.front().timestamp + static_cast<Millis>(std::llround(step * config_.timestep * 1000.0));
}

Rud MergeEnv::replay(const Uuid& id, int step) const {
    auto it = tracks_.find(id);
    if (it == tracks_.end()) throw EnvError("replay: vehicle is not part of the instance");
    const auto& track = it->second;
    if (step < static_cast<int>(track.size())) return track[static_cast<std::size_t>(step)];

    Rud out = track.back();
    KinematicState k = kinematics_of(out);
    k.acceleration = 0.0;
    const int extra = step - static_cast<int>(track.size()) + 1;
    k = advance(k, extra * config_.timestep);
    out.position = k.position;
    out.acceleration = 0.0;
    out.timestamp = timestamp_at(step);
    return out;
}

EnvState MergeEnv::reset() const {
    const auto& first = instance_->frames.front();
    EnvState s;
    s.merging = *first.find(instance_->roles.merging);
    s.preceding = replay(instance_->roles.preceding, 0);
    s.following = replay(instance_->roles.following, 0);
    for (const auto& id : bystander_ids_) s.bystanders.push_back(replay(id, 0));
    s.geometry = instance_->geometry;
    s.outcome = detect_outcome(s, config_);
    s.done = s.outcome != Outcome::InProgress;
    return s;
}

EnvState MergeEnv::step(const EnvState& state, Action action) const {
    if (state.done) throw EnvError("step called on a finished episode");
    EnvState next = state;
    Rud m = apply_action(state.merging, action, config_);
    const KinematicState k = advance(kinematics_of(m), config_.timestep);
    m.position = k.position;
    m.speed = k.speed;
    next.steps = state.steps + 1;
    m.timestamp = timestamp_at(next.steps);
    m.lane = next.geometry.lane_of(m.position.y);
    next.merging = m;
    next.preceding = replay(instance_->roles.preceding, next.steps);
    next.following = replay(instance_->roles.following, next.steps);
    for (std::size_t i = 0; i < bystander_ids_.size(); ++i) next.bystanders[i] = replay(bystander_ids_[i], next.steps);
    next.outcome = detect_outcome(next, config_);
    next.done = next.outcome != Outcome::InProgress;
    return next;
}

}  // namespace lanemerge::env
