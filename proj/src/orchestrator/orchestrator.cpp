#include "lanemerge/orchestrator/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lanemerge/core/clock.hpp"
#include "lanemerge/core/kinematics.hpp"
#include "lanemerge/core/trajectory.hpp"

namespace lanemerge::orchestrator {

bool CoordinationZone::contains(const Rud& r) const {
    const double half = geometry.lane_width / 2.0;
    return r.position.x >= x_min && r.position.x <= x_max && r.position.y >= geometry.road_min_y() - half &&
           r.position.y <= geometry.road_max_y() + half;
}

std::vector<CoordinationZone> make_zones(int count, double offset_y, const env::LaneGeometry& base, double x_min,
                                         double x_max) {
    if (count <= 0) throw std::invalid_argument("zone count must be positive");
    std::vector<CoordinationZone> zones;
    for (int i = 0; i < count; ++i) zones.push_back({i, base.shifted(i * offset_y), x_min, x_max});
    return zones;
}

std::optional<MergeSituation> detect_situation(std::span<const Rud> ruds, const CoordinationZone& zone, Millis now) {
    const auto& g = zone.geometry;
    const Rud* merging = nullptr;
    for (const auto& r : ruds) {
        if (!r.connected || !zone.contains(r) || !g.on_merge_lane(r.position.y)) continue;
        if (merging == nullptr || r.position.x > merging->position.x ||
            (r.position.x == merging->position.x && r.uuid < merging->uuid)) {
            merging = &r;
        }
    }
    if (merging == nullptr) return std::nullopt;
    const Rud* ahead = nullptr;
    const Rud* behind = nullptr;
    const double mx = merging->position.x;
    for (const auto& r : ruds) {
        if (!zone.contains(r) || !g.on_target_lane(r.position.y)) continue;
        const double x = r.position.x;
        if (x > mx && (ahead == nullptr || x < ahead->position.x || (x == ahead->position.x && r.uuid < ahead->uuid))) {
            ahead = &r;
        }
        if (x < mx &&
            (behind == nullptr || x > behind->position.x || (x == behind->position.x && r.uuid < behind->uuid))) {
            behind = &r;
        }
    }
    if (ahead == nullptr || behind == nullptr) return std::nullopt;
    return MergeSituation{zone.id, merging->uuid, ahead->uuid, behind->uuid, now, merging->timestamp};
}

AuditResult audit(const rl::RolloutResult& rollout, double d_safe) {
    AuditResult a;
    a.min_gap = std::numeric_limits<double>::infinity();
    if (rollout.outcome != env::Outcome::Success) {
        a.ok = false;
        a.reason = "rollout ended in " + std::string(env::to_string(rollout.outcome));
    }
    for (const auto& s : rollout.states) {
        const auto& m = s.merging;
        const auto& g = s.geometry;
        if (m.position.y < g.road_min_y() || m.position.y > g.road_max_y()) {
            a.ok = false;
            a.reason = "waypoint outside the road";
        }
        bool overlap = env::footprints_overlap(m, s.preceding) || env::footprints_overlap(m, s.following);
        for (const auto& b : s.bystanders) overlap = overlap || env::footprints_overlap(m, b);
        if (overlap) {
            a.ok = false;
            a.reason = "footprint overlap";
        }
        if (g.on_target_lane(m.position.y)) {
            const double gap = std::min(env::bumper_gap(s.following, m), env::bumper_gap(m, s.preceding));
            a.min_gap = std::min(a.min_gap, gap);
            if (gap < d_safe) {
                a.ok = false;
                a.reason = "gap below safety distance";
            }
        }
    }
    return a;
}

std::vector<Rud> drop_duplicates(std::span<const Rud> ruds) {
    std::vector<Rud> out;
    for (const auto& r : ruds) {
        const bool duplicate = !r.connected && std::any_of(ruds.begin(), ruds.end(), [&](const Rud& c) {
            return c.connected && env::footprints_overlap(r, c);
        });
        if (!duplicate) out.push_back(r);
    }
    return out;
}

env::MergeInstance snapshot_instance(const MergeSituation& situation, std::span<const Rud> zone_ruds,
                                     const CoordinationZone& zone, Millis t_ref, double timestep) {
    env::MergeInstance inst;
    inst.instance_id = "snapshot-" + std::to_string(zone.id) + "-" + std::to_string(t_ref);
    inst.timestep = timestep;
    inst.roles = {situation.merging, situation.preceding, situation.following};
    inst.geometry = zone.geometry;
    env::Frame f;
    f.timestamp = t_ref;
    for (const auto& r0 : zone_ruds) {
        Rud r = r0;
        if (r.timestamp < t_ref) {
            const auto k = advance(kinematics_of(r), static_cast<double>(t_ref - r.timestamp) / 1000.0);
            r.position = k.position;
            r.speed = k.speed;
        }
        r.timestamp = t_ref;
        r.lane = zone.geometry.lane_of(r.position.y);
        f.ruds.push_back(r);
    }
    inst.frames.push_back(std::move(f));
    const auto& frame = inst.frames.front();
    if (!frame.find(situation.merging) || !frame.find(situation.preceding) || !frame.find(situation.following)) {
        throw OrchestratorError("snapshot misses a role vehicle");
    }
    return inst;
}

TrajectoryRecommendation gap_opening_profile(const Rud& following, Uuid id, Millis created_at, Millis origin_ts,
                                             double decel, double duration_s, double timestep) {
    TrajectoryRecommendation reco;
    reco.recommendation_id = id;
    reco.target_uuid = following.uuid;
    reco.created_at = created_at;
    reco.origin_rud_timestamp = origin_ts;
    const int steps = static_cast<int>(std::lround(duration_s / timestep));
    KinematicState k{following.position, following.speed, decel, 0.0};
    for (int i = 0; i <= steps; ++i) {
        const auto s = advance(k, i * timestep);
        const double a = i < steps && s.speed > 0.0 ? decel : 0.0;
        reco.waypoints.push_back({following.timestamp + static_cast<Millis>(std::llround(i * timestep * 1000.0)),
                                  s.position, s.speed, a});
    }
    return reco;
}

Plan recommend(const MergeSituation& situation, const KnowledgeBase& kb, const rl::QNetwork& policy,
               const OrchestratorConfig& config, const CoordinationZone& zone, Millis now, std::mt19937_64& id_rng,
               bool include_auxiliary) {
    std::vector<Rud> zone_ruds;
    for (const auto& r : kb.fresh(now)) {
        if (zone.contains(r)) zone_ruds.push_back(r);
    }
    if (zone_ruds.empty()) throw OrchestratorError("knowledge base holds no fresh RUD for the zone");
    zone_ruds = drop_duplicates(zone_ruds);
    const auto merging = std::find_if(zone_ruds.begin(), zone_ruds.end(),
                                      [&](const Rud& r) { return r.uuid == situation.merging; });
    if (merging == zone_ruds.end()) throw OrchestratorError("merging vehicle missing from the knowledge base");
    const Millis t_ref = merging->timestamp;

    env::MergeInstance inst = snapshot_instance(situation, zone_ruds, zone, t_ref, config.env.timestep);
    const Rud following = *inst.frames.front().find(situation.following);
    const env::MergeEnv environment(std::make_shared<const env::MergeInstance>(std::move(inst)), config.env);

    Plan plan;
    const Uuid id = Uuid::generate(id_rng);
    try {
        plan.rollout = rl::policy_rollout(policy, environment, config.norms, id, now, config.reward_mode);
    } catch (const env::EnvError& e) {
        plan.audit = {false, std::string("rollout failed: ") + e.what(), 0.0};
        return plan;
    }
    plan.audit = audit(plan.rollout, config.d_safe);
    if (!plan.audit.ok) return plan;
    plan.rollout.recommendation.origin_rud_timestamp = t_ref;
    plan.recommendations.push_back(plan.rollout.recommendation);
    if (include_auxiliary && following.connected) {
        plan.recommendations.push_back(gap_opening_profile(following, Uuid::generate(id_rng), now, t_ref,
                                                           config.aux_decel, config.aux_duration_s,
                                                           config.env.timestep));
    }
    return plan;
}

std::string_view to_string(RecoStatus s) {
    switch (s) {
        case RecoStatus::Sent: return "sent";
        case RecoStatus::Accepted: return "accepted";
        case RecoStatus::Rejected: return "rejected";
        case RecoStatus::Aborted: return "aborted";
        case RecoStatus::Superseded: return "superseded";
    }
    return "?";
}

Orchestrator::Orchestrator(std::shared_ptr<const rl::QNetwork> policy, OrchestratorConfig config,
                           std::vector<CoordinationZone> zones, std::string name)
    : policy_(std::move(policy)),
      config_(std::move(config)),
      zones_(std::move(zones)),
      name_(std::move(name)),
      kb_(config_.staleness_ms),
      id_rng_(config_.seed) {
    if (!policy_) throw std::invalid_argument("orchestrator needs a policy network");
    if (zones_.empty()) throw std::invalid_argument("orchestrator needs at least one coordination zone");
    if (config_.retry_limit < 0) throw std::invalid_argument("retry limit must be non-negative");
}

std::vector<TopicSubscription> Orchestrator::subscriptions() const {
    return {{kTopicGdm, std::nullopt}, {kTopicFeedback, std::nullopt}};
}

void Orchestrator::on_message(const V2XEnvelope& envelope, Millis now, Outbox& out) {
    if (const auto* rud = std::get_if<Rud>(&envelope.payload)) {
        on_rud(*rud, now, out);
    } else if (const auto* fb = std::get_if<ManeuverFeedback>(&envelope.payload)) {
        try {
            handle_feedback(*fb, now, out);
        } catch (const OrchestratorError& e) {
            LogRecord rec{name_, "feedback_unknown", fb->recommendation_id.str(), now, {}};
            rec.attributes["error"] = std::string(e.what());
            out.log(std::move(rec));
        }
    }
}

const RecommendationState* Orchestrator::state(const Uuid& id) const {
    const auto it = states_.find(id);
    return it == states_.end() ? nullptr : &it->second;
}

const CoordinationZone* Orchestrator::zone_of(const Rud& r) const {
    for (const auto& z : zones_) {
        if (z.contains(r)) return &z;
    }
    return nullptr;
}

bool Orchestrator::needs_plan(const Rud& merging, Millis /*now*/) const {
    const auto it = active_.find(merging.uuid);
    if (it == active_.end()) return true;
    if (config_.cadence == Cadence::EveryUpdate) return true;
    const auto& st = states_.at(it->second.reco);
    if (st.status == RecoStatus::Rejected || st.status == RecoStatus::Aborted) return true;
    const auto k = state_on_plan(st.waypoints, merging.timestamp);
    const double d = std::hypot(k.position.x - merging.position.x, k.position.y - merging.position.y);
    return d > config_.deviation_m || std::abs(k.speed - merging.speed) > config_.deviation_mps;
}

void Orchestrator::on_rud(const Rud& rud, Millis now, Outbox& out) {
    // Departed vehicles would otherwise pile up and slow every fresh() scan.
    if (!last_eviction_ || now - *last_eviction_ >= config_.staleness_ms) {
        kb_.evict_stale(now);
        last_eviction_ = now;
    }
    kb_.upsert(rud);
    if (!rud.connected) return;
    const CoordinationZone* zone = zone_of(rud);
    if (zone == nullptr) return;
    if (!zone->geometry.on_merge_lane(rud.position.y)) {
        active_.erase(rud.uuid);  // merged or never merging
        return;
    }
    if (failed_.contains(rud.uuid) || !needs_plan(rud, now)) return;
    std::vector<Rud> zone_ruds;
    for (const auto& r : kb_.fresh(now)) {
        if (zone->contains(r)) zone_ruds.push_back(r);
    }
    zone_ruds = drop_duplicates(zone_ruds);
    const auto situation = detect_situation(zone_ruds, *zone, now);
    if (!situation || situation->merging != rud.uuid) return;
    const auto it = active_.find(rud.uuid);
    const int retries = it == active_.end() ? 0 : it->second.consecutive_rejects;
    plan_and_send(*situation, *zone, rud_key(rud.uuid, rud.timestamp), now, retries, out);
}

void Orchestrator::plan_and_send(const MergeSituation& s, const CoordinationZone& zone, const std::string& origin,
                                 Millis now, int retries, Outbox& out) {
    auto it = active_.find(s.merging);
    const bool aux_sent = it != active_.end() && it->second.aux_sent;
    Plan plan;
    const auto t0 = monotonic_us();
    try {
        plan = recommend(s, kb_, *policy_, config_, zone, now, id_rng_, !aux_sent);
    } catch (const OrchestratorError& e) {
        plan.audit = {false, e.what(), 0.0};
    }
    const auto compute_us = monotonic_us() - t0;
    if (!plan.audit.ok) {
        ++rejected_plans_;
        LogRecord rec{name_, "reco_rejected", origin, now, {}};
        rec.attributes["reason"] = plan.audit.reason;
        rec.attributes["zone"] = static_cast<std::int64_t>(zone.id);
        rec.attributes["compute_us"] = static_cast<std::int64_t>(compute_us);
        out.log(std::move(rec));
        return;
    }
    if (it != active_.end()) {
        auto& old = states_.at(it->second.reco);
        old.status = RecoStatus::Superseded;
        std::vector<Waypoint>().swap(old.waypoints);  // only the active plan is consulted
    } else {
        it = active_.emplace(s.merging, Active{}).first;
    }
    for (const auto& reco : plan.recommendations) {
        const bool aux = reco.target_uuid != s.merging;
        states_[reco.recommendation_id] =
            RecommendationState{reco.recommendation_id, reco.target_uuid, zone.id, aux, RecoStatus::Sent, retries,
                                reco.waypoints};
        LogRecord rec{name_, "reco_computed", reco.recommendation_id.str(), now, {}};
        rec.attributes["origin"] = origin;
        rec.attributes["target"] = reco.target_uuid.str();
        rec.attributes["zone"] = static_cast<std::int64_t>(zone.id);
        rec.attributes["auxiliary"] = aux;
        rec.attributes["waypoints"] = static_cast<std::int64_t>(reco.waypoints.size());
        rec.attributes["retry"] = static_cast<std::int64_t>(retries);
        rec.attributes["compute_us"] = static_cast<std::int64_t>(compute_us);
        out.log(std::move(rec));
        out.publish(recommendation_topic(reco.target_uuid), reco);
        if (aux) it->second.aux_sent = true;
    }
    it->second.reco = plan.recommendations.front().recommendation_id;
    it->second.consecutive_rejects = retries;
    if (keep_emitted_) emitted_.push_back(std::move(plan));
}

void Orchestrator::handle_feedback(const ManeuverFeedback& fb, Millis now, Outbox& out) {
    const auto st_it = states_.find(fb.recommendation_id);
    if (st_it == states_.end()) throw OrchestratorError("feedback for unknown recommendation " + fb.recommendation_id.str());
    RecommendationState& st = st_it->second;
    LogRecord rec{name_, "feedback_received", st.id.str(), now, {}};
    rec.attributes["verdict"] = std::string(lanemerge::to_string(fb.verdict));
    out.log(std::move(rec));
    if (st.status == RecoStatus::Superseded) return;  // answers to an outdated plan change nothing
    if (fb.verdict == Verdict::Accept) {
        st.status = RecoStatus::Accepted;
        if (auto a = active_.find(st.target); a != active_.end() && a->second.reco == st.id) {
            a->second.consecutive_rejects = 0;
        }
        return;
    }
    st.status = fb.verdict == Verdict::Reject ? RecoStatus::Rejected : RecoStatus::Aborted;
    if (st.auxiliary) return;
    auto a = active_.find(st.target);
    if (a == active_.end() || a->second.reco != st.id) return;
    const int rejects = a->second.consecutive_rejects + 1;
    a->second.consecutive_rejects = rejects;
    if (rejects > config_.retry_limit) {
        failed_.insert(st.target);
        active_.erase(a);
        LogRecord fail{name_, "situation_failed", st.target.str(), now, {}};
        fail.attributes["rejects"] = static_cast<std::int64_t>(rejects);
        out.log(std::move(fail));
        return;
    }
    const auto merging = kb_.get(st.target);
    const CoordinationZone* zone = merging ? zone_of(*merging) : nullptr;
    if (zone == nullptr) return;
    std::vector<Rud> zone_ruds;
    for (const auto& r : kb_.fresh(now)) {
        if (zone->contains(r)) zone_ruds.push_back(r);
    }
    zone_ruds = drop_duplicates(zone_ruds);
    const auto situation = detect_situation(zone_ruds, *zone, now);
    if (!situation || situation->merging != st.target) return;
    plan_and_send(*situation, *zone, rud_key(merging->uuid, merging->timestamp), now, rejects, out);
}

}  // namespace lanemerge::orchestrator
