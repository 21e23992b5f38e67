#pragma once

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanemerge/core/node.hpp"
#include "lanemerge/env/merge_env.hpp"
#include "lanemerge/orchestrator/knowledge_base.hpp"
#include "lanemerge/rl/agent.hpp"

namespace lanemerge::orchestrator {

class OrchestratorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A rectangle of road where merges are coordinated, with its lane layout.
struct CoordinationZone {
    int id = 0;
    env::LaneGeometry geometry;
    double x_min = -200.0;
    double x_max = 400.0;

    /// Centre inside the x range and within half a lane of the road edges.
    [[nodiscard]] bool contains(const Rud& r) const;
};

/// `count` zones translated laterally by multiples of `offset_y`.
std::vector<CoordinationZone> make_zones(int count, double offset_y, const env::LaneGeometry& base = {},
                                         double x_min = -200.0, double x_max = 400.0);

struct MergeSituation {
    int zone = 0;
    Uuid merging;
    Uuid preceding;
    Uuid following;
    Millis detected_at = 0;
    Millis trigger_timestamp = 0;
    bool operator==(const MergeSituation&) const = default;
};

/// A situation exists iff a connected vehicle is on the zone's merge lane with
/// target-lane vehicles both ahead of and behind it. If several merge-lane
/// vehicles qualify the one furthest downstream is chosen. Roles are nearest
/// ahead / nearest behind; either may be unconnected.
std::optional<MergeSituation> detect_situation(std::span<const Rud> ruds, const CoordinationZone& zone, Millis now);

enum class Cadence { Deviation, EveryUpdate };

struct OrchestratorConfig {
    double d_safe = 10.0;
    double aux_decel = -0.5;
    double aux_duration_s = 2.0;
    int retry_limit = 3;
    Cadence cadence = Cadence::Deviation;
    double deviation_m = 2.0;
    double deviation_mps = 1.0;
    Millis staleness_ms = 500;
    env::EnvConfig env;
    rl::StateNorms norms;
    rl::RewardMode reward_mode = rl::RewardMode::Positive;
    std::uint64_t seed = 1;
};

struct AuditResult {
    bool ok = true;
    std::string reason;
    double min_gap = 0.0;  // smallest bumper gap while on the target lane (inf if never)
};

/// Safety audit of a rollout: it must end in Success, never overlap another
/// footprint, stay inside the road, and keep both bumper gaps >= d_safe at
/// every waypoint where the merging vehicle is on the target lane.
AuditResult audit(const rl::RolloutResult& rollout, double d_safe);

/// Unconnected RUDs whose footprint overlaps a connected one are duplicate
/// detections of that vehicle; they are removed, order preserved.
std::vector<Rud> drop_duplicates(std::span<const Rud> ruds);

/// One-frame merge instance holding every zone RUD extrapolated to `t_ref`.
/// Throws OrchestratorError if a role vehicle is absent.
env::MergeInstance snapshot_instance(const MergeSituation& situation, std::span<const Rud> zone_ruds,
                                     const CoordinationZone& zone, Millis t_ref, double timestep);

/// Fixed deceleration profile asking a following vehicle to open the gap.
TrajectoryRecommendation gap_opening_profile(const Rud& following, Uuid id, Millis created_at, Millis origin_ts,
                                             double decel, double duration_s, double timestep);

struct Plan {
    std::vector<TrajectoryRecommendation> recommendations;  // merging first, then the auxiliary one if any
    rl::RolloutResult rollout;
    AuditResult audit;
};

/// Plans a merge from the current knowledge base. Throws OrchestratorError
/// when a role vehicle is missing or the snapshot is stale. A plan that fails
/// the audit carries no recommendations.
Plan recommend(const MergeSituation& situation, const KnowledgeBase& kb, const rl::QNetwork& policy,
               const OrchestratorConfig& config, const CoordinationZone& zone, Millis now, std::mt19937_64& id_rng,
               bool include_auxiliary = true);

enum class RecoStatus { Sent, Accepted, Rejected, Aborted, Superseded };
std::string_view to_string(RecoStatus s);

struct RecommendationState {
    Uuid id;
    Uuid target;
    int zone = 0;
    bool auxiliary = false;
    RecoStatus status = RecoStatus::Sent;
    int retry_count = 0;  // consecutive rejects/aborts preceding this recommendation
    std::vector<Waypoint> waypoints;
};

/// The traffic orchestrator as a service node: consumes "gdm.ruds" and
/// "feedback", publishes "recommendations.<uuid>".
class Orchestrator final : public ServiceNode {
public:
    Orchestrator(std::shared_ptr<const rl::QNetwork> policy, OrchestratorConfig config,
                 std::vector<CoordinationZone> zones, std::string name = "orchestrator");

    [[nodiscard]] std::string name() const override { return name_; }
    [[nodiscard]] ClientRole role() const override { return ClientRole::Orchestrator; }
    [[nodiscard]] std::vector<TopicSubscription> subscriptions() const override;
    void on_message(const V2XEnvelope& envelope, Millis now, Outbox& out) override;

    void on_rud(const Rud& rud, Millis now, Outbox& out);
    /// Throws OrchestratorError for an unknown recommendation id.
    void handle_feedback(const ManeuverFeedback& fb, Millis now, Outbox& out);

    [[nodiscard]] const KnowledgeBase& knowledge_base() const { return kb_; }
    [[nodiscard]] const RecommendationState* state(const Uuid& id) const;
    [[nodiscard]] const std::map<Uuid, RecommendationState>& states() const { return states_; }
    /// Every plan that passed the audit and was sent, in emission order.
    [[nodiscard]] const std::vector<Plan>& emitted() const { return emitted_; }
    void keep_emitted(bool keep) { keep_emitted_ = keep; }
    [[nodiscard]] std::uint64_t rejected_plans() const { return rejected_plans_; }
    [[nodiscard]] std::uint64_t failed_situations() const { return failed_.size(); }

private:
    struct Active {
        Uuid reco;
        int consecutive_rejects = 0;
        bool aux_sent = false;
    };
    const CoordinationZone* zone_of(const Rud& r) const;
    bool needs_plan(const Rud& merging, Millis now) const;
    void plan_and_send(const MergeSituation& s, const CoordinationZone& zone, const std::string& origin, Millis now,
                       int retries, Outbox& out);

    std::shared_ptr<const rl::QNetwork> policy_;
    OrchestratorConfig config_;
    std::vector<CoordinationZone> zones_;
    std::string name_;
    KnowledgeBase kb_;
    std::mt19937_64 id_rng_;
    std::map<Uuid, RecommendationState> states_;
    std::map<Uuid, Active> active_;      // by merging vehicle
    std::map<Uuid, std::string> origin_of_reco_;
    std::set<Uuid> failed_;              // merging vehicles past the retry limit
    std::vector<Plan> emitted_;
    bool keep_emitted_ = false;
    std::uint64_t rejected_plans_ = 0;
    std::optional<Millis> last_eviction_;
};

}  // namespace lanemerge::orchestrator
