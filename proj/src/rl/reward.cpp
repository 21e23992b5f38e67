#include "lanemerge/rl/reward.hpp"

#include <cmath>

namespace lanemerge::rl {

std::string_view to_string(RewardMode m) { return m == RewardMode::Positive ? "positive" : "negative"; }

double shaping(const env::EnvState& s, const RewardWeights& w) {
    Vec2 target;
    if (env::bumper_gap(s.following, s.preceding) > 0.0) {
        target = env::merge_point(s.preceding, s.following, s.geometry);
    } else {
        // Gap vehicles overlap; aim between their centres.
        target = {(s.preceding.position.x + s.following.position.x) / 2.0, s.geometry.target_lane_y};
    }
    const double d = std::hypot(s.merging.position.x - target.x, s.merging.position.y - target.y);
    const double gap_speed = 0.5 * (s.preceding.speed + s.following.speed);
    return w.distance / (1.0 + d) + w.speed / (1.0 + std::abs(s.merging.speed - gap_speed)) +
           w.acceleration / (1.0 + std::abs(s.merging.acceleration));
}

double reward(const env::EnvState& s, RewardMode mode, const RewardWeights& w) {
    const double positive = s.outcome == env::Outcome::Success ? 1.0 : shaping(s, w);
    return mode == RewardMode::Positive ? positive : positive - 1.0;
}

}  // namespace lanemerge::rl
