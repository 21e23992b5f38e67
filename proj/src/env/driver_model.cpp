#include "lanemerge/env/driver_model.hpp"

#include <algorithm>
#include <cmath>

namespace lanemerge::env {

GapAcceptanceDriver::GapAcceptanceDriver(const HumanDriverParams& params, std::mt19937_64& rng) : params_(params) {
    std::normal_distribution<double> gap(params.accepted_gap_mean, params.accepted_gap_sigma);
    std::normal_distribution<double> bias(params.preceding_bias_mean, params.preceding_bias_sigma);
    accepted_gap_ = std::max(params.accepted_gap_min, gap(rng));
    bias_ = bias(rng);
}

Action GapAcceptanceDriver::decide(const EnvState& s, const EnvConfig& config, std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < params_.random_action_prob) {
        std::uniform_int_distribution<std::size_t> pick(0, kActionCount - 1);
        return kAllActions[pick(rng)];
    }

    const auto& m = s.merging;
    double target_x = s.following.position.x;
    if (bumper_gap(s.following, s.preceding) > 0.0) target_x = merge_point(s.preceding, s.following, s.geometry).x;
    target_x += bias_;

    const double gap_speed = 0.5 * (s.preceding.speed + s.following.speed);
    const double wanted_accel =
        std::clamp(params_.position_gain * (target_x - m.position.x) + params_.speed_gain * (gap_speed - m.speed),
                   config.accel_min, config.accel_max);

    const bool on_target = s.geometry.on_target_lane(m.position.y);
    const bool gap_ok =
        bumper_gap(s.following, m) >= accepted_gap_ && bumper_gap(m, s.preceding) >= accepted_gap_;
    const double wanted_y = (on_target || gap_ok) ? s.geometry.target_lane_y : s.geometry.merge_lane_y;
    const double wanted_heading =
        std::clamp(params_.lateral_gain * (wanted_y - m.position.y), -config.heading_max, config.heading_max);
    const double heading = heading_deviation(m.heading);

    if (wanted_heading < heading - config.heading_step / 2.0) return Action::TurnLeft;
    if (wanted_heading > heading + config.heading_step / 2.0) return Action::TurnRight;
    if (wanted_accel > m.acceleration + config.accel_step / 2.0) return Action::Accelerate;
    if (wanted_accel < m.acceleration - config.accel_step / 2.0) return Action::Decelerate;
    return Action::DoNothing;
}

}  // namespace lanemerge::env
