#pragma once

#include "lanemerge/core/types.hpp"

namespace lanemerge {

struct KinematicState {
    Vec2 position;
    double speed = 0.0;
    double acceleration = 0.0;
    double heading = 0.0;
};

/// Uniformly accelerated rectilinear motion along `heading` for `dt` seconds.
///
/// Speed never goes negative: under braking the vehicle stops at t = v/|a| and
/// stays put for the remainder of the interval. Acceleration and heading are
/// carried unchanged.
KinematicState advance(const KinematicState& s, double dt);

inline KinematicState kinematics_of(const RoadUserDescription& r) {
    return {r.position, r.speed, r.acceleration, r.heading};
}

}  // namespace lanemerge
