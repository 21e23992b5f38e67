#pragma once

#include <vector>

#include "lanemerge/core/kinematics.hpp"
#include "lanemerge/core/types.hpp"

namespace lanemerge {

/// State prescribed by a waypoint list at time `t`. Between waypoints position
/// and speed are interpolated linearly and the heading follows the segment.
/// Before the first waypoint the first one is returned; past the last one the
/// vehicle holds the final speed along the road axis with zero acceleration.
/// Throws InvariantError on an empty list.
KinematicState state_on_plan(const std::vector<Waypoint>& waypoints, Millis t);

}  // namespace lanemerge
