#pragma once

#include <array>
#include <cstddef>
#include <limits>

#include "lanemerge/core/types.hpp"

namespace lanemerge::rl {

inline constexpr std::size_t kFeaturesPerVehicle = 7;
inline constexpr std::size_t kStateDim = 3 * kFeaturesPerVehicle;

using StateVector = std::array<double, kStateDim>;

/// Per-vehicle block layout.
///  Area:       [dx, dy, speed, accel, heading deviation, length*width, merge-lane end ahead]
///  Dimensions: [dx, dy, speed, accel, heading deviation, length, width]
enum class SizeEncoding { Area, Dimensions };

struct StateNorms {
    double position = 100.0;  // longitudinal metres
    double lateral = 5.0;     // lateral metres
    double speed = 30.0;
    double acceleration = 4.0;
    double area = 10.0;       // square metres
    double dimension = 5.0;   // metres, Dimensions encoding only
    double heading = 0.35;    // radians
    double lane_end = 200.0;  // metres to the merge-lane end, Area encoding only
    double lane_end_cap = 2.0;
    SizeEncoding size = SizeEncoding::Area;
};

/// Order-fixed (merging, preceding, following) features with positions relative
/// to the merging vehicle. An unbounded merge lane (infinite end) saturates at
/// `lane_end_cap`. Throws InvariantError on non-finite input.
StateVector encode_state(const Rud& merging, const Rud& preceding, const Rud& following, const StateNorms& norms = {},
                         double merge_lane_end_x = std::numeric_limits<double>::infinity());

}  // namespace lanemerge::rl
