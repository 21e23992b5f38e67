#include "lanemerge/core/kinematics.hpp"

#include <cmath>

namespace lanemerge {

KinematicState advance(const KinematicState& s, double dt) {
    KinematicState out = s;
    if (dt <= 0.0) return out;

    double moving = dt;
    if (s.acceleration < 0.0 && s.speed + s.acceleration * dt < 0.0) {
        moving = s.speed / -s.acceleration;
    }
    const double distance = s.speed * moving + 0.5 * s.acceleration * moving * moving;
    out.position.x += distance * std::cos(s.heading);
    out.position.y += distance * std::sin(s.heading);
    out.speed = std::max(0.0, s.speed + s.acceleration * dt);
    return out;
}

}  // namespace lanemerge
