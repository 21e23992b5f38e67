#include "lanemerge/core/trajectory.hpp"

#include <algorithm>
#include <cmath>

namespace lanemerge {

KinematicState state_on_plan(const std::vector<Waypoint>& w, Millis t) {
    if (w.empty()) throw InvariantError("state_on_plan: empty waypoint list");
    auto heading_between = [](const Waypoint& a, const Waypoint& b) {
        const double dx = b.position.x - a.position.x;
        const double dy = b.position.y - a.position.y;
        return (dx == 0.0 && dy == 0.0) ? 0.0 : normalize_heading(std::atan2(dy, dx));
    };
    if (t <= w.front().timestamp) {
        const double h = w.size() > 1 ? heading_between(w[0], w[1]) : 0.0;
        return {w.front().position, w.front().speed, w.front().acceleration, h};
    }
    if (t >= w.back().timestamp) {
        const Waypoint& last = w.back();
        KinematicState k{last.position, last.speed, 0.0, 0.0};
        return advance(k, static_cast<double>(t - last.timestamp) / 1000.0);
    }
    const auto hi = std::upper_bound(w.begin(), w.end(), t, [](Millis v, const Waypoint& p) { return v < p.timestamp; });
    const Waypoint& b = *hi;
    const Waypoint& a = *(hi - 1);
    const double span = static_cast<double>(b.timestamp - a.timestamp);
    const double f = span > 0 ? static_cast<double>(t - a.timestamp) / span : 1.0;
    return {{a.position.x + f * (b.position.x - a.position.x), a.position.y + f * (b.position.y - a.position.y)},
            a.speed + f * (b.speed - a.speed), a.acceleration, heading_between(a, b)};
}

}  // namespace lanemerge
