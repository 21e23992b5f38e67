#include "lanemerge/rl/state_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lanemerge::rl {

namespace {

void check_finite(const Rud& r) {
    for (double v : {r.position.x, r.position.y, r.speed, r.acceleration, r.heading, r.length, r.width}) {
        if (!std::isfinite(v)) throw InvariantError("encode_state: non-finite vehicle description");
    }
}

void write_block(double* out, const Rud& r, Vec2 origin, double lane_end_x, const StateNorms& n) {
    out[0] = (r.position.x - origin.x) / n.position;
    out[1] = (r.position.y - origin.y) / n.lateral;
    out[2] = r.speed / n.speed;
    out[3] = r.acceleration / n.acceleration;
    if (n.size == SizeEncoding::Area) {
        out[4] = heading_deviation(r.heading) / n.heading;
        out[5] = r.length * r.width / n.area;
        out[6] = std::min((lane_end_x - r.position.x) / n.lane_end, n.lane_end_cap);
    } else {
        out[4] = heading_deviation(r.heading) / n.heading;
        out[5] = r.length / n.dimension;
        out[6] = r.width / n.dimension;
    }
}

}  // namespace

StateVector encode_state(const Rud& merging, const Rud& preceding, const Rud& following, const StateNorms& norms,
                         double merge_lane_end_x) {
    if (std::isnan(merge_lane_end_x)) throw InvariantError("encode_state: merge lane end is NaN");
    check_finite(merging);
    check_finite(preceding);
    check_finite(following);
    StateVector s{};
    const Vec2 origin = merging.position;
    write_block(s.data(), merging, origin, merge_lane_end_x, norms);
    write_block(s.data() + kFeaturesPerVehicle, preceding, origin, merge_lane_end_x, norms);
    write_block(s.data() + 2 * kFeaturesPerVehicle, following, origin, merge_lane_end_x, norms);
    return s;
}

}  // namespace lanemerge::rl
