#pragma once

#include <memory>

#include "lanemerge/env/merge_env.hpp"
#include "lanemerge/rl/qnetwork.hpp"
#include "lanemerge/rl/state_encoder.hpp"

namespace lanemerge::testing {

inline Rud vehicle(std::uint64_t id, double x, double y, double speed, bool connected = true) {
    Rud r;
    r.uuid = Uuid(0x1000 + id, id);
    r.position = {x, y};
    r.speed = speed;
    r.connected = connected;
    r.length = 4.5;
    r.width = 1.8;
    return r;
}

/// Constant-velocity instance: merging on the merge lane at `m_x`, preceding
/// and following on the target lane, optional bystander behind the follower.
inline env::MergeInstance straight_instance(double m_x, double p_x, double f_x, double v = 20.0, int frames = 70,
                                            bool bystander = false, Millis t0 = 1'700'000'000'000) {
    env::MergeInstance inst;
    inst.instance_id = "straight";
    inst.timestep = 0.1;
    const env::LaneGeometry g;
    inst.geometry = g;
    const Rud m = vehicle(1, m_x, g.merge_lane_y, v);
    const Rud p = vehicle(2, p_x, g.target_lane_y, v);
    const Rud f = vehicle(3, f_x, g.target_lane_y, v);
    const Rud b = vehicle(4, f_x - 30, g.target_lane_y, v, false);
    inst.roles = {m.uuid, p.uuid, f.uuid};
    for (int k = 0; k < frames; ++k) {
        env::Frame fr;
        fr.timestamp = t0 + k * 100;
        for (Rud r : bystander ? std::vector<Rud>{m, p, f, b} : std::vector<Rud>{m, p, f}) {
            r.position.x += r.speed * 0.1 * k;
            r.timestamp = fr.timestamp;
            r.lane = g.lane_of(r.position.y);
            fr.ruds.push_back(r);
        }
        inst.frames.push_back(fr);
    }
    return inst;
}

}  // namespace lanemerge::testing

namespace lanemerge::testing {

/// Q-network that always prefers `action`: zero trunk, output bias only.
inline rl::QNetwork constant_policy(env::Action action) {
    const int in = static_cast<int>(rl::kStateDim);
    rl::ParameterSet layers(2);
    layers[0].weights = Eigen::MatrixXd::Zero(4, in);
    layers[0].bias = Eigen::VectorXd::Zero(4);
    layers[1].weights = Eigen::MatrixXd::Zero(5, 4);
    layers[1].bias = Eigen::VectorXd::Zero(5);
    layers[1].bias(static_cast<int>(action)) = 1.0;
    return rl::QNetwork::from_parameters(rl::Variant::Plain, {in, 4}, 5, std::move(layers));
}

}  // namespace lanemerge::testing
