#pragma once

#include <random>

#include "lanemerge/env/merge_env.hpp"

namespace lanemerge::env {

/// Parameters of the noisy gap-acceptance driver used for human-baseline traces.
struct HumanDriverParams {
    double accepted_gap_mean = 6.0;   // metres of bumper gap a driver accepts
    double accepted_gap_sigma = 3.0;
    double accepted_gap_min = 1.5;
    double preceding_bias_mean = 3.0;  // humans aim ahead of the gap centre
    double preceding_bias_sigma = 3.0;
    double position_gain = 0.08;
    double speed_gain = 0.6;
    double lateral_gain = 0.12;
    double random_action_prob = 0.05;
};

/// A sampled human driver. Stateless between steps apart from its sampled traits.
class GapAcceptanceDriver {
public:
    GapAcceptanceDriver(const HumanDriverParams& params, std::mt19937_64& rng);

    /// Picks an action for the merging vehicle in `state`.
    Action decide(const EnvState& state, const EnvConfig& config, std::mt19937_64& rng) const;

    [[nodiscard]] double accepted_gap() const { return accepted_gap_; }

private:
    HumanDriverParams params_;
    double accepted_gap_;
    double bias_;
};

}  // namespace lanemerge::env
