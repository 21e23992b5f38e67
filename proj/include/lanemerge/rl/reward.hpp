#pragma once

#include <string_view>

#include "lanemerge/env/merge_env.hpp"

namespace lanemerge::rl {

enum class RewardMode { Positive, Negative };

std::string_view to_string(RewardMode m);

struct RewardWeights {
    double distance = 0.6;
    double speed = 0.2;
    double acceleration = 0.2;
};

/// The positive-mode formula evaluated regardless of outcome.
double shaping(const env::EnvState& state, const RewardWeights& weights = {});

/// Positive mode: w1/(1+d) + w2/(1+|v - v_gap|) + w3/(1+|a|) in (0, 1], with d the
/// distance to the merge point and v_gap the mean gap-vehicle speed; Success scores 1.
/// Negative mode is the positive value minus one, so Success scores 0.
double reward(const env::EnvState& state, RewardMode mode, const RewardWeights& weights = {});

}  // namespace lanemerge::rl
