#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lanemerge/env/merge_env.hpp"
#include "lanemerge/rl/qnetwork.hpp"
#include "lanemerge/rl/replay.hpp"
#include "lanemerge/rl/reward.hpp"
#include "lanemerge/rl/state_encoder.hpp"

namespace lanemerge::rl {

/// Loss became NaN/inf; training stops.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    Variant variant = Variant::Dueling;
    RewardMode reward_mode = RewardMode::Positive;
    std::vector<int> hidden{128, 128};
    double learning_rate = 5e-4;  // 1e-3 let the Q scale drift and the greedy policy oscillate
    double momentum = 0.9;
    double gamma = 0.99;
    double grad_clip = 10.0;           // global-norm clip, 0 disables
    std::size_t replay_capacity = 50'000;
    std::size_t batch_size = 64;
    std::size_t target_sync = 500;     // env steps between target-network copies
    std::size_t train_every = 4;       // env steps per gradient step
    std::size_t learning_starts = 1'000;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    std::size_t epsilon_decay_steps = 50'000;
    std::size_t total_env_steps = 200'000;
    std::uint64_t seed = 1;
    /// Share of the post-success continuation paid at the arrival state's
    /// shaping rate instead of the full success rate (0 = flat success value).
    double arrival_weight = 1.0;
    env::EnvConfig env;
    StateNorms norms;
    RewardWeights weights;

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
};

/// Per-waypoint reward counts. Non-terminal rewards fall into `bins` uniform
/// bins over the mode's range; terminal rewards are counted separately.
class RewardHistogram {
public:
    static constexpr std::size_t kBins = 50;

    explicit RewardHistogram(RewardMode mode = RewardMode::Positive);

    void add(double reward, env::Outcome outcome);

    [[nodiscard]] RewardMode mode() const { return mode_; }
    [[nodiscard]] double lower() const { return mode_ == RewardMode::Positive ? 0.0 : -1.0; }
    [[nodiscard]] double bin_width() const { return 1.0 / static_cast<double>(kBins); }
    [[nodiscard]] const std::array<std::uint64_t, kBins>& bins() const { return bins_; }
    [[nodiscard]] const std::array<std::uint64_t, kBins>& terminal_failure_bins() const { return failure_bins_; }
    [[nodiscard]] std::uint64_t terminal_success() const { return terminal_success_; }
    [[nodiscard]] std::uint64_t total() const;
    /// Index of the bin holding `reward`.
    [[nodiscard]] std::size_t bin_of(double reward) const;

    /// CSV: kind,bin_lo,bin_hi,count
    [[nodiscard]] std::string to_csv() const;

    bool operator==(const RewardHistogram&) const = default;

private:
    RewardMode mode_;
    std::array<std::uint64_t, kBins> bins_{};
    std::array<std::uint64_t, kBins> failure_bins_{};
    std::uint64_t terminal_success_ = 0;
};

/// Uniform action with probability epsilon, else argmax Q (lowest index on ties).
env::Action select_action(const QNetwork& net, const StateVector& s, double epsilon, std::mt19937_64& rng);

/// Index of the largest entry, lowest index on ties.
int argmax(const Eigen::VectorXd& q);

/// One gradient step on `batch` toward r + gamma * max Q_target(s') * (1 - done).
/// Returns the pre-update loss; throws TrainingDiverged if it is not finite.
double train_step(QNetwork& net, const QNetwork& target, std::span<const ExperienceTransition> batch,
                  const TrainConfig& config, SgdMomentum& optimizer);

/// TD targets for a batch (exposed for inspection and tests).
Eigen::VectorXd td_targets(const QNetwork& target, std::span<const ExperienceTransition> batch, double gamma);

/// Value stored for a terminal transition. Terminal states are absorbing: a
/// success pays its reward once, then a discounted per-step rate that mixes the
/// success reward with the arrival state's shaping reward (`arrival_weight`);
/// a failure absorbs at the bottom of the mode's range. A nonzero arrival
/// weight makes a calm, speed-matched merge worth more than a rushed one.
double terminal_return(const env::EnvState& terminal, RewardMode mode, const RewardWeights& weights, double gamma,
                       double arrival_weight);

StateVector encode(const env::EnvState& s, const StateNorms& norms);

struct OutcomeCounts {
    std::uint64_t success = 0;
    std::uint64_t collision = 0;
    std::uint64_t lane_end = 0;
    std::uint64_t timeout = 0;

    void add(env::Outcome o);
    [[nodiscard]] std::uint64_t total() const { return success + collision + lane_end + timeout; }
};

struct TrainResult {
    QNetwork net;
    RewardHistogram histogram;
    std::vector<double> loss_curve;          // mean loss per 1000 gradient steps
    std::vector<double> success_curve;       // success rate per 100 episodes
    OutcomeCounts outcomes;
    std::uint64_t episodes = 0;
    std::uint64_t env_steps = 0;
    std::uint64_t gradient_steps = 0;
};

/// Trains on `instances`, cycling through them in a seeded shuffled order.
/// Deterministic for a given config (including seed).
TrainResult train(std::span<const env::MergeInstance> instances, const TrainConfig& config);

struct RolloutResult {
    TrajectoryRecommendation recommendation;
    env::Outcome outcome = env::Outcome::InProgress;
    std::vector<env::EnvState> states;  // states[0] is the reset state
    double total_reward = 0.0;
};

/// Greedy rollout; waypoints are the merging vehicle's state at every step.
RolloutResult policy_rollout(const QNetwork& net, const env::MergeEnv& env, const StateNorms& norms,
                             Uuid recommendation_id, Millis created_at, RewardMode mode = RewardMode::Positive,
                             const RewardWeights& weights = {});

struct EvalReport {
    std::string label;
    std::size_t instances = 0;
    OutcomeCounts outcomes;
    double success_rate = 0.0;
    double mean_reward = 0.0;
};

EvalReport evaluate(const QNetwork& net, std::span<const env::MergeInstance> instances, const TrainConfig& config,
                    std::string label);

}  // namespace lanemerge::rl
