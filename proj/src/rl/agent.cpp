#include "lanemerge/rl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lanemerge::rl {

void TrainConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
    for (double e : {epsilon_start, epsilon_end}) {
        if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
    }
    if (!(arrival_weight >= 0.0 && arrival_weight <= 1.0)) throw std::invalid_argument("arrival_weight must lie in [0, 1]");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (batch_size == 0 || replay_capacity == 0 || train_every == 0 || target_sync == 0) {
        throw std::invalid_argument("batch, replay, train_every and target_sync must be positive");
    }
    if (hidden.empty() || std::any_of(hidden.begin(), hidden.end(), [](int h) { return h <= 0; })) {
        throw std::invalid_argument("hidden layer sizes must be positive");
    }
}

RewardHistogram::RewardHistogram(RewardMode mode) : mode_(mode) {}

std::size_t RewardHistogram::bin_of(double reward) const {
    const double offset = (reward - lower()) / bin_width();
    const auto idx = static_cast<long>(std::floor(offset));
    return static_cast<std::size_t>(std::clamp<long>(idx, 0, static_cast<long>(kBins) - 1));
}

void RewardHistogram::add(double reward, env::Outcome outcome) {
    switch (outcome) {
        case env::Outcome::InProgress: ++bins_[bin_of(reward)]; break;
        case env::Outcome::Success: ++terminal_success_; break;
        default: ++failure_bins_[bin_of(reward)]; break;
    }
}

std::uint64_t RewardHistogram::total() const {
    return std::accumulate(bins_.begin(), bins_.end(), std::uint64_t{0}) +
           std::accumulate(failure_bins_.begin(), failure_bins_.end(), std::uint64_t{0}) + terminal_success_;
}

std::string RewardHistogram::to_csv() const {
    std::ostringstream out;
    out.precision(6);
    out << "kind,bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < kBins; ++i) {
        const double lo = lower() + static_cast<double>(i) * bin_width();
        out << "step," << lo << ',' << lo + bin_width() << ',' << bins_[i] << '\n';
    }
    for (std::size_t i = 0; i < kBins; ++i) {
        const double lo = lower() + static_cast<double>(i) * bin_width();
        out << "terminal_failure," << lo << ',' << lo + bin_width() << ',' << failure_bins_[i] << '\n';
    }
    const double success = mode_ == RewardMode::Positive ? 1.0 : 0.0;
    out << "terminal_success," << success << ',' << success << ',' << terminal_success_ << '\n';
    return out.str();
}

int argmax(const Eigen::VectorXd& q) {
    int best = 0;
    for (int i = 1; i < q.size(); ++i) {
        if (q(i) > q(best)) best = i;
    }
    return best;
}

env::Action select_action(const QNetwork& net, const StateVector& s, double epsilon, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (epsilon > 0.0 && u(rng) < epsilon) {
        std::uniform_int_distribution<std::size_t> pick(0, env::kActionCount - 1);
        return env::kAllActions[pick(rng)];
    }
    return env::kAllActions[static_cast<std::size_t>(argmax(net.q_values(s)))];
}

namespace {

Eigen::MatrixXd stack_states(std::span<const ExperienceTransition> batch, bool next) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(kStateDim), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& s = next ? batch[i].next_state : batch[i].state;
        for (std::size_t f = 0; f < kStateDim; ++f) {
            m(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(i)) = s[f];
        }
    }
    return m;
}

double epsilon_at(const TrainConfig& c, std::size_t step) {
    if (c.epsilon_decay_steps == 0 || step >= c.epsilon_decay_steps) return c.epsilon_end;
    const double frac = static_cast<double>(step) / static_cast<double>(c.epsilon_decay_steps);
    return c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start);
}

}  // namespace

Eigen::VectorXd td_targets(const QNetwork& target, std::span<const ExperienceTransition> batch, double gamma) {
    const Eigen::MatrixXd next_q = target.forward(stack_states(batch, true));
    Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        y(col) = batch[i].done ? batch[i].reward : batch[i].reward + gamma * next_q.col(col).maxCoeff();
    }
    return y;
}

double train_step(QNetwork& net, const QNetwork& target, std::span<const ExperienceTransition> batch,
                  const TrainConfig& config, SgdMomentum& optimizer) {
    if (batch.empty()) throw std::invalid_argument("train_step needs a non-empty batch");
    const Eigen::VectorXd y = td_targets(target, batch, config.gamma);
    std::vector<int> actions(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) actions[i] = batch[i].action;
    ParameterSet grad;
    const double loss = net.loss_and_gradient(stack_states(batch, false), actions, y, grad);
    if (!std::isfinite(loss)) throw TrainingDiverged("non-finite TD loss");
    optimizer.step(net, grad);
    return loss;
}

double terminal_return(const env::EnvState& terminal, RewardMode mode, const RewardWeights& weights, double gamma,
                       double arrival_weight) {
    const double horizon = gamma < 1.0 ? 1.0 / (1.0 - gamma) : 1.0;
    const double shift = mode == RewardMode::Positive ? 0.0 : 1.0;
    if (terminal.outcome == env::Outcome::Success) {
        const double rate = (1.0 - arrival_weight) + arrival_weight * shaping(terminal, weights);
        return 1.0 - shift + gamma * horizon * (rate - shift);
    }
    return -shift * horizon;
}

StateVector encode(const env::EnvState& s, const StateNorms& norms) {
    return encode_state(s.merging, s.preceding, s.following, norms, s.geometry.merge_lane_end_x);
}

void OutcomeCounts::add(env::Outcome o) {
    switch (o) {
        case env::Outcome::Success: ++success; break;
        case env::Outcome::Collision: ++collision; break;
        case env::Outcome::LaneEnd: ++lane_end; break;
        case env::Outcome::Timeout: ++timeout; break;
        case env::Outcome::InProgress: break;
    }
}

TrainResult train(std::span<const env::MergeInstance> instances, const TrainConfig& config) {
    config.validate();
    if (instances.empty()) throw std::invalid_argument("train needs at least one instance");

    std::vector<std::shared_ptr<const env::MergeInstance>> pool;
    pool.reserve(instances.size());
    for (const auto& inst : instances) pool.push_back(std::make_shared<const env::MergeInstance>(inst));

    std::mt19937_64 rng(config.seed);
    std::vector<int> dims{static_cast<int>(kStateDim)};
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    TrainResult result{QNetwork(config.variant, dims, static_cast<int>(env::kActionCount), rng()),
                       RewardHistogram(config.reward_mode), {}, {}, {}, 0, 0, 0};
    QNetwork& net = result.net;
    QNetwork target = net;
    SgdMomentum optimizer(net, config.learning_rate, config.momentum, config.grad_clip);
    ReplayBuffer replay(config.replay_capacity);

    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;

    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    std::size_t window_success = 0, window_episodes = 0;

    while (result.env_steps < config.total_env_steps) {
        if (cursor == order.size()) {
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const env::MergeEnv environment(pool[order[cursor++]], config.env);
        env::EnvState s = environment.reset();
        if (s.done) continue;
        StateVector sv = encode(s, config.norms);

        while (!s.done && result.env_steps < config.total_env_steps) {
            const double eps = epsilon_at(config, result.env_steps);
            const env::Action a = select_action(net, sv, eps, rng);
            env::EnvState next = environment.step(s, a);
            const double r = reward(next, config.reward_mode, config.weights);
            result.histogram.add(r, next.outcome);
            StateVector next_sv = encode(next, config.norms);

            ExperienceTransition t;
            t.state = sv;
            t.action = static_cast<int>(a);
            t.reward = next.done ? terminal_return(next, config.reward_mode, config.weights, config.gamma, config.arrival_weight) : r;
            t.next_state = next_sv;
            t.done = next.done;
            replay.push(t);
            ++result.env_steps;

            if (replay.size() >= std::max(config.learning_starts, config.batch_size) &&
                result.env_steps % config.train_every == 0) {
                const auto batch = replay.sample(config.batch_size, rng);
                loss_sum += train_step(net, target, batch, config, optimizer);
                ++loss_n;
                ++result.gradient_steps;
                if (loss_n == 1000) {
                    result.loss_curve.push_back(loss_sum / static_cast<double>(loss_n));
                    loss_sum = 0.0;
                    loss_n = 0;
                }
            }
            if (result.env_steps % config.target_sync == 0) target = net;

            s = std::move(next);
            sv = next_sv;
        }
        if (s.done) {
            result.outcomes.add(s.outcome);
            ++result.episodes;
            ++window_episodes;
            if (s.outcome == env::Outcome::Success) ++window_success;
            if (window_episodes == 100) {
                result.success_curve.push_back(static_cast<double>(window_success) / 100.0);
                window_success = window_episodes = 0;
            }
        }
    }
    if (loss_n > 0) result.loss_curve.push_back(loss_sum / static_cast<double>(loss_n));
    if (!net.all_finite()) throw TrainingDiverged("network parameters became non-finite");
    return result;
}

RolloutResult policy_rollout(const QNetwork& net, const env::MergeEnv& environment, const StateNorms& norms,
                             Uuid recommendation_id, Millis created_at, RewardMode mode, const RewardWeights& weights) {
    RolloutResult out;
    env::EnvState s = environment.reset();
    out.states.push_back(s);
    auto waypoint = [](const Rud& m) { return Waypoint{m.timestamp, m.position, m.speed, m.acceleration}; };
    out.recommendation.recommendation_id = recommendation_id;
    out.recommendation.target_uuid = s.merging.uuid;
    out.recommendation.created_at = created_at;
    out.recommendation.origin_rud_timestamp = s.merging.timestamp;
    out.recommendation.waypoints.push_back(waypoint(s.merging));
    while (!s.done) {
        const auto a = env::kAllActions[static_cast<std::size_t>(argmax(net.q_values(encode(s, norms))))];
        s = environment.step(s, a);
        out.total_reward += reward(s, mode, weights);
        out.recommendation.waypoints.push_back(waypoint(s.merging));
        out.states.push_back(s);
    }
    out.outcome = s.outcome;
    return out;
}

EvalReport evaluate(const QNetwork& net, std::span<const env::MergeInstance> instances, const TrainConfig& config,
                    std::string label) {
    EvalReport report;
    report.label = std::move(label);
    double reward_sum = 0.0;
    std::size_t steps = 0;
    for (const auto& inst : instances) {
        const env::MergeEnv environment(std::make_shared<const env::MergeInstance>(inst), config.env);
        const auto r = policy_rollout(net, environment, config.norms, Uuid{}, 1, config.reward_mode, config.weights);
        report.outcomes.add(r.outcome);
        reward_sum += r.total_reward;
        steps += r.states.size() - 1;
        ++report.instances;
    }
    report.success_rate =
        report.instances ? static_cast<double>(report.outcomes.success) / static_cast<double>(report.instances) : 0.0;
    report.mean_reward = steps ? reward_sum / static_cast<double>(steps) : 0.0;
    return report;
}

}  // namespace lanemerge::rl
