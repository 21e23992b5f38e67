#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace lanemerge::rl {

enum class Variant { Plain, Dueling };

std::string_view to_string(Variant v);

/// Fully connected layer, weights stored out x in.
struct Dense {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
};

/// Parameters (or gradients) of a network, layer by layer in QNetwork order.
using ParameterSet = std::vector<Dense>;

/// Q = V + A - mean(A), column-wise over a batch (V is 1 x B, A is actions x B).
Eigen::MatrixXd dueling_aggregate(const Eigen::MatrixXd& value, const Eigen::MatrixXd& advantage);

/// Feed-forward Q-network. The trunk is a stack of ReLU layers; the Plain
/// variant ends in one linear head, the Dueling variant in a value head (1
/// output) and an advantage head (one output per action).
///
/// Layer order in `parameters()`: trunk layers, then the Plain head or the
/// value head followed by the advantage head.
class QNetwork {
public:
    QNetwork() = default;
    /// `trunk_dims` = {input, hidden_1, ..., hidden_k}; He-uniform init from `seed`.
    QNetwork(Variant variant, std::vector<int> trunk_dims, int n_actions, std::uint64_t seed);

    [[nodiscard]] Variant variant() const { return variant_; }
    [[nodiscard]] int input_dim() const { return trunk_dims_.front(); }
    [[nodiscard]] int n_actions() const { return n_actions_; }
    [[nodiscard]] const std::vector<int>& trunk_dims() const { return trunk_dims_; }

    /// Q-values for a single state.
    [[nodiscard]] Eigen::VectorXd q_values(std::span<const double> state) const;
    /// Q-values for a batch, states as columns (input x B) -> (actions x B).
    [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& states) const;

    struct Heads {
        Eigen::MatrixXd value;      // Dueling only, 1 x B
        Eigen::MatrixXd advantage;  // Dueling: advantages; Plain: Q-values
    };
    /// Raw head outputs before aggregation.
    [[nodiscard]] Heads heads(const Eigen::MatrixXd& states) const;

    /// Mean over the batch of (Q(s_i, a_i) - target_i)^2 and its gradient with
    /// respect to every parameter. Targets are treated as constants.
    double loss_and_gradient(const Eigen::MatrixXd& states, std::span<const int> actions,
                             const Eigen::VectorXd& targets, ParameterSet& gradient) const;

    [[nodiscard]] ParameterSet& parameters() { return layers_; }
    [[nodiscard]] const ParameterSet& parameters() const { return layers_; }
    [[nodiscard]] ParameterSet zeros_like() const;
    [[nodiscard]] bool all_finite() const;

    /// Rebuilds the network around externally supplied parameters; throws
    /// std::invalid_argument if shapes do not match the declared architecture.
    static QNetwork from_parameters(Variant variant, std::vector<int> trunk_dims, int n_actions, ParameterSet layers);

    bool operator==(const QNetwork& other) const;

private:
    [[nodiscard]] std::size_t trunk_layers() const { return trunk_dims_.size() - 1; }
    void check_shapes() const;

    Variant variant_ = Variant::Plain;
    std::vector<int> trunk_dims_{1};
    int n_actions_ = 0;
    ParameterSet layers_;
};

/// Heavy-ball SGD: v <- mu*v - lr*g, theta <- theta + v.
class SgdMomentum {
public:
    SgdMomentum(const QNetwork& net, double learning_rate, double momentum, double clip_norm = 0.0);
    /// Applies one update; returns the (pre-clip) global gradient norm.
    double step(QNetwork& net, const ParameterSet& gradient);

private:
    ParameterSet velocity_;
    double lr_;
    double momentum_;
    double clip_norm_;
};

}  // namespace lanemerge::rl
