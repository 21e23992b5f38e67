#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "lanemerge/rl/qnetwork.hpp"

namespace lanemerge::testing {

struct GradCheck {
    double relative_error = 0.0;  // ||analytic - numeric|| / (||analytic|| + ||numeric||)
    std::size_t parameters = 0;
};

/// Central finite differences of the batch TD loss against loss_and_gradient.
inline GradCheck gradient_check(rl::Variant variant, std::mt19937_64& rng, double h = 1e-6) {
    const int in = 2 + static_cast<int>(rng() % 5);
    std::vector<int> dims{in};
    const int depth = 1 + static_cast<int>(rng() % 2);
    for (int i = 0; i < depth; ++i) dims.push_back(2 + static_cast<int>(rng() % 6));
    const int actions = 2 + static_cast<int>(rng() % 4);
    rl::QNetwork net(variant, dims, actions, rng());
    const int batch = 1 + static_cast<int>(rng() % 6);

    std::normal_distribution<double> n01(0.0, 1.0);
    // Zero-initialised biases put a unit fed only by dead units exactly on the
    // ReLU kink, where the two one-sided derivatives differ. Check at a generic point.
    for (auto& layer : net.parameters()) {
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = 0.5 * n01(rng);
    }
    Eigen::MatrixXd states(in, batch);
    for (int c = 0; c < batch; ++c) {
        for (int r = 0; r < in; ++r) states(r, c) = n01(rng);
    }
    std::vector<int> acts(static_cast<std::size_t>(batch));
    for (auto& a : acts) a = static_cast<int>(rng() % static_cast<std::uint64_t>(actions));
    Eigen::VectorXd targets(batch);
    for (int c = 0; c < batch; ++c) targets(c) = n01(rng);

    rl::ParameterSet grad;
    net.loss_and_gradient(states, acts, targets, grad);
    rl::ParameterSet scratch;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    GradCheck out;
    auto loss_at = [&](double& slot, double value) {
        const double keep = slot;
        slot = value;
        const double l = net.loss_and_gradient(states, acts, targets, scratch);
        slot = keep;
        return l;
    };
    auto& layers = net.parameters();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto visit = [&](double& slot, double analytic) {
            const double x = slot;
            const double numeric = (loss_at(slot, x + h) - loss_at(slot, x - h)) / (2.0 * h);
            diff2 += (analytic - numeric) * (analytic - numeric);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
            ++out.parameters;
        };
        for (Eigen::Index r = 0; r < layers[l].weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layers[l].weights.cols(); ++c) visit(layers[l].weights(r, c), grad[l].weights(r, c));
        }
        for (Eigen::Index r = 0; r < layers[l].bias.size(); ++r) visit(layers[l].bias(r), grad[l].bias(r));
    }
    const double denom = std::sqrt(a2) + std::sqrt(n2);
    out.relative_error = denom < 1e-300 ? 0.0 : std::sqrt(diff2) / denom;
    return out;
}

}  // namespace lanemerge::testing
