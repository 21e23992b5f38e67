#include "lanemerge/rl/qnetwork.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace lanemerge::rl {

std::string_view to_string(Variant v) { return v == Variant::Plain ? "dqn" : "dueling"; }

Eigen::MatrixXd dueling_aggregate(const Eigen::MatrixXd& value, const Eigen::MatrixXd& advantage) {
    const Eigen::RowVectorXd mean = advantage.colwise().mean();
    Eigen::MatrixXd q = advantage;
    q.rowwise() += value.row(0) - mean;
    return q;
}

namespace {

Dense make_dense(int in, int out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-limit, limit);
    Dense d;
    d.weights.resize(out, in);
    for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) d.weights(r, c) = u(rng);
    }
    d.bias = Eigen::VectorXd::Zero(out);
    return d;
}

Eigen::MatrixXd affine(const Dense& d, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd z = d.weights * x;
    z.colwise() += d.bias;
    return z;
}

}  // namespace

QNetwork::QNetwork(Variant variant, std::vector<int> trunk_dims, int n_actions, std::uint64_t seed)
    : variant_(variant), trunk_dims_(std::move(trunk_dims)), n_actions_(n_actions) {
    if (trunk_dims_.size() < 2 || n_actions_ < 1) throw std::invalid_argument("QNetwork needs >=1 hidden layer");
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < trunk_dims_.size(); ++l) {
        layers_.push_back(make_dense(trunk_dims_[l], trunk_dims_[l + 1], rng));
    }
    const int last = trunk_dims_.back();
    if (variant_ == Variant::Dueling) layers_.push_back(make_dense(last, 1, rng));
    layers_.push_back(make_dense(last, n_actions_, rng));
}

QNetwork QNetwork::from_parameters(Variant variant, std::vector<int> trunk_dims, int n_actions, ParameterSet layers) {
    QNetwork net;
    net.variant_ = variant;
    net.trunk_dims_ = std::move(trunk_dims);
    net.n_actions_ = n_actions;
    net.layers_ = std::move(layers);
    net.check_shapes();
    return net;
}

void QNetwork::check_shapes() const {
    if (trunk_dims_.size() < 2 || n_actions_ < 1) throw std::invalid_argument("invalid architecture");
    const std::size_t expected = trunk_layers() + (variant_ == Variant::Dueling ? 2 : 1);
    if (layers_.size() != expected) throw std::invalid_argument("layer count does not match architecture");
    auto check = [](const Dense& d, int in, int out) {
        if (d.weights.rows() != out || d.weights.cols() != in || d.bias.size() != out) {
            throw std::invalid_argument("layer shape does not match architecture");
        }
    };
    for (std::size_t l = 0; l < trunk_layers(); ++l) check(layers_[l], trunk_dims_[l], trunk_dims_[l + 1]);
    const int last = trunk_dims_.back();
    if (variant_ == Variant::Dueling) {
        check(layers_[trunk_layers()], last, 1);
        check(layers_[trunk_layers() + 1], last, n_actions_);
    } else {
        check(layers_[trunk_layers()], last, n_actions_);
    }
}

QNetwork::Heads QNetwork::heads(const Eigen::MatrixXd& states) const {
    Eigen::MatrixXd a = states;
    for (std::size_t l = 0; l < trunk_layers(); ++l) a = affine(layers_[l], a).cwiseMax(0.0);
    Heads h;
    if (variant_ == Variant::Dueling) {
        h.value = affine(layers_[trunk_layers()], a);
        h.advantage = affine(layers_[trunk_layers() + 1], a);
    } else {
        h.advantage = affine(layers_[trunk_layers()], a);
    }
    return h;
}

Eigen::MatrixXd QNetwork::forward(const Eigen::MatrixXd& states) const {
    auto h = heads(states);
    if (variant_ == Variant::Dueling) return dueling_aggregate(h.value, h.advantage);
    return std::move(h.advantage);
}

Eigen::VectorXd QNetwork::q_values(std::span<const double> state) const {
    if (static_cast<int>(state.size()) != input_dim()) throw std::invalid_argument("state dimension mismatch");
    const Eigen::Map<const Eigen::VectorXd> x(state.data(), static_cast<Eigen::Index>(state.size()));
    return forward(x).col(0);
}

double QNetwork::loss_and_gradient(const Eigen::MatrixXd& states, std::span<const int> actions,
                                   const Eigen::VectorXd& targets, ParameterSet& gradient) const {
    const auto batch = states.cols();
    if (static_cast<Eigen::Index>(actions.size()) != batch || targets.size() != batch || batch == 0) {
        throw std::invalid_argument("batch size mismatch");
    }
    const std::size_t n_trunk = trunk_layers();

    std::vector<Eigen::MatrixXd> acts;  // acts[l] is the input to trunk layer l
    std::vector<Eigen::MatrixXd> pre;
    acts.reserve(n_trunk + 1);
    pre.reserve(n_trunk);
    acts.push_back(states);
    for (std::size_t l = 0; l < n_trunk; ++l) {
        pre.push_back(affine(layers_[l], acts.back()));
        acts.push_back(pre.back().cwiseMax(0.0));
    }
    const Eigen::MatrixXd& features = acts.back();

    Eigen::MatrixXd value, advantage, q;
    if (variant_ == Variant::Dueling) {
        value = affine(layers_[n_trunk], features);
        advantage = affine(layers_[n_trunk + 1], features);
        q = dueling_aggregate(value, advantage);
    } else {
        q = affine(layers_[n_trunk], features);
    }

    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(q.rows(), batch);
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (Eigen::Index i = 0; i < batch; ++i) {
        const int a = actions[static_cast<std::size_t>(i)];
        if (a < 0 || a >= n_actions_) throw std::invalid_argument("action index out of range");
        const double err = q(a, i) - targets(i);
        loss += err * err;
        dq(a, i) = 2.0 * err * inv_b;
    }
    loss *= inv_b;

    gradient.resize(layers_.size());
    Eigen::MatrixXd d_features;
    if (variant_ == Variant::Dueling) {
        const Eigen::MatrixXd dv = dq.colwise().sum();
        Eigen::MatrixXd da = dq;
        da.rowwise() -= dq.colwise().mean();
        gradient[n_trunk].weights = dv * features.transpose();
        gradient[n_trunk].bias = dv.rowwise().sum();
        gradient[n_trunk + 1].weights = da * features.transpose();
        gradient[n_trunk + 1].bias = da.rowwise().sum();
        d_features = layers_[n_trunk].weights.transpose() * dv + layers_[n_trunk + 1].weights.transpose() * da;
    } else {
        gradient[n_trunk].weights = dq * features.transpose();
        gradient[n_trunk].bias = dq.rowwise().sum();
        d_features = layers_[n_trunk].weights.transpose() * dq;
    }

    for (std::size_t l = n_trunk; l-- > 0;) {
        const Eigen::MatrixXd dz = d_features.cwiseProduct((pre[l].array() > 0.0).matrix().cast<double>());
        gradient[l].weights = dz * acts[l].transpose();
        gradient[l].bias = dz.rowwise().sum();
        if (l > 0) d_features = layers_[l].weights.transpose() * dz;
    }
    return loss;
}

ParameterSet QNetwork::zeros_like() const {
    ParameterSet z;
    z.reserve(layers_.size());
    for (const auto& d : layers_) {
        z.push_back(Dense{Eigen::MatrixXd::Zero(d.weights.rows(), d.weights.cols()), Eigen::VectorXd::Zero(d.bias.size())});
    }
    return z;
}

bool QNetwork::all_finite() const {
    for (const auto& d : layers_) {
        if (!d.weights.allFinite() || !d.bias.allFinite()) return false;
    }
    return true;
}

bool QNetwork::operator==(const QNetwork& o) const {
    if (variant_ != o.variant_ || trunk_dims_ != o.trunk_dims_ || n_actions_ != o.n_actions_ ||
        layers_.size() != o.layers_.size()) {
        return false;
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].weights != o.layers_[l].weights || layers_[l].bias != o.layers_[l].bias) return false;
    }
    return true;
}

SgdMomentum::SgdMomentum(const QNetwork& net, double learning_rate, double momentum, double clip_norm)
    : velocity_(net.zeros_like()), lr_(learning_rate), momentum_(momentum), clip_norm_(clip_norm) {}

double SgdMomentum::step(QNetwork& net, const ParameterSet& gradient) {
    double sq = 0.0;
    for (const auto& g : gradient) sq += g.weights.squaredNorm() + g.bias.squaredNorm();
    const double norm = std::sqrt(sq);
    const double scale = (clip_norm_ > 0.0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;
    auto& params = net.parameters();
    for (std::size_t l = 0; l < params.size(); ++l) {
        velocity_[l].weights = momentum_ * velocity_[l].weights - (lr_ * scale) * gradient[l].weights;
        velocity_[l].bias = momentum_ * velocity_[l].bias - (lr_ * scale) * gradient[l].bias;
        params[l].weights += velocity_[l].weights;
        params[l].bias += velocity_[l].bias;
    }
    return norm;
}

}  // namespace lanemerge::rl
