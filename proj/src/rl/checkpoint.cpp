#include "lanemerge/rl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace lanemerge::rl {

namespace {

constexpr char kMagic[4] = {'L', 'M', 'Q', 'N'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
public:
    Reader(const std::vector<unsigned char>& b, std::size_t end) : bytes_(b), end_(end) {}
    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > end_) throw CheckpointError("checkpoint is truncated");
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    [[nodiscard]] std::size_t pos() const { return pos_; }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_network(const QNetwork& net) {
    std::vector<unsigned char> out(kMagic, kMagic + 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, net.variant() == Variant::Dueling ? 1U : 0U);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(net.trunk_dims().size()));
    for (int d : net.trunk_dims()) put<std::int32_t>(out, d);
    put<std::int32_t>(out, net.n_actions());
    for (const auto& layer : net.parameters()) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) put<double>(out, layer.weights(r, c));
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) put<double>(out, layer.bias(r));
    }
    put<std::uint64_t>(out, fnv1a(out.data(), out.size()));
    return out;
}

QNetwork deserialize_network(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 4 + 4 * 3 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw CheckpointError("not a network checkpoint");
    }
    const std::size_t body = bytes.size() - 8;
    std::uint64_t stored = 0;
    std::memcpy(&stored, bytes.data() + body, 8);
    if (stored != fnv1a(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch");

    Reader in(bytes, body);
    in.get<std::uint32_t>();  // magic
    if (in.get<std::uint32_t>() != kVersion) throw CheckpointError("unsupported checkpoint version");
    const auto variant_code = in.get<std::uint32_t>();
    if (variant_code > 1) throw CheckpointError("unknown network variant in checkpoint");
    const Variant variant = variant_code == 1 ? Variant::Dueling : Variant::Plain;
    const auto n_dims = in.get<std::uint32_t>();
    if (n_dims < 2 || n_dims > 64) throw CheckpointError("implausible layer count in checkpoint");
    std::vector<int> dims(n_dims);
    for (auto& d : dims) {
        d = in.get<std::int32_t>();
        if (d <= 0 || d > 1 << 16) throw CheckpointError("implausible layer width in checkpoint");
    }
    const int n_actions = in.get<std::int32_t>();
    if (n_actions <= 0 || n_actions > 1 << 16) throw CheckpointError("implausible action count in checkpoint");

    std::vector<std::pair<int, int>> shapes;  // (in, out)
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) shapes.emplace_back(dims[l], dims[l + 1]);
    if (variant == Variant::Dueling) shapes.emplace_back(dims.back(), 1);
    shapes.emplace_back(dims.back(), n_actions);

    ParameterSet layers;
    for (auto [fan_in, fan_out] : shapes) {
        Dense d;
        d.weights.resize(fan_out, fan_in);
        d.bias.resize(fan_out);
        for (int r = 0; r < fan_out; ++r) {
            for (int c = 0; c < fan_in; ++c) d.weights(r, c) = in.get<double>();
        }
        for (int r = 0; r < fan_out; ++r) d.bias(r) = in.get<double>();
        layers.push_back(std::move(d));
    }
    if (in.pos() != body) throw CheckpointError("trailing bytes in checkpoint");
    try {
        return QNetwork::from_parameters(variant, dims, n_actions, std::move(layers));
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(e.what());
    }
}

std::string config_to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["variant"] = std::string(to_string(c.variant));
    j["reward_mode"] = std::string(to_string(c.reward_mode));
    j["hidden"] = c.hidden;
    j["learning_rate"] = c.learning_rate;
    j["momentum"] = c.momentum;
    j["gamma"] = c.gamma;
    j["grad_clip"] = c.grad_clip;
    j["replay_capacity"] = c.replay_capacity;
    j["batch_size"] = c.batch_size;
    j["target_sync"] = c.target_sync;
    j["train_every"] = c.train_every;
    j["learning_starts"] = c.learning_starts;
    j["epsilon_start"] = c.epsilon_start;
    j["epsilon_end"] = c.epsilon_end;
    j["epsilon_decay_steps"] = c.epsilon_decay_steps;
    j["total_env_steps"] = c.total_env_steps;
    j["seed"] = c.seed;
    j["arrival_weight"] = c.arrival_weight;
    j["size_encoding"] = c.norms.size == SizeEncoding::Area ? "area" : "dimensions";
    j["env"] = {{"timestep", c.env.timestep},
                {"accel_step", c.env.accel_step},
                {"accel_min", c.env.accel_min},
                {"accel_max", c.env.accel_max},
                {"heading_step", c.env.heading_step},
                {"heading_max", c.env.heading_max},
                {"d_safe", c.env.d_safe},
                {"max_steps", c.env.max_steps}};
    return j.dump(2);
}

TrainConfig config_from_json(const std::string& text) {
    TrainConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        const auto variant = j.at("variant").get<std::string>();
        if (variant != "dqn" && variant != "dueling") throw CheckpointError("unknown variant " + variant);
        c.variant = variant == "dqn" ? Variant::Plain : Variant::Dueling;
        c.reward_mode = j.at("reward_mode").get<std::string>() == "negative" ? RewardMode::Negative
                                                                             : RewardMode::Positive;
        c.hidden = j.at("hidden").get<std::vector<int>>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.momentum = j.at("momentum").get<double>();
        c.gamma = j.at("gamma").get<double>();
        c.grad_clip = j.at("grad_clip").get<double>();
        c.replay_capacity = j.at("replay_capacity").get<std::size_t>();
        c.batch_size = j.at("batch_size").get<std::size_t>();
        c.target_sync = j.at("target_sync").get<std::size_t>();
        c.train_every = j.at("train_every").get<std::size_t>();
        c.learning_starts = j.at("learning_starts").get<std::size_t>();
        c.epsilon_start = j.at("epsilon_start").get<double>();
        c.epsilon_end = j.at("epsilon_end").get<double>();
        c.epsilon_decay_steps = j.at("epsilon_decay_steps").get<std::size_t>();
        c.total_env_steps = j.at("total_env_steps").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.arrival_weight = j.value("arrival_weight", c.arrival_weight);
        c.norms.size = j.value("size_encoding", std::string("area")) == "dimensions" ? SizeEncoding::Dimensions
                                                                                       : SizeEncoding::Area;
        const auto& e = j.at("env");
        c.env.timestep = e.at("timestep").get<double>();
        c.env.accel_step = e.at("accel_step").get<double>();
        c.env.accel_min = e.at("accel_min").get<double>();
        c.env.accel_max = e.at("accel_max").get<double>();
        c.env.heading_step = e.at("heading_step").get<double>();
        c.env.heading_max = e.at("heading_max").get<double>();
        c.env.d_safe = e.at("d_safe").get<double>();
        c.env.max_steps = e.at("max_steps").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("bad training config: ") + e.what());
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const QNetwork& net, const TrainConfig& config) {
    const auto bytes = serialize_network(net);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed for " + path.string());
    }
    std::ofstream side(path.string() + ".json", std::ios::trunc);
    if (!side) throw CheckpointError("cannot write config sidecar for " + path.string());
    side << config_to_json(config) << '\n';
}

QNetwork load_checkpoint(const std::filesystem::path& path, std::optional<Variant> expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    QNetwork net = deserialize_network(bytes);
    if (expected && *expected != net.variant()) {
        throw CheckpointError("checkpoint holds a " + std::string(to_string(net.variant())) + " network, expected " +
                              std::string(to_string(*expected)));
    }
    return net;
}

}  // namespace lanemerge::rl
