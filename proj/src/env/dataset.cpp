#include "lanemerge/env/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "lanemerge/core/kinematics.hpp"
#include "lanemerge/core/wire.hpp"
#include "lanemerge/env/driver_model.hpp"

namespace lanemerge::env {

namespace {

struct Row {
    std::int64_t vehicle = 0;
    std::int64_t frame = 0;
    double x = 0, y = 0, speed = 0, accel = 0, heading = 0, length = 0, width = 0;
    int lane = 0;
};

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        auto cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
        while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
        out.push_back(cell);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) return false;
    if constexpr (std::is_floating_point_v<T>) {
        // std::from_chars for double is incomplete on older toolchains.
        std::string tmp(s);
        char* end = nullptr;
        out = std::strtod(tmp.c_str(), &end);
        return end == tmp.c_str() + tmp.size() && std::isfinite(out);
    } else {
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return ec == std::errc() && ptr == s.data() + s.size();
    }
}

std::optional<Row> parse_row(std::string_view line) {
    const auto cells = split_csv(line);
    if (cells.size() != 10) return std::nullopt;
    Row r;
    if (!parse_number(cells[0], r.vehicle) || !parse_number(cells[1], r.frame) || !parse_number(cells[2], r.x) ||
        !parse_number(cells[3], r.y) || !parse_number(cells[4], r.speed) || !parse_number(cells[5], r.accel) ||
        !parse_number(cells[6], r.heading) || !parse_number(cells[7], r.length) || !parse_number(cells[8], r.width) ||
        !parse_number(cells[9], r.lane)) {
        return std::nullopt;
    }
    if (r.speed < 0.0 || r.length <= 0.0 || r.width <= 0.0 || r.frame < 0) return std::nullopt;
    return r;
}

Uuid imported_uuid(std::int64_t vehicle) {
    return {0x00000000'0000'4000ULL, 0x8000'0000'0000'0000ULL | static_cast<std::uint64_t>(vehicle)};
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

}  // namespace

ImportReport import_instances(const std::filesystem::path& path, const ImportRules& rules) {
    std::ifstream in(path);
    if (!in) throw EnvError("cannot read trajectory file " + path.string());

    ImportReport report;
    std::map<std::int64_t, std::map<std::int64_t, Row>> by_vehicle;
    std::map<std::int64_t, std::vector<const Row*>> by_frame;

    std::string line;
    bool first_line = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        if (first_line) {
            first_line = false;
            if (line.rfind("vehicle_id", 0) == 0) continue;
        }
        ++report.rows_read;
        auto row = parse_row(line);
        if (!row) {
            ++report.rows_skipped;
            continue;
        }
        by_vehicle[row->vehicle][row->frame] = *row;
    }
    for (const auto& [vid, frames] : by_vehicle) {
        for (const auto& [f, row] : frames) by_frame[f].push_back(&row);
    }
    report.vehicles = by_vehicle.size();

    // Lane centerlines from the data itself.
    double target_sum = 0, merge_sum = 0, merge_max_x = -1e300;
    std::size_t target_n = 0, merge_n = 0;
    for (const auto& [vid, frames] : by_vehicle) {
        for (const auto& [f, r] : frames) {
            if (r.lane == rules.target_lane_id) {
                target_sum += r.y;
                ++target_n;
            } else if (r.lane == rules.merge_lane_id) {
                merge_sum += r.y;
                ++merge_n;
                merge_max_x = std::max(merge_max_x, r.x + r.length / 2.0);
            }
        }
    }

    LaneGeometry geometry;
    if (target_n > 0 && merge_n > 0) {
        geometry.target_lane_y = target_sum / static_cast<double>(target_n);
        geometry.merge_lane_y = merge_sum / static_cast<double>(merge_n);
        geometry.lane_width = std::max(1.0, std::abs(geometry.merge_lane_y - geometry.target_lane_y));
        geometry.merge_lane_end_x = rules.merge_lane_end_x.value_or(merge_max_x);
    }
    geometry.merge_lane_id = rules.merge_lane_id;
    geometry.target_lane_id = rules.target_lane_id;

    const Millis step_ms = std::llround(rules.timestep * 1000.0);
    auto row_at = [&](std::int64_t vid, std::int64_t f) -> const Row* {
        auto v = by_vehicle.find(vid);
        if (v == by_vehicle.end()) return nullptr;
        auto it = v->second.find(f);
        return it == v->second.end() ? nullptr : &it->second;
    };

    for (const auto& [vid, frames] : by_vehicle) {
        for (const auto& [f, row] : frames) {
            const Row* prev = row_at(vid, f - 1);
            if (!prev || prev->lane != rules.merge_lane_id || row.lane != rules.target_lane_id) continue;

            const Row* ahead = nullptr;
            const Row* behind = nullptr;
            for (const Row* other : by_frame[f]) {
                if (other->vehicle == vid || other->lane != rules.target_lane_id) continue;
                if (other->x > row.x && (!ahead || other->x < ahead->x)) ahead = other;
                if (other->x < row.x && (!behind || other->x > behind->x)) behind = other;
            }
            if (!ahead || !behind) {
                ++report.transitions_without_gap;
                continue;
            }
            const std::array<std::int64_t, 3> ids{vid, ahead->vehicle, behind->vehicle};
            auto all_present = [&](std::int64_t k) {
                return std::all_of(ids.begin(), ids.end(), [&](auto id) { return row_at(id, k) != nullptr; });
            };
            std::int64_t start = f, end = f;
            while (start - 1 >= f - rules.frames_before && all_present(start - 1)) --start;
            while (end + 1 <= f + rules.frames_after && all_present(end + 1)) ++end;
            if (start == f) continue;  // need at least one frame on the merge lane

            MergeInstance inst;
            inst.instance_id = "import-" + std::to_string(vid) + "-" + std::to_string(f);
            inst.timestep = rules.timestep;
            inst.source = InstanceSource::ImportedTrajectoryData;
            inst.roles = {imported_uuid(vid), imported_uuid(ahead->vehicle), imported_uuid(behind->vehicle)};
            inst.geometry = geometry;
            for (std::int64_t k = start; k <= end; ++k) {
                Frame frame;
                frame.timestamp = rules.epoch_ms + k * step_ms;
                for (const Row* r : by_frame[k]) {
                    Rud rud;
                    const bool role = std::find(ids.begin(), ids.end(), r->vehicle) != ids.end();
                    rud.uuid = imported_uuid(r->vehicle);
                    rud.source = role ? Source::ConnectedVehicle : Source::CameraSystem;
                    rud.connected = role;
                    rud.timestamp = frame.timestamp;
                    rud.position = {r->x, r->y};
                    rud.speed = r->speed;
                    rud.acceleration = r->accel;
                    rud.heading = normalize_heading(r->heading);
                    rud.length = r->length;
                    rud.width = r->width;
                    rud.lane = r->lane;
                    frame.ruds.push_back(rud);
                }
                inst.frames.push_back(std::move(frame));
            }
            report.instances.push_back(std::move(inst));
        }
    }
    if (report.instances.empty()) throw EnvError("no merge instances found in " + path.string());
    return report;
}

std::vector<MergeInstance> generate_synthetic(std::uint64_t seed, std::size_t n, const SyntheticOptions& opts) {
    std::mt19937_64 rng(seed);
    std::vector<MergeInstance> out;
    out.reserve(n);
    const Millis step_ms = std::llround(opts.timestep * 1000.0);
    const double horizon_s = static_cast<double>(opts.frames) * opts.timestep;
    EnvConfig env_config;
    env_config.timestep = opts.timestep;
    env_config.d_safe = opts.d_safe;
    const HumanDriverParams human;

    for (std::size_t i = 0; i < n; ++i) {
        auto make = [&](double x, double y, double v, bool connected) {
            Rud r;
            r.uuid = Uuid::generate(rng);
            r.source = connected ? Source::ConnectedVehicle : Source::CameraSystem;
            r.connected = connected;
            r.position = {x, y};
            r.speed = v;
            r.length = uniform(rng, 4.0, 5.2);
            r.width = uniform(rng, 1.7, 2.0);
            return r;
        };

        LaneGeometry g;
        g.lane_width = opts.lane_width;
        g.target_lane_y = 0.0;
        g.merge_lane_y = opts.lane_width;

        const double base = uniform(rng, 10.0, 27.0);
        const double v_p = std::clamp(base + uniform(rng, -1.0, 1.5), 8.0, 30.0);
        const double v_f = std::clamp(base + uniform(rng, -1.5, 1.0), 8.0, 30.0);
        const double v_m = std::clamp(base - uniform(rng, 0.0, 5.0), 8.0, 30.0);

        Rud following = make(uniform(rng, 0.0, 50.0), g.target_lane_y, v_f, true);
        Rud preceding = make(0.0, g.target_lane_y, v_p, true);
        Rud merging = make(0.0, g.merge_lane_y, v_m, true);
        // Gap between following front and preceding rear; redrawn until the
        // merging vehicle fits with d_safe on both sides at some point of the horizon.
        const double needed = 2.0 * opts.d_safe + merging.length + 1.0;
        double gap = 0.0;
        do {
            gap = uniform(rng, 20.0, 80.0);
        } while (std::max(gap, gap + (v_p - v_f) * horizon_s) < needed);
        preceding.position.x = following.position.x + following.length / 2.0 + gap + preceding.length / 2.0;
        merging.position.x = following.position.x + uniform(rng, 0.1, 0.6) * (preceding.position.x - following.position.x);
        g.merge_lane_end_x = merging.position.x + uniform(rng, 160.0, 260.0);

        std::vector<Rud> bystanders;
        const int n_bystanders = std::uniform_int_distribution<int>(0, 2)(rng);
        for (int b = 0; b < n_bystanders; ++b) {
            if (std::bernoulli_distribution(0.5)(rng)) {
                Rud r = make(0.0, g.target_lane_y, std::min(30.0, v_p + uniform(rng, 0.0, 1.0)), false);
                r.position.x = preceding.position.x + uniform(rng, 25.0, 60.0) + (preceding.length + r.length) / 2.0;
                if (!bystanders.empty()) r.position.x += 70.0;
                bystanders.push_back(r);
            } else {
                Rud r = make(0.0, g.target_lane_y, std::max(8.0, v_f - uniform(rng, 0.0, 1.0)), false);
                r.position.x = following.position.x - uniform(rng, 25.0, 60.0) - (following.length + r.length) / 2.0;
                if (!bystanders.empty()) r.position.x -= 70.0;
                bystanders.push_back(r);
            }
        }

        auto inst = std::make_shared<MergeInstance>();
        inst->instance_id = "synthetic-" + std::to_string(seed) + "-" + std::to_string(i);
        inst->timestep = opts.timestep;
        inst->source = InstanceSource::Synthetic;
        inst->roles = {merging.uuid, preceding.uuid, following.uuid};
        inst->geometry = g;

        const Millis t0 = opts.epoch_ms + static_cast<Millis>(i) * 60'000;
        std::vector<Rud> replayed{preceding, following};
        replayed.insert(replayed.end(), bystanders.begin(), bystanders.end());
        for (std::size_t k = 0; k < opts.frames; ++k) {
            Frame f;
            f.timestamp = t0 + static_cast<Millis>(k) * step_ms;
            Rud m = merging;
            m.timestamp = f.timestamp;
            m.lane = g.lane_of(m.position.y);
            f.ruds.push_back(m);
            for (const auto& r0 : replayed) {
                Rud r = r0;
                r.position.x += r.speed * static_cast<double>(k) * opts.timestep;
                r.timestamp = f.timestamp;
                r.lane = g.lane_of(r.position.y);
                f.ruds.push_back(r);
            }
            inst->frames.push_back(std::move(f));
        }

        // Script the merging vehicle's recorded path with a sampled human driver.
        GapAcceptanceDriver driver(human, rng);
        MergeEnv env(inst, env_config);
        EnvState s = env.reset();
        for (std::size_t k = 1; k < opts.frames; ++k) {
            if (!s.done) {
                s = env.step(s, driver.decide(s, env_config, rng));
            } else {
                Rud& m = s.merging;
                m.acceleration = 0.0;
                m.heading = 0.0;
                const auto adv = advance(kinematics_of(m), opts.timestep);
                m.position = adv.position;
                m.speed = adv.speed;
            }
            Rud m = s.merging;
            m.timestamp = inst->frames[k].timestamp;
            m.lane = g.lane_of(m.position.y);
            inst->frames[k].ruds.front() = m;
        }
        out.push_back(std::move(*inst));
    }
    return out;
}

DatasetSplit split_dataset(std::vector<MergeInstance> instances, SplitRatios ratios, std::uint64_t seed) {
    const double sum = ratios.train + ratios.test + ratios.validation;
    if (ratios.train < 0.0 || ratios.test < 0.0 || ratios.validation < 0.0 || std::abs(sum - 1.0) > 1e-9) {
        throw EnvError("split ratios must be non-negative and sum to 1");
    }
    const std::size_t n = instances.size();
    const std::array<double, 3> r{ratios.train, ratios.test, ratios.validation};
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double exact = r[k] * static_cast<double>(n);
        sizes[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainder[k] = exact - static_cast<double>(sizes[k]);
        assigned += sizes[k];
    }
    // Largest remainder; ties go to the earlier subset.
    while (assigned < n) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < 3; ++k) {
            if (remainder[k] > remainder[best] + 1e-12) best = k;
        }
        ++sizes[best];
        remainder[best] = -1.0;
        ++assigned;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    DatasetSplit split;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        auto& dst = k == 0 ? split.train : (k == 1 ? split.test : split.validation);
        dst.reserve(sizes[k]);
        for (std::size_t c = 0; c < sizes[k]; ++c) dst.push_back(std::move(instances[order[pos++]]));
    }
    return split;
}

std::string instance_to_json_line(const MergeInstance& inst) {
    using nlohmann::ordered_json;
    ordered_json frames = ordered_json::array();
    for (const auto& f : inst.frames) {
        ordered_json ruds = ordered_json::array();
        for (const auto& r : f.ruds) ruds.push_back(wire::to_json(r));
        frames.push_back(ordered_json{{"timestamp", f.timestamp}, {"ruds", std::move(ruds)}});
    }
    const auto& g = inst.geometry;
    ordered_json j{
        {"instance_id", inst.instance_id},
        {"timestep", inst.timestep},
        {"source", inst.source == InstanceSource::Synthetic ? "Synthetic" : "ImportedTrajectoryData"},
        {"roles",
         {{"merging", inst.roles.merging.str()},
          {"preceding", inst.roles.preceding.str()},
          {"following", inst.roles.following.str()}}},
        {"geometry",
         {{"merge_lane_y", g.merge_lane_y},
          {"target_lane_y", g.target_lane_y},
          {"merge_lane_end_x", g.merge_lane_end_x},
          {"lane_width", g.lane_width},
          {"merge_lane_id", g.merge_lane_id},
          {"target_lane_id", g.target_lane_id}}},
        {"frames", std::move(frames)}};
    return j.dump() + "\n";
}

MergeInstance instance_from_json_line(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        MergeInstance inst;
        inst.instance_id = j.at("instance_id").get<std::string>();
        inst.timestep = j.at("timestep").get<double>();
        const auto src = j.at("source").get<std::string>();
        if (src == "Synthetic") {
            inst.source = InstanceSource::Synthetic;
        } else if (src == "ImportedTrajectoryData") {
            inst.source = InstanceSource::ImportedTrajectoryData;
        } else {
            throw EnvError("unknown instance source " + src);
        }
        const auto& roles = j.at("roles");
        inst.roles = {Uuid::parse(roles.at("merging").get<std::string>()),
                      Uuid::parse(roles.at("preceding").get<std::string>()),
                      Uuid::parse(roles.at("following").get<std::string>())};
        const auto& g = j.at("geometry");
        inst.geometry.merge_lane_y = g.at("merge_lane_y").get<double>();
        inst.geometry.target_lane_y = g.at("target_lane_y").get<double>();
        inst.geometry.merge_lane_end_x = g.at("merge_lane_end_x").get<double>();
        inst.geometry.lane_width = g.at("lane_width").get<double>();
        inst.geometry.merge_lane_id = g.at("merge_lane_id").get<int>();
        inst.geometry.target_lane_id = g.at("target_lane_id").get<int>();
        for (const auto& f : j.at("frames")) {
            Frame frame;
            frame.timestamp = f.at("timestamp").get<Millis>();
            for (const auto& r : f.at("ruds")) frame.ruds.push_back(wire::rud_from_json(r));
            inst.frames.push_back(std::move(frame));
        }
        validate(inst);
        return inst;
    } catch (const nlohmann::json::exception& e) {
        throw EnvError(std::string("malformed instance line: ") + e.what());
    } catch (const wire::WireError& e) {
        throw EnvError(std::string("malformed instance line: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw EnvError(std::string("malformed instance line: ") + e.what());
    }
}

void write_instances(const std::filesystem::path& path, std::span<const MergeInstance> instances) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw EnvError("cannot write " + path.string());
    for (const auto& inst : instances) out << instance_to_json_line(inst);
}

std::vector<MergeInstance> read_instances(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EnvError("cannot read " + path.string());
    std::vector<MergeInstance> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(instance_from_json_line(line));
    }
    return out;
}

}  // namespace lanemerge::env
