#include "lanemerge/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

#include "lanemerge/core/kinematics.hpp"

namespace lanemerge::fusion {

void FusionConfig::validate() const {
    if (window_ms <= 0) throw std::invalid_argument("window length must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("match threshold must lie in (0, 1)");
    if (history_ttl_ms <= 0) throw std::invalid_argument("history TTL must be positive");
    if (distance_gate < 0 || angle_gate < 0 || increment < 0 || decrement < 0 || max_lateness_ms < 0) {
        throw std::invalid_argument("fusion gates and steps must be non-negative");
    }
}

Rud extrapolate(const Rud& rud, Millis t_ref) {
    if (t_ref < rud.timestamp) throw InvariantError("extrapolate: reference time precedes the RUD");
    Rud out = rud;
    const double dt = static_cast<double>(t_ref - rud.timestamp) / 1000.0;
    const KinematicState k = advance(kinematics_of(rud), dt);
    out.position = k.position;
    out.speed = k.speed;
    out.timestamp = t_ref;
    return out;
}

namespace {

double distance(const Rud& a, const Rud& b) { return std::hypot(a.position.x - b.position.x, a.position.y - b.position.y); }

double heading_gap(const Rud& a, const Rud& b) { return std::abs(heading_deviation(a.heading - b.heading)); }

// Shared confidence update once a candidate (or its absence) is known.
Association observe(const Rud& camera, const Rud* candidate, FusionHistory& history, const FusionConfig& c,
                    Millis now) {
    Association result;
    auto it = history.find(camera.uuid);
    if (it == history.end()) {
        if (candidate == nullptr || !in_gate(camera, *candidate, c)) return result;
        it = history.emplace(camera.uuid, FusionHistoryEntry{camera.uuid, candidate->uuid, 0.0, now}).first;
    }
    FusionHistoryEntry& e = it->second;
    const bool gated = candidate != nullptr && candidate->uuid == e.vehicle_uuid && in_gate(camera, *candidate, c);
    if (gated) {
        e.confidence = std::min(1.0, e.confidence + c.increment);
        e.last_seen = now;
    } else {
        e.confidence = std::max(0.0, e.confidence - c.decrement);
    }
    if (e.confidence <= 0.0) {
        history.erase(it);
        return result;
    }
    result.entry = e;
    if (gated && e.confidence >= c.threshold) result.matched_vehicle = e.vehicle_uuid;
    return result;
}

}  // namespace

bool in_gate(const Rud& camera, const Rud& vehicle, const FusionConfig& c) {
    return distance(camera, vehicle) <= c.distance_gate && heading_gap(camera, vehicle) <= c.angle_gate;
}

Association associate(const Rud& camera, std::span<const Rud> vehicles, FusionHistory& history,
                      const FusionConfig& config, Millis now) {
    const Rud* candidate = nullptr;
    if (const auto h = history.find(camera.uuid); h != history.end()) {
        for (const auto& v : vehicles) {
            if (v.uuid == h->second.vehicle_uuid) candidate = &v;
        }
    }
    if (candidate == nullptr) {
        double best = config.distance_gate;
        for (const auto& v : vehicles) {
            const double d = distance(camera, v);
            if (d < best || (d == best && candidate != nullptr && v.uuid < candidate->uuid) ||
                (d <= best && candidate == nullptr)) {
                best = d;
                candidate = &v;
            }
        }
    }
    return observe(camera, candidate, history, config, now);
}

Rud fuse_pair(const Rud& camera, const Rud& vehicle) {
    Rud out = vehicle;
    out.position = {(camera.position.x + vehicle.position.x) / 2.0, (camera.position.y + vehicle.position.y) / 2.0};
    out.source = Source::Fused;
    out.connected = true;
    return out;
}

void clean_history(FusionHistory& history, Millis now, Millis ttl) {
    std::erase_if(history, [&](const auto& kv) { return now - kv.second.last_seen > ttl; });
}

WindowOutput close_window(std::span<const Rud> window, Millis t_ref, const FusionConfig& config,
                          FusionHistory& history) {
    WindowOutput out;
    out.t_ref = t_ref;
    out.inputs = window.size();

    std::vector<Rud> cameras, vehicles;
    std::map<Uuid, Millis> input_ts;  // pre-extrapolation timestamps
    for (const auto& r : window) {
        (r.source == Source::CameraSystem ? cameras : vehicles).push_back(extrapolate(r, t_ref));
        input_ts[r.uuid] = r.timestamp;
    }
    auto origin_of = [&](const Uuid& id) { return rud_key(id, input_ts.at(id)); };
    auto by_uuid = [](const Rud& a, const Rud& b) { return a.uuid < b.uuid; };
    std::sort(cameras.begin(), cameras.end(), by_uuid);
    std::sort(vehicles.begin(), vehicles.end(), by_uuid);

    // Candidate pairs: history partners (any distance) first, then free pairs
    // inside the distance gate, each group nearest-first.
    struct Pair {
        int rank;
        double d;
        std::size_t ci, vi;
    };
    std::vector<Pair> pairs;
    for (std::size_t ci = 0; ci < cameras.size(); ++ci) {
        const auto h = history.find(cameras[ci].uuid);
        for (std::size_t vi = 0; vi < vehicles.size(); ++vi) {
            const double d = distance(cameras[ci], vehicles[vi]);
            const bool partner = h != history.end() && h->second.vehicle_uuid == vehicles[vi].uuid;
            if (partner) {
                pairs.push_back({0, d, ci, vi});
            } else if (d <= config.distance_gate) {
                pairs.push_back({1, d, ci, vi});
            }
        }
    }
    std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
        return std::tie(a.rank, a.d, cameras[a.ci].uuid, vehicles[a.vi].uuid) <
               std::tie(b.rank, b.d, cameras[b.ci].uuid, vehicles[b.vi].uuid);
    });
    std::vector<const Rud*> candidate(cameras.size(), nullptr);
    std::vector<bool> cam_taken(cameras.size(), false), veh_taken(vehicles.size(), false);
    for (const auto& p : pairs) {
        if (cam_taken[p.ci] || veh_taken[p.vi]) continue;
        // A camera with a live partner only ever pairs with that partner.
        const auto h = history.find(cameras[p.ci].uuid);
        if (p.rank == 1 && h != history.end()) {
            const bool partner_present = std::any_of(vehicles.begin(), vehicles.end(),
                                                     [&](const Rud& v) { return v.uuid == h->second.vehicle_uuid; });
            if (partner_present) continue;
        }
        cam_taken[p.ci] = veh_taken[p.vi] = true;
        candidate[p.ci] = &vehicles[p.vi];
    }

    std::vector<bool> vehicle_fused(vehicles.size(), false);
    for (std::size_t ci = 0; ci < cameras.size(); ++ci) {
        const Association a = observe(cameras[ci], candidate[ci], history, config, t_ref);
        if (a.matched_vehicle) {
            const Rud& v = *candidate[ci];
            const std::size_t vi = static_cast<std::size_t>(&v - vehicles.data());
            vehicle_fused[vi] = true;
            // Earliest contributor; equal timestamps resolve to the vehicle.
            const Uuid& first = input_ts.at(cameras[ci].uuid) < input_ts.at(v.uuid) ? cameras[ci].uuid : v.uuid;
            out.ruds.push_back(FusedOutput{fuse_pair(cameras[ci], v), origin_of(first), true});
            ++out.matches;
        } else {
            out.ruds.push_back(FusedOutput{cameras[ci], origin_of(cameras[ci].uuid), false});
        }
    }
    for (std::size_t vi = 0; vi < vehicles.size(); ++vi) {
        if (!vehicle_fused[vi]) out.ruds.push_back(FusedOutput{vehicles[vi], origin_of(vehicles[vi].uuid), false});
    }
    std::sort(out.ruds.begin(), out.ruds.end(),
              [](const FusedOutput& a, const FusedOutput& b) { return a.rud.uuid < b.rud.uuid; });
    clean_history(history, t_ref, config.history_ttl_ms);
    return out;
}

FusionEngine::FusionEngine(FusionConfig config) : config_(config) { config_.validate(); }

void FusionEngine::intake(const Rud& rud) { buffer_.push_back(rud); }

Millis FusionEngine::next_close(Millis now) const { return (now / config_.window_ms + 1) * config_.window_ms; }

WindowOutput FusionEngine::close(Millis t_ref) {
    std::vector<Rud> carry;
    std::map<std::pair<int, Uuid>, Rud> latest;
    std::size_t stale = 0;
    for (auto& r : buffer_) {
        if (r.timestamp > t_ref) {
            carry.push_back(r);
            continue;
        }
        if (t_ref - r.timestamp > config_.window_ms + config_.max_lateness_ms) {
            ++stale;
            continue;
        }
        const int src = r.source == Source::CameraSystem ? 1 : 0;
        auto [it, inserted] = latest.try_emplace({src, r.uuid}, r);
        if (!inserted && r.timestamp >= it->second.timestamp) it->second = r;
    }
    buffer_ = std::move(carry);
    std::vector<Rud> window;
    window.reserve(latest.size());
    for (auto& [k, r] : latest) window.push_back(std::move(r));
    WindowOutput out = close_window(window, t_ref, config_, history_);
    out.stale_dropped = stale;
    return out;
}

}  // namespace lanemerge::fusion
