#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lanemerge/core/node.hpp"
#include "lanemerge/core/types.hpp"

namespace lanemerge::fusion {

struct FusionConfig {
    Millis window_ms = 100;
    double distance_gate = 3.0;   // metres
    double angle_gate = 0.35;     // radians
    double increment = 0.15;
    double decrement = 0.25;
    double threshold = 0.5;
    Millis history_ttl_ms = 5000;
    /// RUDs older than one window plus this at window close are discarded.
    Millis max_lateness_ms = 100;

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
};

/// Uniformly accelerated motion to `t_ref` (a braking vehicle stops rather
/// than reversing). Heading is unchanged. Throws InvariantError if t_ref is
/// earlier than the RUD.
Rud extrapolate(const Rud& rud, Millis t_ref);

struct FusionHistoryEntry {
    Uuid camera_uuid;
    Uuid vehicle_uuid;
    double confidence = 0.0;
    Millis last_seen = 0;
    bool operator==(const FusionHistoryEntry&) const = default;
};

/// Keyed by camera uuid.
using FusionHistory = std::map<Uuid, FusionHistoryEntry>;

struct Association {
    std::optional<Uuid> matched_vehicle;       // set iff confidence >= threshold and in gate
    std::optional<FusionHistoryEntry> entry;   // entry after the update, nullopt if removed/absent
};

/// True if the pair is within both the distance and the heading gate.
bool in_gate(const Rud& camera, const Rud& vehicle, const FusionConfig& config);

/// Single-object association. Candidate is the camera object's history
/// partner when present in `vehicles`, else the nearest vehicle within the
/// distance gate. Updates `history` in place.
Association associate(const Rud& camera, std::span<const Rud> vehicles, FusionHistory& history,
                      const FusionConfig& config, Millis now);

/// Vehicle-sourced kinematics and identity, mean position, source Fused.
Rud fuse_pair(const Rud& camera, const Rud& vehicle);

/// Removes entries with now - last_seen > ttl.
void clean_history(FusionHistory& history, Millis now, Millis ttl);

struct FusedOutput {
    Rud rud;
    std::string origin;   // rud_key of the earliest contributing input
    bool fused = false;
};

struct WindowOutput {
    Millis t_ref = 0;
    std::vector<FusedOutput> ruds;   // sorted by uuid
    std::size_t inputs = 0;
    std::size_t matches = 0;
    std::size_t stale_dropped = 0;
};

/// Fuses one closed window of (already de-duplicated per source and uuid) RUDs.
/// Camera objects are assigned greedily nearest-first, one vehicle each,
/// history partners first, ties broken by uuid.
WindowOutput close_window(std::span<const Rud> window, Millis t_ref, const FusionConfig& config,
                          FusionHistory& history);

/// Stateful windowing around close_window. Windows are aligned to multiples
/// of window_ms and close on the clock, whether or not input arrived.
class FusionEngine {
public:
    explicit FusionEngine(FusionConfig config = {});

    void intake(const Rud& rud);
    /// Close time of the window that is currently filling, given `now`.
    [[nodiscard]] Millis next_close(Millis now) const;
    /// Closes the window ending at `t_ref`.
    WindowOutput close(Millis t_ref);

    [[nodiscard]] const FusionHistory& history() const { return history_; }
    [[nodiscard]] const FusionConfig& config() const { return config_; }
    [[nodiscard]] std::size_t buffered() const { return buffer_.size(); }

private:
    FusionConfig config_;
    FusionHistory history_;
    std::vector<Rud> buffer_;
};

}  // namespace lanemerge::fusion
