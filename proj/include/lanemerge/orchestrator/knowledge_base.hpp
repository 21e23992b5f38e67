#pragma once

#include <cstddef>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "lanemerge/core/types.hpp"

namespace lanemerge::orchestrator {

/// Latest RUD per uuid. Reads may run concurrently; writes are exclusive.
class KnowledgeBase {
public:
    explicit KnowledgeBase(Millis staleness_ms = 500);

    /// Stores `rud` unless an entry with a newer timestamp exists. Returns
    /// true if stored. Throws InvariantError on an invalid RUD.
    bool upsert(const Rud& rud);
    [[nodiscard]] std::optional<Rud> get(const Uuid& id) const;
    /// Drops entries older than the staleness horizon; returns how many.
    std::size_t evict_stale(Millis now);
    /// Entries not older than the horizon, in insertion order.
    [[nodiscard]] std::vector<Rud> fresh(Millis now) const;
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] Millis staleness() const { return staleness_; }

private:
    struct Slot {
        Rud rud;
        std::uint64_t order;
    };
    Millis staleness_;
    mutable std::shared_mutex mu_;
    std::unordered_map<Uuid, Slot> entries_;
    std::uint64_t next_order_ = 0;
};

}  // namespace lanemerge::orchestrator
