#include "lanemerge/orchestrator/knowledge_base.hpp"

#include <algorithm>
#include <mutex>

namespace lanemerge::orchestrator {

KnowledgeBase::KnowledgeBase(Millis staleness_ms) : staleness_(staleness_ms) {
    if (staleness_ <= 0) throw InvariantError("knowledge base staleness horizon must be positive");
}

bool KnowledgeBase::upsert(const Rud& rud) {
    validate(rud);
    std::unique_lock lock(mu_);
    auto it = entries_.find(rud.uuid);
    if (it == entries_.end()) {
        entries_.emplace(rud.uuid, Slot{rud, next_order_++});
        return true;
    }
    if (rud.timestamp < it->second.rud.timestamp) return false;
    it->second.rud = rud;
    return true;
}

std::optional<Rud> KnowledgeBase::get(const Uuid& id) const {
    std::shared_lock lock(mu_);
    const auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.rud;
}

std::size_t KnowledgeBase::evict_stale(Millis now) {
    std::unique_lock lock(mu_);
    return std::erase_if(entries_, [&](const auto& kv) { return now - kv.second.rud.timestamp > staleness_; });
}

std::vector<Rud> KnowledgeBase::fresh(Millis now) const {
    std::vector<const Slot*> slots;
    {
        std::shared_lock lock(mu_);
        for (const auto& [id, s] : entries_) {
            if (now - s.rud.timestamp <= staleness_) slots.push_back(&s);
        }
        std::sort(slots.begin(), slots.end(), [](const Slot* a, const Slot* b) { return a->order < b->order; });
        std::vector<Rud> out;
        out.reserve(slots.size());
        for (const auto* s : slots) out.push_back(s->rud);
        return out;
    }
}

std::size_t KnowledgeBase::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

}  // namespace lanemerge::orchestrator
