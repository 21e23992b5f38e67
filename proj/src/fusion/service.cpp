#include "lanemerge/fusion/service.hpp"

#include "lanemerge/core/clock.hpp"

namespace lanemerge::fusion {

FusionService::FusionService(FusionConfig config, std::string name) : engine_(config), name_(std::move(name)) {}

std::vector<TopicSubscription> FusionService::subscriptions() const {
    return {{kTopicCameraRuds, std::nullopt}, {kTopicVehicleRuds, std::nullopt}};
}

void FusionService::on_message(const V2XEnvelope& envelope, Millis /*now*/, Outbox& /*out*/) {
    if (const auto* rud = std::get_if<Rud>(&envelope.payload)) engine_.intake(*rud);
}

std::optional<Millis> FusionService::next_tick(Millis now) const { return engine_.next_close(now); }

void FusionService::on_tick(Millis now, Outbox& out) {
    const auto t0 = monotonic_us();
    WindowOutput w = engine_.close(now);
    const auto elapsed = monotonic_us() - t0;
    ++windows_;
    for (auto& f : w.ruds) {
        LogRecord rec{name_, "rud_fused", rud_key(f.rud.uuid, f.rud.timestamp), now, {}};
        rec.attributes["origin"] = f.origin;
        rec.attributes["fused"] = f.fused;
        out.publish(kTopicGdm, std::move(f.rud));
        out.log(std::move(rec));
    }
    if (w.inputs == 0) return;
    LogRecord win{name_, "fusion_window", "window@" + std::to_string(now), now, {}};
    win.attributes["inputs"] = static_cast<std::int64_t>(w.inputs);
    win.attributes["outputs"] = static_cast<std::int64_t>(w.ruds.size());
    win.attributes["matches"] = static_cast<std::int64_t>(w.matches);
    win.attributes["stale_dropped"] = static_cast<std::int64_t>(w.stale_dropped);
    win.attributes["processing_us"] = static_cast<std::int64_t>(elapsed);
    out.log(std::move(win));
}

}  // namespace lanemerge::fusion
