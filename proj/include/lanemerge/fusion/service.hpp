#pragma once

#include "lanemerge/core/node.hpp"
#include "lanemerge/fusion/fusion.hpp"

namespace lanemerge::fusion {

/// Fuses "rud.camera" and "rud.vehicles" into "gdm.ruds". Every emitted RUD is
/// logged as rud_fused with its origin so delivery times can be traced back
/// to the first transmission; each window also logs its processing time.
class FusionService final : public ServiceNode {
public:
    explicit FusionService(FusionConfig config = {}, std::string name = "fusion");

    [[nodiscard]] std::string name() const override { return name_; }
    [[nodiscard]] ClientRole role() const override { return ClientRole::Fusion; }
    [[nodiscard]] std::vector<TopicSubscription> subscriptions() const override;
    void on_message(const V2XEnvelope& envelope, Millis now, Outbox& out) override;
    [[nodiscard]] std::optional<Millis> next_tick(Millis now) const override;
    void on_tick(Millis now, Outbox& out) override;

    [[nodiscard]] const FusionEngine& engine() const { return engine_; }
    [[nodiscard]] std::uint64_t windows() const { return windows_; }

private:
    FusionEngine engine_;
    std::string name_;
    std::uint64_t windows_ = 0;
};

}  // namespace lanemerge::fusion
