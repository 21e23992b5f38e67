#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "lanemerge/core/types.hpp"

namespace lanemerge::harness {

using SessionHandle = std::uint64_t;

/// What the world simulator needs from a message fabric: one session per
/// connected vehicle (and one for the camera), plus a log sink.
class Transport {
public:
    using Handler = std::function<void(const V2XEnvelope&, Millis received_at)>;

    virtual ~Transport() = default;
    virtual SessionHandle connect(const std::string& name, ClientRole role, Handler handler) = 0;
    virtual void subscribe(SessionHandle session, const std::string& topic) = 0;
    virtual void publish(SessionHandle session, const std::string& topic, Payload payload, Millis now) = 0;
    virtual void disconnect(SessionHandle session) = 0;
    virtual void log(const LogRecord& record) = 0;
};

}  // namespace lanemerge::harness
