#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <json.hpp>

#include "lanemerge/core/types.hpp"

namespace lanemerge::wire {

/// Base for every encode/decode failure.
class WireError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input is not JSON, or is truncated.
class ParseError : public WireError {
public:
    using WireError::WireError;
};

/// JSON parsed but a field is missing, mistyped, or violates an invariant.
class SchemaError : public WireError {
public:
    using WireError::WireError;
};

/// `msg_type` names no known payload.
class UnknownTypeError : public WireError {
public:
    using WireError::WireError;
};

/// One newline-terminated UTF-8 JSON line. Rejects non-finite floats and invalid payloads.
std::string encode_envelope(const V2XEnvelope& env);

/// Parses one line (a trailing '\n' is accepted). Never returns a partial value.
V2XEnvelope decode_envelope(std::string_view line);

// Payload-level JSON, reused by file formats (instances, recommendation dumps, log spills).
nlohmann::ordered_json to_json(const RoadUserDescription& rud);
nlohmann::ordered_json to_json(const TrajectoryRecommendation& reco);
nlohmann::ordered_json to_json(const LogRecord& rec);
RoadUserDescription rud_from_json(const nlohmann::json& j);
TrajectoryRecommendation recommendation_from_json(const nlohmann::json& j);
LogRecord log_record_from_json(const nlohmann::json& j);

/// Tracks per-(sender, topic) sequence numbers seen by a decoder.
class SequenceTracker {
public:
    /// True if `env.seq` is strictly greater than the last seen for its (sender, topic).
    bool observe(const V2XEnvelope& env);
    [[nodiscard]] std::size_t violations() const { return violations_; }

private:
    std::map<std::pair<std::string, std::string>, std::uint64_t> last_;
    std::size_t violations_ = 0;
};

}  // namespace lanemerge::wire
