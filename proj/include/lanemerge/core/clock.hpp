#pragma once

#include <chrono>
#include <cstdint>

#include "lanemerge/core/types.hpp"

namespace lanemerge {

/// System-wide monotonic clock. Every process on the host reads the same
/// clock, so timestamps taken in different services compare without skew.
inline Millis monotonic_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

inline std::int64_t monotonic_us() {
    return std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace lanemerge
