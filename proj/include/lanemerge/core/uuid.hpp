#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>

namespace lanemerge {

/// 128-bit identifier in canonical 8-4-4-4-12 hex form.
class Uuid {
public:
    constexpr Uuid() = default;
    constexpr Uuid(std::uint64_t hi, std::uint64_t lo) : hi_(hi), lo_(lo) {}

    /// Random version-4 uuid drawn from `rng`; deterministic for a seeded engine.
    static Uuid generate(std::mt19937_64& rng);

    /// Throws std::invalid_argument on anything but the canonical lowercase/uppercase hex form.
    static Uuid parse(std::string_view text);

    [[nodiscard]] std::string str() const;
    [[nodiscard]] constexpr std::uint64_t hi() const { return hi_; }
    [[nodiscard]] constexpr std::uint64_t lo() const { return lo_; }
    [[nodiscard]] constexpr bool is_nil() const { return hi_ == 0 && lo_ == 0; }

    auto operator<=>(const Uuid&) const = default;

private:
    std::uint64_t hi_ = 0;
    std::uint64_t lo_ = 0;
};

}  // namespace lanemerge

template <>
struct std::hash<lanemerge::Uuid> {
    std::size_t operator()(const lanemerge::Uuid& u) const noexcept {
        return std::hash<std::uint64_t>{}(u.hi() * 0x9e3779b97f4a7c15ULL ^ u.lo());
    }
};
