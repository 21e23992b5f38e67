#include "lanemerge/core/uuid.hpp"

#include <array>
#include <stdexcept>

namespace lanemerge {

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

Uuid Uuid::generate(std::mt19937_64& rng) {
    std::uint64_t hi = rng();
    std::uint64_t lo = rng();
    hi = (hi & 0xffffffffffff0fffULL) | 0x0000000000004000ULL;  // version 4
    lo = (lo & 0x3fffffffffffffffULL) | 0x8000000000000000ULL;  // RFC 4122 variant
    return {hi, lo};
}

Uuid Uuid::parse(std::string_view text) {
    if (text.size() != 36 || text[8] != '-' || text[13] != '-' || text[18] != '-' || text[23] != '-') {
        throw std::invalid_argument("malformed uuid: " + std::string(text));
    }
    std::uint64_t words[2] = {0, 0};
    int nibble = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (i == 8 || i == 13 || i == 18 || i == 23) continue;
        const int v = hex_value(text[i]);
        if (v < 0) throw std::invalid_argument("malformed uuid: " + std::string(text));
        auto& w = words[nibble / 16];
        w = (w << 4) | static_cast<std::uint64_t>(v);
        ++nibble;
    }
    return {words[0], words[1]};
}

std::string Uuid::str() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(36);
    auto emit = [&](std::uint64_t w, int from, int to) {
        for (int n = from; n < to; ++n) out.push_back(digits[(w >> (60 - 4 * n)) & 0xf]);
    };
    emit(hi_, 0, 8);
    out.push_back('-');
    emit(hi_, 8, 12);
    out.push_back('-');
    emit(hi_, 12, 16);
    out.push_back('-');
    emit(lo_, 0, 4);
    out.push_back('-');
    emit(lo_, 4, 16);
    return out;
}

}  // namespace lanemerge
