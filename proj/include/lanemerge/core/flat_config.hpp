#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lanemerge {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat `key = value` configuration. `[section]` headers prefix the keys that
/// follow with `section.`; `#` starts a comment; values may be double-quoted.
class FlatConfig {
public:
    static FlatConfig parse(std::string_view text);
    static FlatConfig load(const std::filesystem::path& path);

    /// Applies a `key=value` override.
    void set_override(std::string_view assignment);
    void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }

    [[nodiscard]] bool has(const std::string& key) const { return values_.contains(key); }
    [[nodiscard]] std::optional<std::string> get(const std::string& key) const;
    [[nodiscard]] std::string get_string(const std::string& key, std::string fallback) const;
    [[nodiscard]] double get_double(const std::string& key, double fallback) const;
    [[nodiscard]] long long get_int(const std::string& key, long long fallback) const;
    [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;
    [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace lanemerge
