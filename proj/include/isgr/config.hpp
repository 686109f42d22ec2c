#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace isgr {

/// Flat key/value configuration: a JSON object whose keys are dotted names
/// ("backend.kind", "generation.temperature", ...). Unknown keys are rejected.
class Config {
public:
    Config() = default;

    static Config load(const std::filesystem::path& path);
    static Config from_json(const nlohmann::json& j, std::filesystem::path base_dir = {});

    static const std::vector<std::string>& known_keys();

    void set(std::string_view key, nlohmann::json value);
    /// Parses "key=value"; the value is read as JSON when it parses, else as a string.
    void set_from_assignment(std::string_view assignment);

    bool has(std::string_view key) const;
    const nlohmann::json* find(std::string_view key) const;

    std::string get_string(std::string_view key, std::string fallback = {}) const;
    double get_double(std::string_view key, double fallback) const;
    long long get_int(std::string_view key, long long fallback) const;
    bool get_bool(std::string_view key, bool fallback) const;

    /// String value resolved against the directory of the config file when relative.
    std::optional<std::filesystem::path> get_path(std::string_view key) const;

    const std::filesystem::path& base_dir() const { return base_dir_; }
    nlohmann::json to_json() const;

private:
    std::map<std::string, nlohmann::json, std::less<>> values_;
    std::filesystem::path base_dir_;
};

}  // namespace isgr
