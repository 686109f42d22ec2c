#include "isgr/config.hpp"

#include "isgr/error.hpp"

#include <algorithm>
#include <fstream>

namespace isgr {

const std::vector<std::string>& Config::known_keys() {
    static const std::vector<std::string> keys = {
        "backend.kind",
        "backend.endpoint_url",
        "backend.model",
        "backend.auth_token_env",
        "backend.timeout_ms",
        "backend.max_retries",
        "backend.retry_backoff_ms",
        "backend.max_concurrency",
        "backend.scenes",
        "backend.fixture_dir",
        "backend.image_dir",
        "backend.record_dir",
        "generation.temperature",
        "generation.top_p",
        "generation.max_output_tokens",
        "generation.k",
        "generation.seed",
        "pipeline.n_focus",
        "pipeline.m_salient",
        "pipeline.require_grounding",
        "pipeline.exclusive_predicates",
        "pipeline.max_refinement_rounds",
        "pipeline.template_dir",
        "reward.lambda_focus",
        "reward.lambda_disamb",
        "reward.lambda_rele",
        "reward.answer_match_bonus",
        "dataset.parallelism",
        "dataset.backend_phrasing",
    };
    return keys;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + ex.what());
    }
    return from_json(j, path.parent_path());
}

Config Config::from_json(const nlohmann::json& j, std::filesystem::path base_dir) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
    Config c;
    c.base_dir_ = std::move(base_dir);
    for (const auto& [key, value] : j.items()) c.set(key, value);
    return c;
}

void Config::set(std::string_view key, nlohmann::json value) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
    }
    values_[std::string(key)] = std::move(value);
}

void Config::set_from_assignment(std::string_view assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw Error(ErrorCode::InvalidConfig, "expected key=value, got '" + std::string(assignment) + "'");
    }
    std::string_view key = assignment.substr(0, eq);
    std::string raw(assignment.substr(eq + 1));
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    set(key, std::move(value));
}

bool Config::has(std::string_view key) const { return values_.find(key) != values_.end(); }

const nlohmann::json* Config::find(std::string_view key) const {
    auto it = values_.find(key);
    return it == values_.end() ? nullptr : &it->second;
}

namespace {
template <typename T>
T typed(const nlohmann::json* v, std::string_view key, T fallback) {
    if (!v || v->is_null()) return fallback;
    try {
        return v->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::InvalidConfig, "config key '" + std::string(key) + "' has the wrong type");
    }
}
}  // namespace

std::string Config::get_string(std::string_view key, std::string fallback) const {
    return typed<std::string>(find(key), key, std::move(fallback));
}

double Config::get_double(std::string_view key, double fallback) const {
    return typed<double>(find(key), key, fallback);
}

long long Config::get_int(std::string_view key, long long fallback) const {
    const nlohmann::json* v = find(key);
    if (v && v->is_number_float()) {
        throw Error(ErrorCode::InvalidConfig, "config key '" + std::string(key) + "' must be an integer");
    }
    return typed<long long>(v, key, fallback);
}

bool Config::get_bool(std::string_view key, bool fallback) const {
    return typed<bool>(find(key), key, fallback);
}

std::optional<std::filesystem::path> Config::get_path(std::string_view key) const {
    if (!has(key)) return std::nullopt;
    std::filesystem::path p = get_string(key);
    if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
    return p;
}

nlohmann::json Config::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
}

}  // namespace isgr
