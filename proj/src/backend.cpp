#include "isgr/backend.hpp"

#include "isgr/error.hpp"
#include "isgr/hash.hpp"

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace isgr {

void GenerationParams::validate() const {
    if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::InvalidConfig, "top_p must be in (0,1]");
    if (max_output_tokens <= 0) throw Error(ErrorCode::InvalidConfig, "max_output_tokens must be positive");
    if (num_candidates <= 0) throw Error(ErrorCode::InvalidConfig, "k must be positive");
}

GenerationParams generation_params_from_config(const Config& config) {
    GenerationParams p;
    p.temperature = config.get_double("generation.temperature", p.temperature);
    p.top_p = config.get_double("generation.top_p", p.top_p);
    p.max_output_tokens = static_cast<int>(config.get_int("generation.max_output_tokens", p.max_output_tokens));
    p.num_candidates = static_cast<int>(config.get_int("generation.k", p.num_candidates));
    if (config.has("generation.seed")) p.seed = config.get_int("generation.seed", 0);
    p.validate();
    return p;
}

std::string fixture_key(const PromptRequest& request) {
    return stable_key({to_string(request.template_id), request.rendered_text, request.image_ref});
}

void Backend::check_request(const PromptRequest& request, int k) {
    if (k < 1) throw Error(ErrorCode::InvalidRequest, "group size must be >= 1");
    if (request.rendered_text.empty()) throw Error(ErrorCode::InvalidRequest, "empty prompt");
}

// ---------------------------------------------------------------------------
// Scenes

std::string SceneObject::qualified_name() const {
    return qualifier.empty() ? label : label + " " + qualifier;
}

const SceneObject& SyntheticScene::object(const std::string& key) const {
    for (const auto& o : objects) {
        if (o.key == key) return o;
    }
    throw Error(ErrorCode::InvalidConfig, "scene '" + name + "' has no object '" + key + "'");
}

namespace {
std::vector<std::array<std::string, 3>> read_triples(const nlohmann::json& j, const char* field) {
    std::vector<std::array<std::string, 3>> out;
    if (!j.contains(field)) return out;
    for (const auto& t : j.at(field)) {
        if (!t.is_array() || t.size() != 3) {
            throw Error(ErrorCode::InvalidConfig, std::string("scene triple in '") + field + "' needs 3 strings");
        }
        out.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
    }
    return out;
}
}  // namespace

SyntheticScene SyntheticScene::from_json(const nlohmann::json& j) {
    try {
        SyntheticScene s;
        s.name = j.value("name", std::string{});
        s.image_ref = j.at("image_ref").get<std::string>();
        if (s.name.empty()) s.name = s.image_ref;
        if (j.contains("question") && !j.at("question").is_null()) s.question = j.at("question").get<std::string>();
        for (const auto& o : j.at("objects")) {
            SceneObject obj;
            obj.key = o.at("key").get<std::string>();
            obj.label = o.at("label").get<std::string>();
            obj.qualifier = o.value("qualifier", std::string{});
            if (o.contains("bbox") && !o.at("bbox").is_null()) {
                const auto& b = o.at("bbox");
                obj.bbox = BBox{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                                b.at(3).get<double>()};
                if (!obj.bbox->valid()) throw Error(ErrorCode::InvalidBbox, obj.key);
            }
            s.objects.push_back(std::move(obj));
        }
        s.spatial = read_triples(j, "spatial");
        s.interactions = read_triples(j, "interactions");
        s.noise = read_triples(j, "noise");
        if (j.contains("answers")) s.answers = j.at("answers").get<std::vector<std::string>>();
        for (const auto* list : {&s.spatial, &s.interactions}) {
            for (const auto& t : *list) {
                s.object(t[0]);
                s.object(t[2]);
            }
        }
        return s;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::InvalidConfig, std::string("scene fixture: ") + ex.what());
    }
}

SceneLibrary SceneLibrary::load(const std::filesystem::path& path) {
    SceneLibrary lib;
    auto load_file = [&](const std::filesystem::path& file) {
        std::ifstream in(file);
        if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read scene " + file.string());
        try {
            lib.add(SyntheticScene::from_json(nlohmann::json::parse(in)));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::InvalidConfig, file.string() + ": " + ex.what());
        }
    };
    if (std::filesystem::is_directory(path)) {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(path)) {
            if (entry.path().extension() == ".json") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) load_file(f);
    } else {
        load_file(path);
    }
    return lib;
}

void SceneLibrary::add(SyntheticScene scene) {
    std::string key = scene.image_ref;
    scenes_.insert_or_assign(std::move(key), std::move(scene));
}

const SyntheticScene* SceneLibrary::find(std::string_view image_ref) const {
    auto it = scenes_.find(image_ref);
    return it == scenes_.end() ? nullptr : &it->second;
}

// ---------------------------------------------------------------------------
// Mock

MockBackend::MockBackend(SceneLibrary scenes, long long seed) : scenes_(std::move(scenes)), seed_(seed) {}

std::vector<std::string> MockBackend::generate_group(const PromptRequest& request, int k) {
    check_request(request, k);
    long long base = request.params.seed.value_or(seed_);
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) out.push_back(render(request, base + i));
    return out;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Uses raw engine output only; std distributions are implementation-defined.
template <typename T>
void shuffle_deterministic(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

std::string with_box(const std::string& name, const std::optional<BBox>& box) {
    return box ? name + format_bbox(*box) : name;
}

std::string triple_line(const std::string& s, const std::string& p, const std::string& o, int style) {
    switch (style) {
        case 1: return "<" + s + ", " + p + ", " + o + ">";
        case 2: return "(" + s + ", " + p + ", " + o + ")";
        default: return "- <" + s + ", " + p + ", " + o + ">";
    }
}

}  // namespace

std::string MockBackend::render(const PromptRequest& request, long long sub_seed) const {
    const SyntheticScene* scene = scenes_.find(request.image_ref);
    if (!scene) throw Error(ErrorCode::UnknownScene, "mock backend has no scene for '" + request.image_ref + "'");
    std::mt19937_64 rng(static_cast<std::uint64_t>(sub_seed) ^ fnv1a(to_string(request.template_id)));
    std::ostringstream out;

    switch (request.template_id) {
        case TemplateId::SpatialInit: {
            auto triples = scene->spatial;
            shuffle_deterministic(triples, rng);
            if (rng() % 2 == 0) out << "Spatial scene graph:\n";
            for (const auto& t : triples) {
                const auto& s = scene->object(t[0]);
                const auto& o = scene->object(t[2]);
                out << triple_line(with_box(s.label, s.bbox), t[1], with_box(o.label, o.bbox),
                                   static_cast<int>(rng() % 3))
                    << "\n";
            }
            break;
        }
        case TemplateId::Abstract: {
            for (const auto& t : scene->spatial) {
                const auto& s = scene->object(t[0]);
                const auto& o = scene->object(t[2]);
                out << triple_line(with_box(s.qualified_name(), s.bbox), t[1],
                                   with_box(o.qualified_name(), o.bbox), 0)
                    << "\n";
            }
            break;
        }
        case TemplateId::InteractionKnowledge:
        case TemplateId::InteractionGraph: {
            for (const auto& t : scene->interactions) {
                out << triple_line(scene->object(t[0]).qualified_name(), t[1],
                                   scene->object(t[2]).qualified_name(), 0)
                    << "\n";
            }
            if (request.template_id == TemplateId::InteractionKnowledge) {
                for (const auto& t : scene->noise) out << triple_line(t[0], t[1], t[2], 0) << "\n";
            }
            break;
        }
        case TemplateId::QaGeneration: {
            int n = 1;
            if (scene->question && !scene->answers.empty()) {
                auto idx = static_cast<std::size_t>(sub_seed < 0 ? -sub_seed : sub_seed) % scene->answers.size();
                out << n++ << ". Q: " << *scene->question << "\nA: " << scene->answers[idx] << "\n\n";
            }
            if (scene->interactions.empty()) break;
            const auto pick = static_cast<std::size_t>(sub_seed < 0 ? -sub_seed : sub_seed) % scene->interactions.size();
            const auto& t = scene->interactions[pick];
            const auto& s = scene->object(t[0]);
            const auto& o = scene->object(t[2]);
            const std::string sn = s.qualified_name();
            const std::string on = o.qualified_name();
            out << n++ << ". Q: What is the relationship between " << with_box(sn, s.bbox) << " and "
                << with_box(on, o.bbox) << "?\nA: " << sn << " " << t[1] << " " << on << ".\n\n";
            out << n++ << ". Q: What does " << with_box(sn, s.bbox) << " " << t[1] << "?\nA: " << sn << " " << t[1]
                << " " << with_box(on, o.bbox) << ".\n\n";
            out << n++ << ". Q: What is " << t[1] << " by " << with_box(on, o.bbox) << "?\nA: "
                << with_box(sn, s.bbox) << " " << t[1] << " " << on << ".\n\n";
            out << n++ << ". Q: What objects have a relationship with " << with_box(sn, s.bbox) << "?\nA: " << sn;
            bool first = true;
            for (const auto& u : scene->interactions) {
                if (u[0] != t[0]) continue;
                const auto& x = scene->object(u[2]);
                out << (first ? " " : ", ") << u[1] << " " << with_box(x.qualified_name(), x.bbox);
                first = false;
            }
            out << ".\n\n";
            break;
        }
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Replay / record

namespace {
std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::FixtureMiss, "unreadable fixture file " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
}  // namespace

ReplayBackend::ReplayBackend(std::filesystem::path dir) : dir_(std::move(dir)) {
    auto manifest = dir_ / "manifest.json";
    if (std::filesystem::exists(manifest)) {
        try {
            manifest_ = nlohmann::json::parse(read_file(manifest));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::InvalidConfig, "replay manifest: " + std::string(ex.what()));
        }
    }
    if (!manifest_.is_object()) manifest_ = nlohmann::json::object();
    if (!manifest_.contains("fixtures")) manifest_["fixtures"] = nlohmann::json::object();
}

std::vector<std::string> ReplayBackend::generate_group(const PromptRequest& request, int k) {
    check_request(request, k);
    const std::string key = fixture_key(request);
    const auto& fixtures = manifest_.at("fixtures");
    auto it = fixtures.find(key);
    if (it == fixtures.end()) {
        throw Error(ErrorCode::FixtureMiss, "no fixture for key " + key + " (template " +
                                                std::string(to_string(request.template_id)) + ", image " +
                                                request.image_ref + ")");
    }
    const auto& files = it->at("files");
    if (files.size() < static_cast<std::size_t>(k)) {
        throw Error(ErrorCode::FixtureMiss, "fixture " + key + " has " + std::to_string(files.size()) +
                                                " candidates, " + std::to_string(k) + " requested");
    }
    std::vector<std::string> out;
    for (int i = 0; i < k; ++i) out.push_back(read_file(dir_ / files[static_cast<std::size_t>(i)].get<std::string>()));
    return out;
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    auto manifest = dir_ / "manifest.json";
    if (std::filesystem::exists(manifest)) manifest_ = nlohmann::json::parse(read_file(manifest));
    if (!manifest_.is_object()) manifest_ = nlohmann::json::object();
    if (!manifest_.contains("fixtures")) manifest_["fixtures"] = nlohmann::json::object();
}

std::vector<std::string> RecordingBackend::generate_group(const PromptRequest& request, int k) {
    auto out = inner_->generate_group(request, k);
    const std::string key = fixture_key(request);
    std::lock_guard lock(mu_);
    auto& entry = manifest_["fixtures"][key];
    std::size_t have = entry.contains("files") ? entry["files"].size() : 0;
    if (have >= out.size()) return out;
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::string file = key + "_" + std::to_string(i) + ".txt";
        std::ofstream f(dir_ / file, std::ios::binary);
        if (!f) throw Error(ErrorCode::UnwritableOutput, (dir_ / file).string());
        f << out[i];
        files.push_back(file);
    }
    entry["template_id"] = to_string(request.template_id);
    entry["image_ref"] = request.image_ref;
    entry["files"] = files;
    std::ofstream m(dir_ / "manifest.json", std::ios::binary);
    if (!m) throw Error(ErrorCode::UnwritableOutput, (dir_ / "manifest.json").string());
    m << manifest_.dump(2) << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// HTTP

HttpBackend::HttpBackend(HttpSettings settings)
    : settings_(std::move(settings)), slots_(std::clamp(settings_.max_concurrency, 1, 1024)) {
    const std::string& url = settings_.endpoint_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::InvalidConfig, "backend.endpoint_url must be an absolute URL: '" + url + "'");
    }
    auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
    if (settings_.max_retries < 0) throw Error(ErrorCode::InvalidConfig, "backend.max_retries must be >= 0");
}

namespace {
std::string mime_for(const std::filesystem::path& p) {
    auto ext = normalize_phrase(p.extension().string());
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    return "application/octet-stream";
}

std::string image_url(const std::string& ref, const std::optional<std::filesystem::path>& dir) {
    if (ref.starts_with("http://") || ref.starts_with("https://") || ref.starts_with("data:")) return ref;
    std::filesystem::path file = dir ? *dir / ref : std::filesystem::path(ref);
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::ImageUnavailable, file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return "data:" + mime_for(file) + ";base64," + base64_encode(ss.str());
}

struct Retryable : Error {
    using Error::Error;
};
}  // namespace

nlohmann::json HttpBackend::request_body(const PromptRequest& request, int n) const {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", request.rendered_text}});
    if (!request.image_ref.empty()) {
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url(request.image_ref, settings_.image_dir)}}}});
    }
    nlohmann::json body = {
        {"model", settings_.model},
        {"messages",
         {{{"role", "system"}, {"content", "You are an AI assistant."}}, {{"role", "user"}, {"content", content}}}},
        {"temperature", request.params.temperature},
        {"top_p", request.params.top_p},
        {"max_tokens", request.params.max_output_tokens},
        {"n", n},
    };
    if (request.params.seed) body["seed"] = *request.params.seed;
    return body;
}

std::vector<std::string> HttpBackend::post_once(const nlohmann::json& body) {
    httplib::Client cli(scheme_host_port_);
    auto ms = std::chrono::milliseconds(settings_.timeout_ms);
    cli.set_connection_timeout(ms);
    cli.set_read_timeout(ms);
    cli.set_write_timeout(ms);
    httplib::Headers headers;
    if (!settings_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + settings_.auth_token);
    auto res = cli.Post(path_, headers, body.dump(), "application/json");
    if (!res) {
        auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
            throw Retryable(ErrorCode::Timeout, scheme_host_port_ + path_ + ": " + httplib::to_string(err));
        }
        throw Retryable(ErrorCode::HttpStatus, scheme_host_port_ + path_ + ": " + httplib::to_string(err));
    }
    if (res->status == 429 || res->status >= 500) {
        throw Retryable(ErrorCode::HttpStatus, "status " + std::to_string(res->status));
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorCode::HttpStatus, "status " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    std::vector<std::string> texts;
    try {
        auto j = nlohmann::json::parse(res->body);
        for (const auto& choice : j.at("choices")) {
            const auto& content = choice.at("message").at("content");
            if (content.is_string()) {
                texts.push_back(content.get<std::string>());
            } else {
                std::string joined;
                for (const auto& part : content) {
                    if (part.value("type", "") == "text") joined += part.at("text").get<std::string>();
                }
                texts.push_back(joined);
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::MalformedResponse, ex.what());
    }
    if (texts.empty()) throw Error(ErrorCode::MalformedResponse, "response has no choices");
    return texts;
}

std::vector<std::string> HttpBackend::generate_group(const PromptRequest& request, int k) {
    check_request(request, k);
    std::vector<std::string> out;
    while (static_cast<int>(out.size()) < k) {
        PromptRequest req = request;
        if (req.params.seed) req.params.seed = *req.params.seed + static_cast<long long>(out.size());
        const auto body = request_body(req, k - static_cast<int>(out.size()));
        std::vector<std::string> got;
        for (int attempt = 0;; ++attempt) {
            slots_.acquire();
            try {
                got = post_once(body);
                slots_.release();
                break;
            } catch (const Retryable& e) {
                slots_.release();
                if (attempt >= settings_.max_retries) throw Error(e.code(), e.detail() + " after " +
                                                                               std::to_string(attempt + 1) + " attempts");
                std::this_thread::sleep_for(std::chrono::milliseconds(settings_.retry_backoff_ms) * (1LL << attempt));
            } catch (...) {
                slots_.release();
                throw;
            }
        }
        for (auto& t : got) {
            if (static_cast<int>(out.size()) < k) out.push_back(std::move(t));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::shared_ptr<Backend> make_backend(const Config& config) {
    const std::string kind = config.get_string("backend.kind", "mock");
    std::shared_ptr<Backend> backend;
    if (kind == "mock") {
        auto scenes = config.get_path("backend.scenes");
        if (!scenes) throw Error(ErrorCode::InvalidConfig, "mock backend needs backend.scenes");
        backend = std::make_shared<MockBackend>(SceneLibrary::load(*scenes), config.get_int("generation.seed", 0));
    } else if (kind == "replay") {
        auto dir = config.get_path("backend.fixture_dir");
        if (!dir) throw Error(ErrorCode::InvalidConfig, "replay backend needs backend.fixture_dir");
        backend = std::make_shared<ReplayBackend>(*dir);
    } else if (kind == "http") {
        HttpSettings s;
        s.endpoint_url = config.get_string("backend.endpoint_url");
        s.model = config.get_string("backend.model");
        std::string env = config.get_string("backend.auth_token_env");
        if (!env.empty()) {
            if (const char* token = std::getenv(env.c_str())) s.auth_token = token;
        }
        s.timeout_ms = static_cast<int>(config.get_int("backend.timeout_ms", s.timeout_ms));
        s.max_retries = static_cast<int>(config.get_int("backend.max_retries", s.max_retries));
        s.retry_backoff_ms = static_cast<int>(config.get_int("backend.retry_backoff_ms", s.retry_backoff_ms));
        s.max_concurrency = static_cast<int>(config.get_int("backend.max_concurrency", s.max_concurrency));
        s.image_dir = config.get_path("backend.image_dir");
        backend = std::make_shared<HttpBackend>(std::move(s));
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown backend.kind '" + kind + "'");
    }
    if (auto record = config.get_path("backend.record_dir")) {
        backend = std::make_shared<RecordingBackend>(backend, *record);
    }
    return backend;
}

}  // namespace isgr
