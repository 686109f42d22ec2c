#pragma once

#include "isgr/config.hpp"
#include "isgr/prompts.hpp"
#include "isgr/text.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

namespace isgr {

/// Decoding settings. Defaults follow the inference settings the model was
/// served with: temperature 0.2, top-p 0.9, at most 128 output tokens.
struct GenerationParams {
    double temperature = 0.2;
    double top_p = 0.9;
    int max_output_tokens = 128;
    int num_candidates = 1;
    std::optional<long long> seed;

    void validate() const;
};

GenerationParams generation_params_from_config(const Config& config);

struct PromptRequest {
    TemplateId template_id = TemplateId::SpatialInit;
    std::string rendered_text;
    std::string image_ref;
    GenerationParams params;
};

/// Replay/record key: stable hash of (template_id, rendered_text, image_ref).
std::string fixture_key(const PromptRequest& request);

class Backend {
public:
    virtual ~Backend() = default;

    /// Exactly `k` raw completions for one request.
    virtual std::vector<std::string> generate_group(const PromptRequest& request, int k) = 0;

    std::string generate(const PromptRequest& request) { return generate_group(request, 1).at(0); }

    virtual std::string name() const = 0;

protected:
    static void check_request(const PromptRequest& request, int k);
};

// ---------------------------------------------------------------------------
// Mock

struct SceneObject {
    std::string key;
    std::string label;
    std::string qualifier;
    std::optional<BBox> bbox;

    std::string qualified_name() const;
};

/// Synthetic scene the mock backend renders its answers from.
struct SyntheticScene {
    std::string name;
    std::string image_ref;
    std::optional<std::string> question;
    std::vector<SceneObject> objects;
    std::vector<std::array<std::string, 3>> spatial;       // object keys + predicate
    std::vector<std::array<std::string, 3>> interactions;  // object keys + predicate
    std::vector<std::array<std::string, 3>> noise;         // raw names, emitted by interaction_knowledge
    std::vector<std::string> answers;

    const SceneObject& object(const std::string& key) const;
    static SyntheticScene from_json(const nlohmann::json& j);
};

class SceneLibrary {
public:
    /// `path` is a single scene file or a directory of `*.json` scenes.
    static SceneLibrary load(const std::filesystem::path& path);

    void add(SyntheticScene scene);
    const SyntheticScene* find(std::string_view image_ref) const;
    const std::map<std::string, SyntheticScene, std::less<>>& scenes() const { return scenes_; }

private:
    std::map<std::string, SyntheticScene, std::less<>> scenes_;
};

/// Deterministic template-grammar backend. Candidate i of a group is rendered
/// with sub-seed `seed + i`; identical (seed, request) pairs give identical text.
class MockBackend : public Backend {
public:
    explicit MockBackend(SceneLibrary scenes, long long seed = 0);

    std::vector<std::string> generate_group(const PromptRequest& request, int k) override;
    std::string name() const override { return "mock"; }

    std::string render(const PromptRequest& request, long long sub_seed) const;

private:
    SceneLibrary scenes_;
    long long seed_;
};

// ---------------------------------------------------------------------------
// Replay / record

/// Fixture store: `manifest.json` maps keys to candidate files, plus a copy of
/// template id and image ref so the mapping is readable by hand.
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(std::filesystem::path dir);

    std::vector<std::string> generate_group(const PromptRequest& request, int k) override;
    std::string name() const override { return "replay"; }

private:
    std::filesystem::path dir_;
    nlohmann::json manifest_;
};

/// Pass-through that writes every completion into a replay fixture store.
class RecordingBackend : public Backend {
public:
    RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path dir);

    std::vector<std::string> generate_group(const PromptRequest& request, int k) override;
    std::string name() const override { return "record(" + inner_->name() + ")"; }

private:
    std::shared_ptr<Backend> inner_;
    std::filesystem::path dir_;
    std::mutex mu_;
    nlohmann::json manifest_;
};

// ---------------------------------------------------------------------------
// HTTP chat-completion client

struct HttpSettings {
    std::string endpoint_url;
    std::string model;
    std::string auth_token;
    int timeout_ms = 60000;
    int max_retries = 3;
    int retry_backoff_ms = 200;
    int max_concurrency = 4;
    std::optional<std::filesystem::path> image_dir;
};

class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpSettings settings);

    std::vector<std::string> generate_group(const PromptRequest& request, int k) override;
    std::string name() const override { return "http"; }

    /// JSON body for one chat-completion call asking for `n` choices.
    nlohmann::json request_body(const PromptRequest& request, int n) const;

private:
    std::vector<std::string> post_once(const nlohmann::json& body);

    HttpSettings settings_;
    std::string scheme_host_port_;
    std::string path_;
    std::counting_semaphore<1024> slots_;
};

/// Builds the backend named by `backend.kind`, wrapped in a recorder when
/// `backend.record_dir` is set.
std::shared_ptr<Backend> make_backend(const Config& config);

}  // namespace isgr
