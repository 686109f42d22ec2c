#pragma once

#include "isgr/backend.hpp"
#include "isgr/error.hpp"
#include "isgr/graph.hpp"
#include "isgr/parser.hpp"
#include "isgr/prompts.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace isgr {

struct PipelineConfig {
    int n_focus = 8;
    int m_salient = 6;
    bool require_grounding = false;
    std::vector<std::set<std::string>> exclusive_predicate_sets;
    int max_refinement_rounds = 1;

    void validate() const;
    static PipelineConfig from_config(const Config& config);
};

enum class DropReason { Relevance, Focus, SelfLoop, UnresolvedEndpoint, Consistency, Grounding, Saliency, Prune };

std::string_view to_string(DropReason reason);

struct DropRecord {
    enum class Item { Entity, Edge, Triple };

    Item item = Item::Entity;
    DropReason reason = DropReason::Relevance;
    std::optional<EntityId> entity;
    std::optional<Edge> edge;
    std::string description;  // display-level rendering of the dropped item
};

struct StageRecord {
    Stage stage = Stage::Spatial;
    int round = 0;
    TemplateId template_id = TemplateId::SpatialInit;
    std::string prompt;
    std::string raw_output;
    std::vector<RawTriple> parsed;
    std::vector<ParseWarning> warnings;
    std::vector<DropRecord> drops;
    std::vector<std::string> notes;
    std::optional<std::string> error;
};

struct PipelineTrace {
    std::string image_ref;
    std::optional<std::string> question;
    std::vector<StageRecord> stages;
    std::optional<SceneGraph> final_graph;
};

nlohmann::json to_json(const DropRecord& d);
nlohmann::json to_json(const StageRecord& r);
nlohmann::json to_json(const PipelineTrace& t);

/// Thrown by Pipeline::run; carries the trace up to and including the failed stage.
class PipelineFailure : public Error {
public:
    PipelineFailure(const Error& cause, PipelineTrace trace)
        : Error(cause.code(), cause.detail()), trace_(std::move(trace)) {}

    const PipelineTrace& trace() const { return trace_; }

private:
    PipelineTrace trace_;
};

struct PipelineResult {
    SceneGraph final_graph;
    PipelineTrace trace;
};

/// Deterministic graph filters. Each returns one drop record per removed item.
namespace filters {

/// Keeps the connected component of question-mentioned entities, or of the
/// highest-salience entity when the question names none.
std::vector<DropRecord> relevance(SceneGraph& g);

/// Keeps the `n` entities with the highest salience (degree + 2 if question-mentioned).
std::vector<DropRecord> focus(SceneGraph& g, int n);

/// Makes display names unique. Qualifiers come from names in `hints` that
/// extend an ambiguous label ("player" -> "player in black"), matched to an
/// entity by bbox or by edge signature; ordinal suffixes are the fallback.
std::vector<std::string> disambiguate(SceneGraph& g, const std::vector<RawTriple>& hints);

/// Within an unordered endpoint pair, at most one interaction predicate from
/// each exclusive set survives: highest subject salience, then smaller predicate.
std::vector<DropRecord> consistency(SceneGraph& g, const std::vector<std::set<std::string>>& exclusive_sets);

std::vector<DropRecord> grounding(SceneGraph& g, bool require, std::vector<std::string>* notes = nullptr);

/// Keeps the `m` interaction edges with the largest endpoint-salience sum.
std::vector<DropRecord> saliency(SceneGraph& g, int m);

std::vector<DropRecord> prune_isolated(SceneGraph& g);

}  // namespace filters

/// Staged construction: spatial -> abstract -> interaction -> final, with the
/// abstract..final refinement repeated `max_refinement_rounds` times.
class Pipeline {
public:
    Pipeline(std::shared_ptr<Backend> backend, PipelineConfig config, TemplateSet templates = {},
             GenerationParams params = {});

    SceneGraph build_spatial(const std::string& image_ref, const std::optional<std::string>& question,
                             StageRecord* record = nullptr) const;

    /// Accepts a Spatial graph, or a Final graph when refining.
    SceneGraph abstract_graph(const SceneGraph& g, StageRecord* record = nullptr) const;

    /// `caption` is the raw text of the spatial stage; labels found in it may be
    /// added as new entities when an interaction names them.
    SceneGraph icot_interactions(const SceneGraph& g, const std::string& caption,
                                 StageRecord* record = nullptr) const;

    SceneGraph final_abstract(const SceneGraph& g, StageRecord* record = nullptr) const;

    PipelineResult run(const std::string& image_ref, const std::optional<std::string>& question) const;

    /// Same as run() but starts from an existing spatial graph (e.g. an upstream annotation).
    PipelineResult run_from_spatial(const SceneGraph& spatial) const;

    const PipelineConfig& config() const { return config_; }
    const std::shared_ptr<Backend>& backend() const { return backend_; }
    const TemplateSet& templates() const { return templates_; }
    const GenerationParams& params() const { return params_; }

private:
    PipelineResult refine(SceneGraph spatial, const std::string& caption, PipelineTrace trace) const;
    std::string call(TemplateId id, const std::string& prompt, const std::string& image_ref) const;

    std::shared_ptr<Backend> backend_;
    PipelineConfig config_;
    TemplateSet templates_;
    GenerationParams params_;
};

/// Backend, templates, generation parameters and filter settings from one config.
Pipeline make_pipeline(const Config& config);

/// Sets question_mentioned on every entity named in `question`.
void mark_question_mentions(SceneGraph& g, const std::optional<std::string>& question);

}  // namespace isgr
