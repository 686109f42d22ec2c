#include "isgr/pipeline.hpp"

#include <algorithm>
#include <map>
#include <tuple>

namespace isgr {

void PipelineConfig::validate() const {
    if (n_focus < 1) throw Error(ErrorCode::InvalidConfig, "pipeline.n_focus must be >= 1");
    if (m_salient < 1) throw Error(ErrorCode::InvalidConfig, "pipeline.m_salient must be >= 1");
    if (max_refinement_rounds < 1) throw Error(ErrorCode::InvalidConfig, "pipeline.max_refinement_rounds must be >= 1");
}

PipelineConfig PipelineConfig::from_config(const Config& config) {
    PipelineConfig c;
    c.n_focus = static_cast<int>(config.get_int("pipeline.n_focus", c.n_focus));
    c.m_salient = static_cast<int>(config.get_int("pipeline.m_salient", c.m_salient));
    c.require_grounding = config.get_bool("pipeline.require_grounding", c.require_grounding);
    c.max_refinement_rounds = static_cast<int>(config.get_int("pipeline.max_refinement_rounds", c.max_refinement_rounds));
    if (const auto* sets = config.find("pipeline.exclusive_predicates")) {
        try {
            for (const auto& set : *sets) {
                std::set<std::string> preds;
                for (const auto& p : set) preds.insert(normalize_phrase(p.get<std::string>()));
                c.exclusive_predicate_sets.push_back(std::move(preds));
            }
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::InvalidConfig, "pipeline.exclusive_predicates must be a list of string lists");
        }
    }
    c.validate();
    return c;
}

std::string_view to_string(DropReason reason) {
    switch (reason) {
        case DropReason::Relevance: return "Relevance";
        case DropReason::Focus: return "Focus";
        case DropReason::SelfLoop: return "SelfLoop";
        case DropReason::UnresolvedEndpoint: return "UnresolvedEndpoint";
        case DropReason::Consistency: return "Consistency";
        case DropReason::Grounding: return "Grounding";
        case DropReason::Saliency: return "Saliency";
        case DropReason::Prune: return "Prune";
    }
    return "Unknown";
}

nlohmann::json to_json(const DropRecord& d) {
    static constexpr const char* kItems[] = {"entity", "edge", "triple"};
    nlohmann::json j = {{"item", kItems[static_cast<int>(d.item)]},
                        {"reason", to_string(d.reason)},
                        {"description", d.description}};
    if (d.entity) j["entity"] = d.entity->value;
    if (d.edge) j["edge"] = to_json(*d.edge);
    return j;
}

nlohmann::json to_json(const StageRecord& r) {
    nlohmann::json parsed = nlohmann::json::array();
    for (const auto& t : r.parsed) parsed.push_back(to_json(t));
    nlohmann::json warnings = nlohmann::json::array();
    for (const auto& w : r.warnings) warnings.push_back(to_json(w));
    nlohmann::json drops = nlohmann::json::array();
    for (const auto& d : r.drops) drops.push_back(to_json(d));
    nlohmann::json j = {{"stage", to_string(r.stage)},
                        {"round", r.round},
                        {"template_id", to_string(r.template_id)},
                        {"prompt", r.prompt},
                        {"raw_output", r.raw_output},
                        {"parsed_triples", parsed},
                        {"warnings", warnings},
                        {"drops", drops},
                        {"notes", r.notes}};
    j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const PipelineTrace& t) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : t.stages) stages.push_back(to_json(s));
    return {{"image_ref", t.image_ref},
            {"question", t.question ? nlohmann::json(*t.question) : nlohmann::json(nullptr)},
            {"stages", stages},
            {"final_graph", t.final_graph ? to_json(*t.final_graph) : nlohmann::json(nullptr)}};
}

void mark_question_mentions(SceneGraph& g, const std::optional<std::string>& question) {
    std::set<EntityId> hit;
    if (question) hit = g.entities_matching(*question);
    for (const auto& [id, e] : g.entities()) {
        (void)e;
        g.set_question_mentioned(id, hit.count(id) != 0);
    }
}

namespace {

std::string describe(const SceneGraph& g, const Edge& e) {
    return "<" + g.entity(e.subject).display_name() + ", " + e.predicate + ", " + g.entity(e.object).display_name() +
           ">";
}

std::string describe(const RawTriple& t) { return "<" + t.subject + ", " + t.predicate + ", " + t.object + ">"; }

void drop_entity(SceneGraph& g, EntityId id, DropReason reason, std::vector<DropRecord>& out) {
    const std::string name = g.entity(id).display_name();
    std::vector<std::string> edge_desc;
    for (const auto& e : g.edges()) {
        if (e.subject == id || e.object == id) edge_desc.push_back(describe(g, e));
    }
    auto removed = g.remove_entity(id);
    for (std::size_t i = 0; i < removed.size(); ++i) {
        out.push_back({DropRecord::Item::Edge, reason, std::nullopt, removed[i], edge_desc[i]});
    }
    out.push_back({DropRecord::Item::Entity, reason, id, std::nullopt, name});
}

void drop_edge(SceneGraph& g, const Edge& e, DropReason reason, std::vector<DropRecord>& out) {
    std::string desc = describe(g, e);
    Edge copy = e;
    g.remove_edge(copy);
    out.push_back({DropRecord::Item::Edge, reason, std::nullopt, copy, desc});
}

}  // namespace

namespace filters {

std::vector<DropRecord> relevance(SceneGraph& g) {
    std::vector<DropRecord> drops;
    if (g.entities().empty()) throw Error(ErrorCode::EmptyGraph, "no entities to filter");
    std::set<EntityId> seeds;
    for (const auto& [id, e] : g.entities()) {
        if (e.question_mentioned) seeds.insert(id);
    }
    if (seeds.empty()) {
        EntityId best = g.entities().begin()->first;
        std::size_t best_degree = 0;
        for (const auto& [id, e] : g.entities()) {
            (void)e;
            std::size_t d = g.degree(id);
            if (d > best_degree) {
                best = id;
                best_degree = d;
            }
        }
        seeds.insert(best);
    }
    const auto keep = g.connected_component(seeds);
    std::vector<EntityId> doomed;
    for (const auto& [id, e] : g.entities()) {
        (void)e;
        if (!keep.count(id)) doomed.push_back(id);
    }
    for (auto id : doomed) drop_entity(g, id, DropReason::Relevance, drops);
    return drops;
}

std::vector<DropRecord> focus(SceneGraph& g, int n) {
    std::vector<DropRecord> drops;
    if (static_cast<int>(g.entities().size()) <= n) return drops;
    struct Ranked {
        int salience;
        std::string name;
        EntityId id;
    };
    std::vector<Ranked> ranked;
    for (const auto& [id, e] : g.entities()) ranked.push_back({salience(g, id), e.display_name(), id});
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        return std::tie(b.salience, a.name, a.id) < std::tie(a.salience, b.name, b.id);
    });
    for (std::size_t i = static_cast<std::size_t>(n); i < ranked.size(); ++i) {
        drop_entity(g, ranked[i].id, DropReason::Focus, drops);
    }
    return drops;
}

namespace {

struct NameHint {
    std::string name;
    std::optional<BBox> bbox;
    std::string predicate;
    std::string other;
    bool as_subject;
};

bool other_end_matches(const SceneGraph& g, EntityId other, const std::string& hint_name) {
    const Entity& e = g.entity(other);
    if (hint_name == e.display_name() || hint_name == e.label) return true;
    return hint_name.starts_with(e.label + " ");
}

std::optional<EntityId> match_hint(const SceneGraph& g, const std::vector<EntityId>& group, const NameHint& hint) {
    if (hint.bbox) {
        std::optional<EntityId> found;
        for (auto id : group) {
            const auto& box = g.entity(id).bbox;
            if (box && approx_equal(*box, *hint.bbox)) {
                if (found) return std::nullopt;
                found = id;
            }
        }
        if (found) return found;
    }
    std::optional<EntityId> found;
    for (auto id : group) {
        bool hit = false;
        for (const auto& e : g.edges()) {
            if (e.predicate != hint.predicate) continue;
            if (hint.as_subject && e.subject == id && other_end_matches(g, e.object, hint.other)) hit = true;
            if (!hint.as_subject && e.object == id && other_end_matches(g, e.subject, hint.other)) hit = true;
        }
        if (hit) {
            if (found) return std::nullopt;
            found = id;
        }
    }
    return found;
}

}  // namespace

std::vector<std::string> disambiguate(SceneGraph& g, const std::vector<RawTriple>& hints) {
    std::vector<std::string> notes;
    std::map<std::string, std::vector<EntityId>> by_name;
    for (const auto& [id, e] : g.entities()) by_name[e.display_name()].push_back(id);

    std::vector<NameHint> names;
    for (const auto& t : hints) {
        names.push_back({t.subject, t.subject_bbox, t.predicate, t.object, true});
        names.push_back({t.object, t.object_bbox, t.predicate, t.subject, false});
    }

    auto taken = [&](const std::string& display, EntityId self) {
        for (const auto& [id, e] : g.entities()) {
            if (id != self && e.display_name() == display) return true;
        }
        return false;
    };

    for (auto& [display, group] : by_name) {
        if (group.size() < 2) continue;
        std::set<EntityId> assigned;
        for (const auto& hint : names) {
            if (!hint.name.starts_with(display + " ")) continue;
            std::string qualifier = hint.name.substr(display.size() + 1);
            auto id = match_hint(g, group, hint);
            if (!id || assigned.count(*id)) continue;
            auto quals = g.entity(*id).qualifiers;
            quals.push_back(qualifier);
            Entity probe = g.entity(*id);
            probe.qualifiers = quals;
            probe.qualifiers.back() = normalize_phrase(qualifier);
            if (taken(probe.display_name(), *id)) continue;
            g.set_qualifiers(*id, quals);
            assigned.insert(*id);
            notes.push_back("qualified '" + display + "' as '" + g.entity(*id).display_name() + "'");
        }
        // The first unqualified member keeps the bare name; the rest get "2", "3", ...
        int ordinal = 1;
        for (auto id : group) {
            if (assigned.count(id)) continue;
            if (ordinal == 1) {
                ++ordinal;
                continue;
            }
            auto base = g.entity(id).qualifiers;
            for (;; ++ordinal) {
                auto quals = base;
                quals.push_back(std::to_string(ordinal));
                Entity probe = g.entity(id);
                probe.qualifiers = quals;
                if (!taken(probe.display_name(), id)) {
                    g.set_qualifiers(id, quals);
                    notes.push_back("ordinal name '" + probe.display_name() + "'");
                    ++ordinal;
                    break;
                }
            }
        }
    }
    return notes;
}

std::vector<DropRecord> consistency(SceneGraph& g, const std::vector<std::set<std::string>>& exclusive_sets) {
    std::vector<DropRecord> drops;
    std::map<EntityId, int> sal;
    for (const auto& [id, e] : g.entities()) {
        (void)e;
        sal[id] = salience(g, id);
    }
    for (const auto& set : exclusive_sets) {
        std::map<std::pair<EntityId, EntityId>, std::vector<Edge>> by_pair;
        for (const auto& e : g.edges()) {
            if (e.kind != EdgeKind::Interaction || !set.count(e.predicate)) continue;
            auto key = std::minmax(e.subject, e.object);
            by_pair[{key.first, key.second}].push_back(e);
        }
        for (auto& [pair, edges] : by_pair) {
            if (edges.size() < 2) continue;
            std::sort(edges.begin(), edges.end(), [&](const Edge& a, const Edge& b) {
                int sa = sal[a.subject];
                int sb = sal[b.subject];
                if (sa != sb) return sa > sb;
                if (a.predicate != b.predicate) return a.predicate < b.predicate;
                return g.entity(a.subject).display_name() < g.entity(b.subject).display_name();
            });
            for (std::size_t i = 1; i < edges.size(); ++i) drop_edge(g, edges[i], DropReason::Consistency, drops);
        }
    }
    return drops;
}

std::vector<DropRecord> grounding(SceneGraph& g, bool require, std::vector<std::string>* notes) {
    std::vector<DropRecord> drops;
    std::vector<Edge> ungrounded;
    for (const auto& e : g.edges()) {
        if (e.kind == EdgeKind::Interaction && !e.grounded) ungrounded.push_back(e);
    }
    if (require) {
        for (const auto& e : ungrounded) drop_edge(g, e, DropReason::Grounding, drops);
    } else if (notes) {
        for (const auto& e : ungrounded) notes->push_back("ungrounded " + describe(g, e));
    }
    return drops;
}

std::vector<DropRecord> saliency(SceneGraph& g, int m) {
    std::vector<DropRecord> drops;
    struct Ranked {
        int score;
        std::string s, p, o;
        Edge edge;
    };
    std::vector<Ranked> ranked;
    for (const auto& e : g.edges()) {
        if (e.kind != EdgeKind::Interaction) continue;
        ranked.push_back({salience(g, e.subject) + salience(g, e.object), g.entity(e.subject).display_name(),
                          e.predicate, g.entity(e.object).display_name(), e});
    }
    if (static_cast<int>(ranked.size()) <= m) return drops;
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        return std::tie(b.score, a.s, a.p, a.o) < std::tie(a.score, b.s, b.p, b.o);
    });
    for (std::size_t i = static_cast<std::size_t>(m); i < ranked.size(); ++i) {
        drop_edge(g, ranked[i].edge, DropReason::Saliency, drops);
    }
    return drops;
}

std::vector<DropRecord> prune_isolated(SceneGraph& g) {
    std::vector<DropRecord> drops;
    std::vector<EntityId> isolated;
    for (const auto& [id, e] : g.entities()) {
        (void)e;
        if (g.degree(id) == 0) isolated.push_back(id);
    }
    for (auto id : isolated) drop_entity(g, id, DropReason::Prune, drops);
    return drops;
}

}  // namespace filters

// ---------------------------------------------------------------------------

Pipeline::Pipeline(std::shared_ptr<Backend> backend, PipelineConfig config, TemplateSet templates,
                   GenerationParams params)
    : backend_(std::move(backend)), config_(std::move(config)), templates_(std::move(templates)), params_(params) {
    config_.validate();
    params_.validate();
    for (auto& set : config_.exclusive_predicate_sets) {
        std::set<std::string> norm;
        for (const auto& p : set) norm.insert(normalize_phrase(p));
        set = std::move(norm);
    }
}

std::string Pipeline::call(TemplateId id, const std::string& prompt, const std::string& image_ref) const {
    PromptRequest req{id, prompt, image_ref, params_};
    return backend_->generate(req);
}

namespace {

constexpr const char* kImageToken = "<image>";

std::map<std::string, std::string> base_vars(const SceneGraph& g) {
    return {{"image", kImageToken}, {"question", g.question().value_or("")}};
}

std::string block(const std::string& triples) { return "\n" + triples; }

struct StageScope {
    StageRecord local;
    StageRecord* target;
    explicit StageScope(StageRecord* r) : target(r ? r : &local) {}
    StageRecord& operator*() { return *target; }
    StageRecord* operator->() { return target; }
};

EntityId resolve_spatial(SceneGraph& g, const std::string& name, const std::optional<BBox>& box) {
    auto same_label = g.find_by_label(name);
    if (box) {
        for (auto id : same_label) {
            const auto& b = g.entity(id).bbox;
            if (b && approx_equal(*b, *box)) return id;
        }
        for (auto id : same_label) {
            if (!g.entity(id).bbox) {
                g.set_bbox(id, box);
                return id;
            }
        }
        return g.add_entity(name, {}, box);
    }
    if (!same_label.empty()) return same_label.front();
    return g.add_entity(name);
}

bool caption_mentions(const std::string& caption, const std::string& label) {
    PhraseMatcher m;
    m.add(label, 0);
    return !m.scan(strip_bbox_spans(caption)).empty();
}

std::string interaction_block(const SceneGraph& g) {
    std::string out;
    for (const auto& e : g.edges()) {
        if (e.kind != EdgeKind::Interaction) continue;
        out += "- <" + g.entity(e.subject).display_name() + ", " + e.predicate + ", " +
               g.entity(e.object).display_name() + ">\n";
    }
    return out;
}

}  // namespace

SceneGraph Pipeline::build_spatial(const std::string& image_ref, const std::optional<std::string>& question,
                                   StageRecord* record) const {
    StageScope rec(record);
    rec->stage = Stage::Spatial;
    rec->template_id = TemplateId::SpatialInit;
    SceneGraph g(Stage::Spatial, image_ref, question);
    rec->prompt = templates_.render(TemplateId::SpatialInit, base_vars(g));
    rec->raw_output = call(TemplateId::SpatialInit, rec->prompt, image_ref);
    auto parsed = parse_triples(rec->raw_output);
    rec->parsed = parsed.triples;
    rec->warnings = parsed.warnings;
    for (const auto& t : parsed.triples) {
        EntityId s = resolve_spatial(g, t.subject, t.subject_bbox);
        EntityId o = resolve_spatial(g, t.object, t.object_bbox);
        if (s == o) {
            rec->drops.push_back({DropRecord::Item::Triple, DropReason::SelfLoop, std::nullopt, std::nullopt, describe(t)});
            continue;
        }
        g.add_edge(s, t.predicate, o, EdgeKind::Spatial);
    }
    if (g.edges().empty()) {
        throw Error(ErrorCode::EmptyGraph, "spatial stage produced no usable triples for '" + image_ref + "'");
    }
    // Entities only reachable through self-loop triples carry no edges.
    std::vector<EntityId> isolated;
    for (const auto& [id, e] : g.entities()) {
        (void)e;
        if (g.degree(id) == 0) isolated.push_back(id);
    }
    for (auto id : isolated) g.remove_entity(id);
    mark_question_mentions(g, question);
    return g;
}

SceneGraph Pipeline::abstract_graph(const SceneGraph& input, StageRecord* record) const {
    if (input.stage() != Stage::Spatial && input.stage() != Stage::Final) {
        throw Error(ErrorCode::StageMismatch, "abstract stage needs a spatial or final graph");
    }
    StageScope rec(record);
    rec->stage = Stage::Abstract;
    rec->template_id = TemplateId::Abstract;
    SceneGraph g = input;

    auto drops = filters::relevance(g);
    rec->drops.insert(rec->drops.end(), drops.begin(), drops.end());
    drops = filters::focus(g, config_.n_focus);
    rec->drops.insert(rec->drops.end(), drops.begin(), drops.end());

    auto vars = base_vars(g);
    vars["spatial_scene_graph"] = block(render_triples(g));
    rec->prompt = templates_.render(TemplateId::Abstract, vars);
    rec->raw_output = call(TemplateId::Abstract, rec->prompt, g.image_ref());
    auto parsed = parse_triples(rec->raw_output);
    rec->parsed = parsed.triples;
    rec->warnings = parsed.warnings;

    auto notes = filters::disambiguate(g, parsed.triples);
    rec->notes.insert(rec->notes.end(), notes.begin(), notes.end());
    if (g.entities().empty()) throw Error(ErrorCode::EmptyGraph, "abstract stage removed every entity");
    g.set_stage(Stage::Abstract);
    return g;
}

SceneGraph Pipeline::icot_interactions(const SceneGraph& input, const std::string& caption,
                                       StageRecord* record) const {
    if (input.stage() != Stage::Abstract) throw Error(ErrorCode::StageMismatch, "interaction stage needs an abstract graph");
    StageScope rec(record);
    rec->stage = Stage::Interaction;
    rec->template_id = TemplateId::InteractionKnowledge;
    SceneGraph g = input;
    g.set_stage(Stage::Interaction);

    auto vars = base_vars(g);
    vars["abstract_graph"] = block(render_triples(g));
    rec->prompt = templates_.render(TemplateId::InteractionKnowledge, vars);
    rec->raw_output = call(TemplateId::InteractionKnowledge, rec->prompt, g.image_ref());
    auto parsed = parse_triples(rec->raw_output);
    rec->parsed = parsed.triples;
    rec->warnings = parsed.warnings;

    std::set<EntityId> created;
    for (const auto& t : parsed.triples) {
        auto s = g.find_by_display_name(t.subject);
        auto o = g.find_by_display_name(t.object);
        bool s_ok = s || caption_mentions(caption, t.subject);
        bool o_ok = o || caption_mentions(caption, t.object);
        if (!s_ok || !o_ok) {
            rec->drops.push_back({DropRecord::Item::Triple, DropReason::UnresolvedEndpoint, std::nullopt, std::nullopt,
                                  describe(t)});
            continue;
        }
        if (t.subject == t.object || (s && o && *s == *o)) {
            rec->drops.push_back({DropRecord::Item::Triple, DropReason::SelfLoop, std::nullopt, std::nullopt, describe(t)});
            continue;
        }
        const std::size_t needed = (s ? 0 : 1) + (o ? 0 : 1);
        if (g.entities().size() + needed > static_cast<std::size_t>(config_.n_focus)) {
            rec->drops.push_back({DropRecord::Item::Triple, DropReason::Focus, std::nullopt, std::nullopt, describe(t)});
            continue;
        }
        auto create = [&](const std::string& name, const std::optional<BBox>& box) {
            EntityId id = g.add_entity(name, {}, box);
            created.insert(id);
            rec->notes.push_back("added entity '" + name + "' named in the spatial caption");
            return id;
        };
        EntityId sid = s ? *s : create(t.subject, t.subject_bbox);
        EntityId oid = o ? *o : create(t.object, t.object_bbox);
        if (!g.add_edge(sid, t.predicate, oid, EdgeKind::Interaction)) {
            rec->notes.push_back("duplicate " + describe(t));
        }
    }
    if (!created.empty()) {
        std::set<EntityId> hit;
        if (g.question()) hit = g.entities_matching(*g.question());
        for (auto id : created) g.set_question_mentioned(id, hit.count(id) != 0);
    }
    return g;
}

SceneGraph Pipeline::final_abstract(const SceneGraph& input, StageRecord* record) const {
    if (input.stage() != Stage::Interaction) throw Error(ErrorCode::StageMismatch, "final stage needs an interaction graph");
    StageScope rec(record);
    rec->stage = Stage::Final;
    rec->template_id = TemplateId::InteractionGraph;
    SceneGraph g = input;

    auto vars = base_vars(g);
    vars["interaction_knowledge"] = block(interaction_block(g));
    rec->prompt = templates_.render(TemplateId::InteractionGraph, vars);
    rec->raw_output = call(TemplateId::InteractionGraph, rec->prompt, g.image_ref());
    auto parsed = parse_triples(rec->raw_output);
    rec->parsed = parsed.triples;
    rec->warnings = parsed.warnings;
    for (const auto& t : parsed.triples) {
        auto s = g.find_by_display_name(t.subject);
        auto o = g.find_by_display_name(t.object);
        if (!s || !o) {
            rec->drops.push_back({DropRecord::Item::Triple, DropReason::UnresolvedEndpoint, std::nullopt, std::nullopt,
                                  describe(t)});
            continue;
        }
        if (*s == *o) {
            rec->drops.push_back({DropRecord::Item::Triple, DropReason::SelfLoop, std::nullopt, std::nullopt, describe(t)});
            continue;
        }
        g.add_edge(*s, t.predicate, *o, EdgeKind::Interaction);
    }

    auto append = [&](std::vector<DropRecord> d) { rec->drops.insert(rec->drops.end(), d.begin(), d.end()); };
    append(filters::consistency(g, config_.exclusive_predicate_sets));
    append(filters::grounding(g, config_.require_grounding, &rec->notes));
    append(filters::saliency(g, config_.m_salient));
    append(filters::prune_isolated(g));

    bool any_interaction = std::any_of(g.edges().begin(), g.edges().end(),
                                       [](const Edge& e) { return e.kind == EdgeKind::Interaction; });
    if (!any_interaction) throw Error(ErrorCode::EmptyGraph, "no interaction edges survived the final stage");
    g.set_stage(Stage::Final);
    return g;
}

PipelineResult Pipeline::run(const std::string& image_ref, const std::optional<std::string>& question) const {
    PipelineTrace trace;
    trace.image_ref = image_ref;
    trace.question = question;
    StageRecord rec;
    SceneGraph spatial;
    try {
        spatial = build_spatial(image_ref, question, &rec);
    } catch (const Error& e) {
        rec.error = e.what();
        trace.stages.push_back(std::move(rec));
        throw PipelineFailure(e, std::move(trace));
    }
    std::string caption = rec.raw_output;
    trace.stages.push_back(std::move(rec));
    return refine(std::move(spatial), caption, std::move(trace));
}

PipelineResult Pipeline::run_from_spatial(const SceneGraph& spatial) const {
    if (spatial.stage() != Stage::Spatial) throw Error(ErrorCode::StageMismatch, "run_from_spatial needs a spatial graph");
    PipelineTrace trace;
    trace.image_ref = spatial.image_ref();
    trace.question = spatial.question();
    SceneGraph g = spatial;
    mark_question_mentions(g, g.question());
    StageRecord rec;
    rec.stage = Stage::Spatial;
    rec.template_id = TemplateId::SpatialInit;
    rec.notes.push_back("spatial graph supplied by annotation");
    std::string caption = render_triples(g, false);
    rec.raw_output = caption;
    trace.stages.push_back(std::move(rec));
    return refine(std::move(g), caption, std::move(trace));
}

PipelineResult Pipeline::refine(SceneGraph current, const std::string& caption, PipelineTrace trace) const {
    for (int round = 1; round <= config_.max_refinement_rounds; ++round) {
        StageRecord rec;
        rec.round = round;
        try {
            SceneGraph a = abstract_graph(current, &rec);
            trace.stages.push_back(std::move(rec));
            rec = StageRecord{};
            rec.round = round;
            SceneGraph t = icot_interactions(a, caption, &rec);
            trace.stages.push_back(std::move(rec));
            rec = StageRecord{};
            rec.round = round;
            current = final_abstract(t, &rec);
            trace.stages.push_back(std::move(rec));
        } catch (const Error& e) {
            rec.error = e.what();
            trace.stages.push_back(std::move(rec));
            throw PipelineFailure(e, std::move(trace));
        }
    }
    trace.final_graph = current;
    return {std::move(current), std::move(trace)};
}

Pipeline make_pipeline(const Config& config) {
    TemplateSet templates;
    if (auto dir = config.get_path("pipeline.template_dir")) templates = TemplateSet::load_dir(*dir);
    return Pipeline(make_backend(config), PipelineConfig::from_config(config), std::move(templates),
                    generation_params_from_config(config));
}

}  // namespace isgr
