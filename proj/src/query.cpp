#include "isgr/query.hpp"

#include "isgr/error.hpp"
#include "isgr/parser.hpp"

#include <algorithm>
#include <map>
#include <tuple>

namespace isgr {

std::string_view to_string(QueryKind kind) {
    switch (kind) {
        case QueryKind::ObjectObject: return "object_object";
        case QueryKind::SubjectRelation: return "subject_relation";
        case QueryKind::RelationObject: return "relation_object";
        case QueryKind::Comprehensive: return "comprehensive";
    }
    return "object_object";
}

QueryKind query_kind_from_string(std::string_view s) {
    for (auto k : kAllQueryKinds) {
        if (to_string(k) == s) return k;
    }
    throw Error(ErrorCode::InvalidRequest, "unknown query kind '" + std::string(s) + "'");
}

namespace {

void require(const SceneGraph& g, EntityId id) {
    if (!g.has_entity(id)) throw Error(ErrorCode::UnknownEntity, "entity " + std::to_string(id.value));
}

}  // namespace

std::set<std::string> q_oo(const SceneGraph& g, EntityId o1, EntityId o2) {
    require(g, o1);
    require(g, o2);
    std::set<std::string> out;
    for (const auto& e : g.edges()) {
        if (e.subject == o1 && e.object == o2) out.insert(e.predicate);
    }
    return out;
}

std::set<EntityId> q_sr(const SceneGraph& g, EntityId s, std::string_view r) {
    require(g, s);
    const std::string pred = normalize_phrase(r);
    std::set<EntityId> out;
    for (const auto& e : g.edges()) {
        if (e.subject == s && e.predicate == pred) out.insert(e.object);
    }
    return out;
}

std::set<EntityId> q_ro(const SceneGraph& g, std::string_view r, EntityId o) {
    require(g, o);
    const std::string pred = normalize_phrase(r);
    std::set<EntityId> out;
    for (const auto& e : g.edges()) {
        if (e.object == o && e.predicate == pred) out.insert(e.subject);
    }
    return out;
}

std::set<Relation> q_comp(const SceneGraph& g, EntityId o) {
    require(g, o);
    std::set<Relation> out;
    for (const auto& e : g.edges()) {
        if (e.object == o) out.insert({e.subject, e.predicate, Direction::Incoming});
        if (e.subject == o) out.insert({e.object, e.predicate, Direction::Outgoing});
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Renderer {
    const SceneGraph& g;
    std::vector<BboxPlacement> placements;

    std::string name(EntityId id) const { return g.entity(id).display_name(); }

    BboxPlacement& placement(EntityId id) {
        for (auto& p : placements) {
            if (p.entity == id) return p;
        }
        placements.push_back({id, name(id), false, false});
        return placements.back();
    }

    std::string in_question(EntityId id) {
        const auto& box = g.entity(id).bbox;
        if (!box) return name(id);
        placement(id).in_question = true;
        return name(id) + format_bbox(*box);
    }

    std::string in_answer(EntityId id) {
        const auto& box = g.entity(id).bbox;
        auto& p = placement(id);
        if (!box || p.in_question) return name(id);
        p.in_answer = true;
        return name(id) + format_bbox(*box);
    }
};

std::vector<Edge> eligible_edges(const SceneGraph& g) {
    std::vector<Edge> interaction;
    for (const auto& e : g.edges()) {
        if (e.kind == EdgeKind::Interaction) interaction.push_back(e);
    }
    if (!interaction.empty()) return interaction;
    return {g.edges().begin(), g.edges().end()};
}

Edge best_edge(const SceneGraph& g, const std::vector<Edge>& edges) {
    auto rank = [&](const Edge& e) {
        return std::make_tuple(-(salience(g, e.subject) + salience(g, e.object)), g.entity(e.subject).display_name(),
                               e.predicate, g.entity(e.object).display_name());
    };
    return *std::min_element(edges.begin(), edges.end(),
                             [&](const Edge& a, const Edge& b) { return rank(a) < rank(b); });
}

std::vector<EntityId> sorted_by_name(const SceneGraph& g, std::vector<EntityId> ids) {
    std::sort(ids.begin(), ids.end(), [&](EntityId a, EntityId b) {
        return std::make_tuple(g.entity(a).display_name(), a) < std::make_tuple(g.entity(b).display_name(), b);
    });
    return ids;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

GeneratedInstruction object_object(const SceneGraph& g, const std::vector<Edge>& edges, const Edge& best) {
    Renderer r{g, {}};
    GeneratedInstruction ins;
    ins.kind = QueryKind::ObjectObject;
    std::string q1 = r.in_question(best.subject);
    std::string q2 = r.in_question(best.object);
    ins.question = "What is the relationship between " + q1 + " and " + q2 + "?";
    std::vector<std::string> preds;
    for (const auto& e : edges) {
        if (e.subject == best.subject && e.object == best.object) {
            preds.push_back(e.predicate);
            ins.evidence.push_back(e);
        }
    }
    ins.answer = r.in_answer(best.subject) + " " + join(preds, " and ") + " " + r.in_answer(best.object) + ".";
    ins.placements = std::move(r.placements);
    return ins;
}

GeneratedInstruction subject_relation(const SceneGraph& g, const std::vector<Edge>& edges, const Edge& best) {
    Renderer r{g, {}};
    GeneratedInstruction ins;
    ins.kind = QueryKind::SubjectRelation;
    ins.question = "What does " + r.in_question(best.subject) + " " + best.predicate + "?";
    std::vector<EntityId> objects;
    for (const auto& e : edges) {
        if (e.subject == best.subject && e.predicate == best.predicate) {
            objects.push_back(e.object);
            ins.evidence.push_back(e);
        }
    }
    std::vector<std::string> names;
    for (auto id : sorted_by_name(g, objects)) names.push_back(r.in_answer(id));
    ins.answer = r.in_answer(best.subject) + " " + best.predicate + " " + join(names, " and ") + ".";
    ins.placements = std::move(r.placements);
    return ins;
}

GeneratedInstruction relation_object(const SceneGraph& g, const std::vector<Edge>& edges, const Edge& best) {
    Renderer r{g, {}};
    GeneratedInstruction ins;
    ins.kind = QueryKind::RelationObject;
    ins.question = "What is " + best.predicate + " by " + r.in_question(best.object) + "?";
    std::vector<EntityId> subjects;
    for (const auto& e : edges) {
        if (e.object == best.object && e.predicate == best.predicate) {
            subjects.push_back(e.subject);
            ins.evidence.push_back(e);
        }
    }
    std::vector<std::string> names;
    for (auto id : sorted_by_name(g, subjects)) names.push_back(r.in_answer(id));
    ins.answer = join(names, " and ") + " " + best.predicate + " " + r.in_answer(best.object) + ".";
    ins.placements = std::move(r.placements);
    return ins;
}

GeneratedInstruction comprehensive(const SceneGraph& g, const std::vector<Edge>& edges, const Edge& best) {
    Renderer r{g, {}};
    GeneratedInstruction ins;
    ins.kind = QueryKind::Comprehensive;
    const EntityId focus = best.subject;
    ins.question = "What objects have a relationship with " + r.in_question(focus) + "?";
    std::vector<Edge> outgoing;
    for (const auto& e : edges) {
        if (e.subject == focus) outgoing.push_back(e);
    }
    std::sort(outgoing.begin(), outgoing.end(), [&](const Edge& a, const Edge& b) {
        return std::make_tuple(a.predicate, g.entity(a.object).display_name()) <
               std::make_tuple(b.predicate, g.entity(b.object).display_name());
    });
    std::vector<std::string> parts;
    for (const auto& e : outgoing) {
        parts.push_back(e.predicate + " " + r.in_answer(e.object));
        ins.evidence.push_back(e);
    }
    ins.answer = r.in_answer(focus) + " " + join(parts, ", ") + ".";
    ins.placements = std::move(r.placements);
    return ins;
}

}  // namespace

InstructionSet generate_instructions(const SceneGraph& g, int count) {
    if (g.edges().empty()) throw Error(ErrorCode::EmptyGraph, "cannot generate instructions from a graph without edges");
    InstructionSet out;
    const auto edges = eligible_edges(g);
    const Edge best = best_edge(g, edges);
    for (auto kind : kAllQueryKinds) {
        if (static_cast<int>(out.instructions.size()) >= count) {
            out.skipped.push_back(kind);
            continue;
        }
        switch (kind) {
            case QueryKind::ObjectObject: out.instructions.push_back(object_object(g, edges, best)); break;
            case QueryKind::SubjectRelation: out.instructions.push_back(subject_relation(g, edges, best)); break;
            case QueryKind::RelationObject: out.instructions.push_back(relation_object(g, edges, best)); break;
            case QueryKind::Comprehensive: out.instructions.push_back(comprehensive(g, edges, best)); break;
        }
    }
    if (!out.skipped.empty()) {
        out.notes.push_back(std::to_string(out.skipped.size()) + " template(s) skipped");
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::optional<QueryKind> classify(const std::string& question) {
    const std::string q = normalize_phrase(question);
    if (q.starts_with("what is the relationship between")) return QueryKind::ObjectObject;
    if (q.starts_with("what objects have a relationship with")) return QueryKind::Comprehensive;
    if (q.starts_with("what does")) return QueryKind::SubjectRelation;
    if (q.starts_with("what is") && q.find(" by ") != std::string::npos) return QueryKind::RelationObject;
    return std::nullopt;
}

/// Removes the "[...]" span that directly follows `phrase` in `text` (case-insensitive).
bool strip_box_after(std::string& text, const std::string& phrase) {
    std::string lower = text;
    for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const std::string needle = normalize_phrase(phrase);
    bool changed = false;
    for (std::size_t pos = lower.find(needle); pos != std::string::npos; pos = lower.find(needle, pos + 1)) {
        std::size_t open = pos + needle.size();
        while (open < lower.size() && lower[open] == ' ') ++open;
        if (open >= lower.size() || lower[open] != '[') continue;
        std::size_t close = lower.find(']', open);
        if (close == std::string::npos) break;
        text.erase(pos + needle.size(), close + 1 - (pos + needle.size()));
        lower.erase(pos + needle.size(), close + 1 - (pos + needle.size()));
        changed = true;
    }
    return changed;
}

}  // namespace

InstructionSet generate_instructions_with_backend(const SceneGraph& g, Backend& backend,
                                                  const TemplateSet& templates, const GenerationParams& params,
                                                  int count) {
    if (g.edges().empty()) throw Error(ErrorCode::EmptyGraph, "cannot generate instructions from a graph without edges");
    const std::string triples = "\n" + render_triples(g);
    std::string prompt = templates.render(
        TemplateId::QaGeneration, {{"relationship_triples", triples}, {"interaction_graph", triples}, {"image", "<image>"}});
    std::string raw = backend.generate({TemplateId::QaGeneration, prompt, g.image_ref(), params});

    QAParseOptions options;
    for (const auto& [id, e] : g.entities()) {
        (void)id;
        options.vocabulary.push_back(e.display_name());
    }
    auto parsed = parse_qa_pairs(raw, options);

    InstructionSet out;
    for (const auto& w : parsed.warnings) out.notes.push_back(std::string(to_string(w.kind)) + ": " + w.detail);
    std::set<QueryKind> seen;
    for (const auto& pair : parsed.pairs) {
        auto kind = classify(pair.question);
        if (!kind) {
            out.notes.push_back("unrecognised question '" + pair.question + "'");
            continue;
        }
        if (seen.count(*kind) || static_cast<int>(out.instructions.size()) >= count) continue;

        GeneratedInstruction ins;
        ins.kind = *kind;
        ins.question = pair.question;
        ins.answer = pair.answer;
        auto q_boxes = extract_bbox_mentions(pair.question, options);
        for (const auto& m : q_boxes) {
            if (strip_box_after(ins.answer, m.phrase)) {
                out.notes.push_back("removed repeated coordinates for '" + m.phrase + "'");
            }
        }
        auto a_boxes = extract_bbox_mentions(ins.answer, options);
        auto named = g.entities_matching(strip_bbox_spans(pair.question + " " + pair.answer));
        for (auto id : named) {
            const std::string name = g.entity(id).display_name();
            BboxPlacement p{id, name, false, false};
            for (const auto& m : q_boxes) p.in_question |= normalize_phrase(m.phrase) == name;
            for (const auto& m : a_boxes) p.in_answer |= normalize_phrase(m.phrase) == name;
            ins.placements.push_back(p);
        }
        for (const auto& e : g.edges()) {
            if (named.count(e.subject) && named.count(e.object)) ins.evidence.push_back(e);
        }
        if (ins.evidence.empty()) {
            out.notes.push_back("no graph evidence for '" + pair.question + "'");
            continue;
        }
        seen.insert(*kind);
        out.instructions.push_back(std::move(ins));
    }
    for (auto kind : kAllQueryKinds) {
        if (!seen.count(kind)) out.skipped.push_back(kind);
    }
    return out;
}

bool bbox_rule_holds(const GeneratedInstruction& instruction) {
    return std::none_of(instruction.placements.begin(), instruction.placements.end(),
                        [](const BboxPlacement& p) { return p.in_question && p.in_answer; });
}

nlohmann::json to_json(const GeneratedInstruction& ins) {
    nlohmann::json evidence = nlohmann::json::array();
    for (const auto& e : ins.evidence) evidence.push_back(to_json(e));
    nlohmann::json placements = nlohmann::json::array();
    for (const auto& p : ins.placements) {
        placements.push_back({{"entity", p.entity.value}, {"name", p.name}, {"in_question", p.in_question},
                              {"in_answer", p.in_answer}});
    }
    return {{"kind", to_string(ins.kind)},
            {"question", ins.question},
            {"answer", ins.answer},
            {"evidence", evidence},
            {"bbox_placement", placements}};
}

}  // namespace isgr
