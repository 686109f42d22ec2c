#include "isgr/graph.hpp"

#include "isgr/error.hpp"

#include <algorithm>
#include <deque>
#include <tuple>

namespace isgr {

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::Spatial: return "spatial";
        case Stage::Abstract: return "abstract";
        case Stage::Interaction: return "interaction";
        case Stage::Final: return "final";
    }
    return "spatial";
}

std::string_view to_string(EdgeKind kind) {
    return kind == EdgeKind::Spatial ? "spatial" : "interaction";
}

Stage stage_from_string(std::string_view s) {
    if (s == "spatial") return Stage::Spatial;
    if (s == "abstract") return Stage::Abstract;
    if (s == "interaction") return Stage::Interaction;
    if (s == "final") return Stage::Final;
    throw Error(ErrorCode::GraphParse, "unknown stage '" + std::string(s) + "'");
}

EdgeKind edge_kind_from_string(std::string_view s) {
    if (s == "spatial") return EdgeKind::Spatial;
    if (s == "interaction") return EdgeKind::Interaction;
    throw Error(ErrorCode::GraphParse, "unknown edge kind '" + std::string(s) + "'");
}

std::string Entity::display_name() const {
    std::string name = label;
    for (const auto& q : qualifiers) {
        if (q.empty()) continue;
        name += " ";
        name += q;
    }
    return name;
}

SceneGraph::SceneGraph(Stage stage, std::string image_ref, std::optional<std::string> question)
    : stage_(stage), image_ref_(std::move(image_ref)), question_(std::move(question)) {}

void SceneGraph::check_bbox(const std::optional<BBox>& bbox) const {
    if (bbox && !bbox->valid()) {
        throw Error(ErrorCode::InvalidBbox, format_bbox(*bbox));
    }
}

EntityId SceneGraph::add_entity(std::string_view label, std::vector<std::string> qualifiers,
                                std::optional<BBox> bbox) {
    Entity e;
    e.label = normalize_phrase(label);
    if (e.label.empty()) throw Error(ErrorCode::InvalidLabel, "empty entity label");
    check_bbox(bbox);
    for (auto& q : qualifiers) q = normalize_phrase(q);
    std::erase_if(qualifiers, [](const std::string& q) { return q.empty(); });
    e.qualifiers = std::move(qualifiers);
    e.bbox = bbox;
    if (stage_ != Stage::Spatial && find_by_display_name(e.display_name())) {
        throw Error(ErrorCode::DuplicateDisplayName, e.display_name());
    }
    e.id = EntityId{next_id_++};
    EntityId id = e.id;
    entities_.emplace(id, std::move(e));
    return id;
}

bool SceneGraph::add_edge(EntityId subject, std::string_view predicate, EntityId object,
                          EdgeKind kind) {
    if (!has_entity(subject)) throw Error(ErrorCode::UnknownEntity, std::to_string(subject.value));
    if (!has_entity(object)) throw Error(ErrorCode::UnknownEntity, std::to_string(object.value));
    if (subject == object) throw Error(ErrorCode::SelfLoop, entity(subject).display_name());
    if (stage_ == Stage::Spatial && kind != EdgeKind::Spatial) {
        throw Error(ErrorCode::StageMismatch, "interaction edge in a spatial-stage graph");
    }
    Edge e;
    e.subject = subject;
    e.predicate = normalize_phrase(predicate);
    if (e.predicate.empty()) throw Error(ErrorCode::InvalidLabel, "empty predicate");
    e.object = object;
    e.kind = kind;
    e.provenance = stage_;
    e.grounded = entity(subject).bbox.has_value() && entity(object).bbox.has_value();
    return edges_.insert(std::move(e)).second;
}

const Entity& SceneGraph::entity(EntityId id) const {
    auto it = entities_.find(id);
    if (it == entities_.end()) throw Error(ErrorCode::UnknownEntity, std::to_string(id.value));
    return it->second;
}

std::vector<Edge> SceneGraph::remove_entity(EntityId id) {
    if (!has_entity(id)) throw Error(ErrorCode::UnknownEntity, std::to_string(id.value));
    std::vector<Edge> removed;
    for (auto it = edges_.begin(); it != edges_.end();) {
        if (it->subject == id || it->object == id) {
            removed.push_back(*it);
            it = edges_.erase(it);
        } else {
            ++it;
        }
    }
    entities_.erase(id);
    return removed;
}

bool SceneGraph::remove_edge(const Edge& edge) { return edges_.erase(edge) != 0; }

void SceneGraph::set_qualifiers(EntityId id, std::vector<std::string> qualifiers) {
    auto it = entities_.find(id);
    if (it == entities_.end()) throw Error(ErrorCode::UnknownEntity, std::to_string(id.value));
    for (auto& q : qualifiers) q = normalize_phrase(q);
    std::erase_if(qualifiers, [](const std::string& q) { return q.empty(); });
    if (stage_ != Stage::Spatial) {
        Entity probe = it->second;
        probe.qualifiers = qualifiers;
        auto clash = find_by_display_name(probe.display_name());
        if (clash && *clash != id) throw Error(ErrorCode::DuplicateDisplayName, probe.display_name());
    }
    it->second.qualifiers = std::move(qualifiers);
}

void SceneGraph::refresh_grounding(EntityId id) {
    std::vector<Edge> touched;
    for (auto it = edges_.begin(); it != edges_.end();) {
        if (it->subject == id || it->object == id) {
            touched.push_back(*it);
            it = edges_.erase(it);
        } else {
            ++it;
        }
    }
    for (auto& e : touched) {
        e.grounded = entity(e.subject).bbox.has_value() && entity(e.object).bbox.has_value();
        edges_.insert(std::move(e));
    }
}

void SceneGraph::set_bbox(EntityId id, std::optional<BBox> bbox) {
    auto it = entities_.find(id);
    if (it == entities_.end()) throw Error(ErrorCode::UnknownEntity, std::to_string(id.value));
    check_bbox(bbox);
    it->second.bbox = bbox;
    refresh_grounding(id);
}

void SceneGraph::set_question_mentioned(EntityId id, bool value) {
    auto it = entities_.find(id);
    if (it == entities_.end()) throw Error(ErrorCode::UnknownEntity, std::to_string(id.value));
    it->second.question_mentioned = value;
}

void SceneGraph::set_stage(Stage stage) {
    Stage previous = stage_;
    stage_ = stage;
    try {
        validate();
    } catch (...) {
        stage_ = previous;
        throw;
    }
}

std::size_t SceneGraph::degree(EntityId id) const {
    if (!has_entity(id)) throw Error(ErrorCode::UnknownEntity, std::to_string(id.value));
    return static_cast<std::size_t>(std::count_if(edges_.begin(), edges_.end(), [&](const Edge& e) {
        return e.subject == id || e.object == id;
    }));
}

std::set<EntityId> SceneGraph::connected_component(const std::set<EntityId>& seeds) const {
    std::map<EntityId, std::vector<EntityId>> adjacency;
    for (const auto& e : edges_) {
        adjacency[e.subject].push_back(e.object);
        adjacency[e.object].push_back(e.subject);
    }
    std::set<EntityId> seen;
    std::deque<EntityId> frontier;
    for (auto s : seeds) {
        if (!has_entity(s)) throw Error(ErrorCode::UnknownEntity, std::to_string(s.value));
        if (seen.insert(s).second) frontier.push_back(s);
    }
    while (!frontier.empty()) {
        EntityId cur = frontier.front();
        frontier.pop_front();
        for (auto next : adjacency[cur]) {
            if (seen.insert(next).second) frontier.push_back(next);
        }
    }
    return seen;
}

std::vector<Mention> SceneGraph::find_mentions(std::string_view text) const {
    PhraseMatcher matcher;
    std::vector<EntityId> index;
    for (const auto& [id, e] : entities_) {
        index.push_back(id);
        matcher.add(e.display_name(), index.size() - 1);
        matcher.add(e.label, index.size() - 1);
    }
    std::vector<Mention> out;
    for (auto& m : matcher.scan(text)) {
        Mention mention;
        mention.text = m.phrase;
        for (auto p : m.payloads) mention.candidates.push_back(index[p]);
        std::sort(mention.candidates.begin(), mention.candidates.end());
        out.push_back(std::move(mention));
    }
    return out;
}

std::set<EntityId> SceneGraph::entities_matching(std::string_view text) const {
    std::set<EntityId> out;
    for (const auto& m : find_mentions(text)) out.insert(m.candidates.begin(), m.candidates.end());
    return out;
}

std::optional<EntityId> SceneGraph::find_by_display_name(std::string_view name) const {
    const std::string norm = normalize_phrase(name);
    for (const auto& [id, e] : entities_) {
        if (e.display_name() == norm) return id;
    }
    return std::nullopt;
}

std::vector<EntityId> SceneGraph::find_by_label(std::string_view label) const {
    const std::string norm = normalize_phrase(label);
    std::vector<EntityId> out;
    for (const auto& [id, e] : entities_) {
        if (e.label == norm) out.push_back(id);
    }
    return out;
}

void SceneGraph::validate() const {
    for (const auto& e : edges_) {
        if (!has_entity(e.subject) || !has_entity(e.object)) {
            throw Error(ErrorCode::UnknownEntity, "dangling edge '" + e.predicate + "'");
        }
        if (e.subject == e.object) throw Error(ErrorCode::SelfLoop, e.predicate);
        if (stage_ == Stage::Spatial && e.kind != EdgeKind::Spatial) {
            throw Error(ErrorCode::StageMismatch, "interaction edge in a spatial-stage graph");
        }
    }
    if (stage_ != Stage::Spatial) {
        std::set<std::string> names;
        for (const auto& [id, e] : entities_) {
            if (!names.insert(e.display_name()).second) {
                throw Error(ErrorCode::DuplicateDisplayName, e.display_name());
            }
        }
    }
    if (stage_ == Stage::Final) {
        for (const auto& [id, e] : entities_) {
            if (degree(id) == 0) {
                throw Error(ErrorCode::StageMismatch, "isolated entity '" + e.display_name() + "' in final graph");
            }
        }
    }
}

bool operator==(const SceneGraph& a, const SceneGraph& b) {
    return serialize(a) == serialize(b);
}

int salience(const SceneGraph& g, EntityId id) {
    return static_cast<int>(g.degree(id)) + (g.entity(id).question_mentioned ? 2 : 0);
}

nlohmann::json to_json(const Edge& e) {
    return {{"subject", e.subject.value},
            {"predicate", e.predicate},
            {"object", e.object.value},
            {"kind", to_string(e.kind)},
            {"provenance", to_string(e.provenance)},
            {"grounded", e.grounded}};
}

nlohmann::json to_json(const SceneGraph& g) {
    nlohmann::json entities = nlohmann::json::array();
    for (const auto& [id, e] : g.entities()) {
        nlohmann::json bbox = nullptr;
        if (e.bbox) bbox = {e.bbox->x1, e.bbox->y1, e.bbox->x2, e.bbox->y2};
        entities.push_back({{"id", id.value},
                            {"label", e.label},
                            {"qualifiers", e.qualifiers},
                            {"bbox", bbox},
                            {"question_mentioned", e.question_mentioned}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges()) edges.push_back(to_json(e));
    nlohmann::json question = nullptr;
    if (g.question()) question = *g.question();
    return {{"stage", to_string(g.stage())},
            {"image_ref", g.image_ref()},
            {"question", question},
            {"entities", entities},
            {"edges", edges}};
}

SceneGraph graph_from_json(const nlohmann::json& j) {
    try {
        std::optional<std::string> question;
        if (j.contains("question") && !j.at("question").is_null()) question = j.at("question").get<std::string>();
        SceneGraph g(stage_from_string(j.at("stage").get<std::string>()),
                     j.value("image_ref", std::string{}), question);
        std::uint64_t max_id = 0;
        for (const auto& je : j.at("entities")) {
            Entity e;
            e.id = EntityId{je.at("id").get<std::uint64_t>()};
            e.label = normalize_phrase(je.at("label").get<std::string>());
            if (e.label.empty()) throw Error(ErrorCode::InvalidLabel, "empty entity label");
            if (je.contains("qualifiers")) {
                for (const auto& q : je.at("qualifiers")) e.qualifiers.push_back(normalize_phrase(q.get<std::string>()));
            }
            if (je.contains("bbox") && !je.at("bbox").is_null()) {
                const auto& b = je.at("bbox");
                if (!b.is_array() || b.size() != 4) throw Error(ErrorCode::GraphParse, "bbox must have 4 numbers");
                e.bbox = BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
                g.check_bbox(e.bbox);
            }
            e.question_mentioned = je.value("question_mentioned", false);
            if (g.entities_.count(e.id)) throw Error(ErrorCode::GraphParse, "duplicate entity id");
            max_id = std::max(max_id, e.id.value);
            g.entities_.emplace(e.id, std::move(e));
        }
        g.next_id_ = max_id + 1;
        for (const auto& jd : j.at("edges")) {
            Edge e;
            e.subject = EntityId{jd.at("subject").get<std::uint64_t>()};
            e.object = EntityId{jd.at("object").get<std::uint64_t>()};
            e.predicate = normalize_phrase(jd.at("predicate").get<std::string>());
            e.kind = edge_kind_from_string(jd.value("kind", std::string("spatial")));
            e.provenance = stage_from_string(jd.value("provenance", std::string(to_string(g.stage()))));
            if (!g.has_entity(e.subject) || !g.has_entity(e.object)) {
                throw Error(ErrorCode::UnknownEntity, "edge endpoint '" + e.predicate + "'");
            }
            if (e.predicate.empty()) throw Error(ErrorCode::InvalidLabel, "empty predicate");
            e.grounded = g.entity(e.subject).bbox.has_value() && g.entity(e.object).bbox.has_value();
            g.edges_.insert(std::move(e));
        }
        g.validate();
        return g;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::GraphParse, ex.what());
    }
}

std::string serialize(const SceneGraph& g) { return to_json(g).dump(); }

SceneGraph deserialize(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::GraphParse, ex.what());
    }
    return graph_from_json(j);
}

std::string render_triples(const SceneGraph& g, bool with_bboxes) {
    auto name = [&](EntityId id) {
        const Entity& e = g.entity(id);
        std::string n = e.display_name();
        if (with_bboxes && e.bbox) n += format_bbox(*e.bbox);
        return n;
    };
    std::string out;
    for (const auto& e : g.edges()) {
        out += "- <" + name(e.subject) + ", " + e.predicate + ", " + name(e.object) + ">\n";
    }
    return out;
}

}  // namespace isgr
