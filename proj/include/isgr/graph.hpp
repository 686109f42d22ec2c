#pragma once

#include "isgr/text.hpp"

#include <nlohmann/json.hpp>

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace isgr {

enum class Stage { Spatial, Abstract, Interaction, Final };
enum class EdgeKind { Spatial, Interaction };

std::string_view to_string(Stage stage);
std::string_view to_string(EdgeKind kind);
Stage stage_from_string(std::string_view s);
EdgeKind edge_kind_from_string(std::string_view s);

struct EntityId {
    std::uint64_t value = 0;
    auto operator<=>(const EntityId&) const = default;
};

struct Entity {
    EntityId id;
    std::string label;
    std::vector<std::string> qualifiers;
    std::optional<BBox> bbox;
    bool question_mentioned = false;

    /// label followed by the qualifiers, space separated.
    std::string display_name() const;
};

struct Edge {
    EntityId subject;
    std::string predicate;
    EntityId object;
    EdgeKind kind = EdgeKind::Spatial;
    Stage provenance = Stage::Spatial;
    bool grounded = false;

    /// Identity is (subject, predicate, object, kind); provenance and
    /// grounding are attributes.
    auto key() const { return std::tie(subject, predicate, object, kind); }
    bool same_as(const Edge& other) const { return key() == other.key(); }
};

struct EdgeOrder {
    bool operator()(const Edge& a, const Edge& b) const { return a.key() < b.key(); }
};

/// An entity reference found inside free text.
struct Mention {
    std::string text;
    std::vector<EntityId> candidates;
};

/// Staged scene graph. A single writer mutates it while a stage is being built;
/// finished stages are copied forward, so entity ids stay stable for a run.
class SceneGraph {
public:
    SceneGraph() = default;
    explicit SceneGraph(Stage stage, std::string image_ref = {},
                        std::optional<std::string> question = std::nullopt);

    Stage stage() const { return stage_; }
    void set_stage(Stage stage);

    const std::string& image_ref() const { return image_ref_; }
    const std::optional<std::string>& question() const { return question_; }
    void set_question(std::optional<std::string> q) { question_ = std::move(q); }

    EntityId add_entity(std::string_view label, std::vector<std::string> qualifiers = {},
                        std::optional<BBox> bbox = std::nullopt);

    /// Returns true if the edge was inserted, false if it already existed.
    bool add_edge(EntityId subject, std::string_view predicate, EntityId object, EdgeKind kind);

    bool has_entity(EntityId id) const { return entities_.count(id) != 0; }
    const Entity& entity(EntityId id) const;
    const std::map<EntityId, Entity>& entities() const { return entities_; }
    const std::set<Edge, EdgeOrder>& edges() const { return edges_; }

    /// Removes the entity and every incident edge; the removed edges are returned.
    std::vector<Edge> remove_entity(EntityId id);
    bool remove_edge(const Edge& edge);

    void set_qualifiers(EntityId id, std::vector<std::string> qualifiers);
    void set_bbox(EntityId id, std::optional<BBox> bbox);
    void set_question_mentioned(EntityId id, bool value);

    std::size_t degree(EntityId id) const;
    std::set<EntityId> connected_component(const std::set<EntityId>& seeds) const;

    std::vector<Mention> find_mentions(std::string_view text) const;
    std::set<EntityId> entities_matching(std::string_view text) const;

    std::optional<EntityId> find_by_display_name(std::string_view name) const;
    std::vector<EntityId> find_by_label(std::string_view label) const;

    /// Throws if any structural invariant is broken.
    void validate() const;

    std::uint64_t next_id() const { return next_id_; }

    friend bool operator==(const SceneGraph& a, const SceneGraph& b);

private:
    void check_bbox(const std::optional<BBox>& bbox) const;
    void refresh_grounding(EntityId id);
    friend SceneGraph graph_from_json(const nlohmann::json& j);

    Stage stage_ = Stage::Spatial;
    std::string image_ref_;
    std::optional<std::string> question_;
    std::map<EntityId, Entity> entities_;
    std::set<Edge, EdgeOrder> edges_;
    std::uint64_t next_id_ = 1;
};

int salience(const SceneGraph& g, EntityId id);

nlohmann::json to_json(const SceneGraph& g);
nlohmann::json to_json(const Edge& e);
SceneGraph graph_from_json(const nlohmann::json& j);

std::string serialize(const SceneGraph& g);
SceneGraph deserialize(std::string_view text);

/// "- <subject[bbox], predicate, object[bbox]>" lines, one per edge in edge order.
std::string render_triples(const SceneGraph& g, bool with_bboxes = true);

}  // namespace isgr
