#pragma once

#include "isgr/backend.hpp"
#include "isgr/graph.hpp"
#include "isgr/prompts.hpp"

#include <nlohmann/json.hpp>

#include <compare>
#include <set>
#include <string>
#include <vector>

namespace isgr {

enum class QueryKind { ObjectObject, SubjectRelation, RelationObject, Comprehensive };

inline constexpr std::array<QueryKind, 4> kAllQueryKinds = {QueryKind::ObjectObject, QueryKind::SubjectRelation,
                                                           QueryKind::RelationObject, QueryKind::Comprehensive};

std::string_view to_string(QueryKind kind);
QueryKind query_kind_from_string(std::string_view s);

/// Predicates r with (o1, r, o2) in g. Direction matters.
std::set<std::string> q_oo(const SceneGraph& g, EntityId o1, EntityId o2);

/// Objects o with (s, r, o) in g.
std::set<EntityId> q_sr(const SceneGraph& g, EntityId s, std::string_view r);

/// Subjects s with (s, r, o) in g.
std::set<EntityId> q_ro(const SceneGraph& g, std::string_view r, EntityId o);

enum class Direction { Incoming, Outgoing };

struct Relation {
    EntityId other;
    std::string predicate;
    Direction direction = Direction::Incoming;

    auto operator<=>(const Relation&) const = default;
};

/// Every relation touching `o`: (s, r) for incoming edges (s, r, o) and
/// (x, r) for outgoing edges (o, r, x), each tagged with its direction.
std::set<Relation> q_comp(const SceneGraph& g, EntityId o);

struct BboxPlacement {
    EntityId entity;
    std::string name;
    bool in_question = false;
    bool in_answer = false;
};

struct GeneratedInstruction {
    QueryKind kind = QueryKind::ObjectObject;
    std::string question;
    std::string answer;
    std::vector<Edge> evidence;
    std::vector<BboxPlacement> placements;
};

struct InstructionSet {
    std::vector<GeneratedInstruction> instructions;
    std::vector<QueryKind> skipped;
    std::vector<std::string> notes;
};

/// One instruction per query kind from the fixed QA templates, up to `count`.
/// The evidence edge is the most salient eligible edge (interaction edges
/// when the graph has any), ties broken by (subject, predicate, object) names.
InstructionSet generate_instructions(const SceneGraph& g, int count = 4);

/// Same contract, but the wording comes from the backend's qa_generation
/// answer. Pairs whose kind cannot be recognised are skipped with a note.
InstructionSet generate_instructions_with_backend(const SceneGraph& g, Backend& backend,
                                                  const TemplateSet& templates, const GenerationParams& params,
                                                  int count = 4);

/// True when no entity carries coordinates in both the question and the answer.
bool bbox_rule_holds(const GeneratedInstruction& instruction);

nlohmann::json to_json(const GeneratedInstruction& instruction);

}  // namespace isgr
