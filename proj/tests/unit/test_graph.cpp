#include "isgr/error.hpp"
#include "isgr/graph.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

namespace isgr {
namespace {

using testing::frisbee_final;

void expect_error(ErrorCode code, const std::function<void()>& fn) {
    try {
        fn();
        ADD_FAILURE() << "expected " << to_string(code);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), code) << e.what();
    }
}

TEST(Graph, AddEntityNormalizesLabel) {
    SceneGraph g(Stage::Spatial);
    auto id = g.add_entity("Frisbee");
    ASSERT_EQ(g.entities().size(), 1u);
    EXPECT_EQ(g.entity(id).label, "frisbee");
}

TEST(Graph, DisplayNameJoinsQualifiers) {
    SceneGraph g(Stage::Spatial);
    auto id = g.add_entity("player", {"in black"}, BBox{0.1, 0.2, 0.3, 0.9});
    EXPECT_EQ(g.entity(id).display_name(), "player in black");
}

TEST(Graph, DuplicateDisplayNameRejectedFromAbstractOn) {
    SceneGraph spatial(Stage::Spatial);
    spatial.add_entity("player", {"in black"});
    EXPECT_NO_THROW(spatial.add_entity("player", {"in black"}));

    SceneGraph g(Stage::Abstract);
    g.add_entity("player", {"in black"}, BBox{0.1, 0.2, 0.3, 0.9});
    expect_error(ErrorCode::DuplicateDisplayName, [&] { g.add_entity("player", {"in black"}); });
}

TEST(Graph, InvalidInputsRejected) {
    SceneGraph g(Stage::Spatial);
    expect_error(ErrorCode::InvalidBbox, [&] { g.add_entity("cup", {}, BBox{0.5, 0.2, 0.4, 0.9}); });
    expect_error(ErrorCode::InvalidLabel, [&] { g.add_entity("   "); });
}

TEST(Graph, AddEdgeDeduplicatesAndRejectsSelfLoops) {
    SceneGraph g(Stage::Spatial);
    auto frisbee = g.add_entity("frisbee");
    auto grass = g.add_entity("grass");
    EXPECT_TRUE(g.add_edge(frisbee, "on", grass, EdgeKind::Spatial));
    EXPECT_EQ(g.edges().size(), 1u);
    EXPECT_FALSE(g.add_edge(frisbee, "On", grass, EdgeKind::Spatial));
    EXPECT_EQ(g.edges().size(), 1u);
    expect_error(ErrorCode::SelfLoop, [&] { g.add_edge(frisbee, "near", frisbee, EdgeKind::Spatial); });
    expect_error(ErrorCode::UnknownEntity, [&] { g.add_edge(frisbee, "near", EntityId{99}, EdgeKind::Spatial); });
    expect_error(ErrorCode::StageMismatch, [&] { g.add_edge(frisbee, "hits", grass, EdgeKind::Interaction); });
}

TEST(Graph, EdgesAreDirectional) {
    SceneGraph g(Stage::Final);
    auto a = g.add_entity("a");
    auto b = g.add_entity("b");
    EXPECT_TRUE(g.add_edge(a, "r", b, EdgeKind::Interaction));
    EXPECT_TRUE(g.add_edge(b, "r", a, EdgeKind::Interaction));
    EXPECT_TRUE(g.add_edge(a, "r", b, EdgeKind::Spatial));
    EXPECT_EQ(g.edges().size(), 3u);
}

TEST(Graph, GroundedWhenBothEndpointsHaveBoxes) {
    SceneGraph g(Stage::Final);
    auto a = g.add_entity("a", {}, BBox{0.1, 0.1, 0.2, 0.2});
    auto b = g.add_entity("b");
    g.add_edge(a, "r", b, EdgeKind::Interaction);
    EXPECT_FALSE(g.edges().begin()->grounded);
    g.set_bbox(b, BBox{0.3, 0.3, 0.4, 0.4});
    EXPECT_TRUE(g.edges().begin()->grounded);
}

// Fixed-point reachability, written independently of SceneGraph.
std::set<EntityId> reach_oracle(const SceneGraph& g, std::set<EntityId> seen) {
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& e : g.edges()) {
            bool s = seen.count(e.subject) != 0;
            bool o = seen.count(e.object) != 0;
            if (s != o) {
                seen.insert(s ? e.object : e.subject);
                grew = true;
            }
        }
    }
    return seen;
}

TEST(Graph, ConnectedComponentExample) {
    SceneGraph g(Stage::Final);
    auto black = g.add_entity("player", {"in black"});
    auto frisbee = g.add_entity("frisbee");
    auto building = g.add_entity("building");
    auto trees = g.add_entity("trees");
    g.add_edge(black, "reaches for", frisbee, EdgeKind::Interaction);
    g.add_edge(building, "behind", trees, EdgeKind::Spatial);

    auto got = g.connected_component({frisbee});
    EXPECT_EQ(got, (std::set<EntityId>{frisbee, black}));
    EXPECT_EQ(got, reach_oracle(g, {frisbee}));
    EXPECT_TRUE(g.connected_component({}).empty());
    std::set<EntityId> all{black, frisbee, building, trees};
    EXPECT_EQ(g.connected_component(all), all);
    expect_error(ErrorCode::UnknownEntity, [&] { g.connected_component({EntityId{42}}); });
}

TEST(Graph, DegreeCountsBothDirections) {
    auto s = frisbee_final();
    std::size_t oracle = 0;
    for (const auto& e : s.graph.edges()) oracle += (e.subject == s.frisbee) + (e.object == s.frisbee);
    EXPECT_EQ(s.graph.degree(s.frisbee), oracle);
    EXPECT_EQ(s.graph.degree(s.white), 2u);
    expect_error(ErrorCode::UnknownEntity, [&] { s.graph.degree(EntityId{999}); });
}

TEST(Graph, EntitiesMatchingQuestion) {
    auto s = frisbee_final();
    EXPECT_EQ(s.graph.entities_matching("Who will catch the frisbee?"), std::set<EntityId>{s.frisbee});
    EXPECT_TRUE(s.graph.entities_matching("").empty());
    // A bare label names every entity that carries it.
    EXPECT_EQ(s.graph.entities_matching("the player").size(), 3u);
    EXPECT_EQ(s.graph.entities_matching("Player in WHITE"), std::set<EntityId>{s.white});
}

TEST(Graph, SalienceIsDegreePlusQuestionBonus) {
    auto s = frisbee_final();
    EXPECT_TRUE(s.graph.entity(s.frisbee).question_mentioned);
    EXPECT_EQ(salience(s.graph, s.frisbee), static_cast<int>(s.graph.degree(s.frisbee)) + 2);
    EXPECT_EQ(salience(s.graph, s.red), 2);
}

TEST(Graph, RemoveEntityReturnsIncidentEdges) {
    auto s = frisbee_final();
    auto removed = s.graph.remove_entity(s.red);
    EXPECT_EQ(removed.size(), 2u);
    EXPECT_FALSE(s.graph.has_entity(s.red));
    EXPECT_NO_THROW(s.graph.validate());
}

TEST(Graph, SetStageValidates) {
    SceneGraph g(Stage::Spatial);
    g.add_entity("player");
    g.add_entity("player");
    EXPECT_THROW(g.set_stage(Stage::Abstract), Error);
    EXPECT_EQ(g.stage(), Stage::Spatial);

    SceneGraph f(Stage::Interaction);
    f.add_entity("lonely");
    EXPECT_THROW(f.set_stage(Stage::Final), Error);
}

TEST(Graph, SerializationFormat) {
    auto s = frisbee_final();
    auto j = nlohmann::json::parse(serialize(s.graph));
    EXPECT_EQ(j["stage"], "final");
    EXPECT_EQ(j["image_ref"], "frisbee_park.jpg");
    EXPECT_EQ(j["question"], "Who will catch the frisbee?");
    ASSERT_EQ(j["entities"].size(), 5u);
    for (const char* key : {"id", "label", "qualifiers", "bbox", "question_mentioned"}) {
        EXPECT_TRUE(j["entities"][0].contains(key)) << key;
    }
    for (const char* key : {"subject", "predicate", "object", "kind", "provenance", "grounded"}) {
        EXPECT_TRUE(j["edges"][0].contains(key)) << key;
    }
    EXPECT_TRUE(j["entities"][1]["bbox"].is_null());
    for (std::size_t i = 1; i < j["entities"].size(); ++i) {
        EXPECT_LT(j["entities"][i - 1]["id"].get<int>(), j["entities"][i]["id"].get<int>());
    }
}

TEST(Graph, DeserializeRejectsBrokenInput) {
    expect_error(ErrorCode::GraphParse, [] { deserialize("{not json"); });
    auto j = to_json(frisbee_final().graph);
    j["edges"][0]["object"] = 12345;
    EXPECT_THROW(graph_from_json(j), Error);
}

TEST(Graph, RenderTriples) {
    SceneGraph g(Stage::Final);
    auto a = g.add_entity("player", {"in black"}, BBox{0.1, 0.2, 0.3, 0.9});
    auto b = g.add_entity("frisbee");
    g.add_edge(a, "reaches for", b, EdgeKind::Interaction);
    EXPECT_EQ(render_triples(g), "- <player in black[0.1,0.2,0.3,0.9], reaches for, frisbee>\n");
    EXPECT_EQ(render_triples(g, false), "- <player in black, reaches for, frisbee>\n");
}

// ---------------------------------------------------------------------------
// Properties

void scan_invariants(const SceneGraph& g) {
    std::set<std::tuple<EntityId, std::string, EntityId, EdgeKind>> seen;
    for (const auto& e : g.edges()) {
        ASSERT_TRUE(g.has_entity(e.subject));
        ASSERT_TRUE(g.has_entity(e.object));
        ASSERT_NE(e.subject, e.object);
        ASSERT_TRUE(seen.insert({e.subject, e.predicate, e.object, e.kind}).second);
        ASSERT_EQ(e.grounded, g.entity(e.subject).bbox.has_value() && g.entity(e.object).bbox.has_value());
    }
    if (g.stage() >= Stage::Abstract) {
        std::set<std::string> names;
        for (const auto& [id, e] : g.entities()) ASSERT_TRUE(names.insert(e.display_name()).second);
    }
}

TEST(GraphProperty, RandomOperationSequencesKeepInvariants) {
    std::mt19937_64 rng(1234);
    const char* labels[] = {"player", "ball", "dog", "cup"};
    const char* quals[] = {"", "in red", "in blue"};
    for (int round = 0; round < 200; ++round) {
        Stage stage = static_cast<Stage>(rng() % 4);
        SceneGraph g(stage == Stage::Final ? Stage::Interaction : stage, "img");
        std::vector<EntityId> ids;
        std::uint64_t max_id = 0;
        for (int op = 0; op < 40; ++op) {
            try {
                switch (rng() % 6) {
                    case 0:
                    case 1: {
                        std::vector<std::string> q;
                        if (auto* s = quals[rng() % 3]; *s) q.push_back(s);
                        std::optional<BBox> box;
                        if (rng() % 2) box = BBox{0.1, 0.1, 0.2 + (rng() % 7) / 10.0, 0.9};
                        auto id = g.add_entity(labels[rng() % 4], q, box);
                        ASSERT_GT(id.value, max_id) << "ids must never be reused";
                        max_id = id.value;
                        ids.push_back(id);
                        break;
                    }
                    case 2:
                    case 3:
                        if (ids.size() >= 2) {
                            g.add_edge(ids[rng() % ids.size()], rng() % 2 ? "near" : "holds", ids[rng() % ids.size()],
                                       rng() % 2 ? EdgeKind::Spatial : EdgeKind::Interaction);
                        }
                        break;
                    case 4:
                        if (!ids.empty()) {
                            auto idx = rng() % ids.size();
                            if (g.has_entity(ids[idx])) g.remove_entity(ids[idx]);
                        }
                        break;
                    case 5:
                        if (!ids.empty() && g.has_entity(ids[rng() % ids.size()])) {
                            g.set_qualifiers(ids[rng() % ids.size()], {quals[1 + rng() % 2]});
                        }
                        break;
                }
            } catch (const Error&) {
                // Rejected operations must leave the graph consistent.
            }
            scan_invariants(g);
        }
    }
}

TEST(GraphProperty, ComponentIdempotentAndMonotone) {
    std::mt19937_64 rng(99);
    for (int round = 0; round < 200; ++round) {
        auto g = testing::random_graph(rng);
        std::vector<EntityId> ids;
        for (const auto& [id, e] : g.entities()) ids.push_back(id);
        std::set<EntityId> a, b;
        for (auto id : ids) {
            auto r = rng() % 4;
            if (r == 0) a.insert(id);
            if (r <= 1) b.insert(id);
        }
        b.insert(a.begin(), a.end());
        auto ca = g.connected_component(a);
        auto cb = g.connected_component(b);
        EXPECT_EQ(ca, reach_oracle(g, a));
        EXPECT_EQ(g.connected_component(ca), ca);
        EXPECT_TRUE(std::includes(cb.begin(), cb.end(), ca.begin(), ca.end()));
    }
}

TEST(GraphProperty, SerializationRoundTripIsByteStable) {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 200; ++round) {
        auto g = testing::random_graph(rng);
        const std::string once = serialize(g);
        const auto back = deserialize(once);
        EXPECT_EQ(serialize(back), once);
        EXPECT_EQ(back, g);
    }
    auto s = frisbee_final();
    EXPECT_EQ(serialize(deserialize(serialize(s.graph))), serialize(s.graph));
}

}  // namespace
}  // namespace isgr
