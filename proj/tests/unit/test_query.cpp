#include "isgr/query.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

namespace isgr {
namespace {

// Full-scan oracles, written directly from the set definitions.
std::set<std::string> oracle_oo(const SceneGraph& g, EntityId a, EntityId b) {
    std::set<std::string> out;
    for (const auto& e : g.edges()) {
        if (e.subject == a && e.object == b) out.insert(e.predicate);
    }
    return out;
}

std::set<EntityId> oracle_sr(const SceneGraph& g, EntityId s, const std::string& r) {
    std::set<EntityId> out;
    for (const auto& e : g.edges()) {
        if (e.subject == s && e.predicate == r) out.insert(e.object);
    }
    return out;
}

std::set<EntityId> oracle_ro(const SceneGraph& g, const std::string& r, EntityId o) {
    std::set<EntityId> out;
    for (const auto& e : g.edges()) {
        if (e.object == o && e.predicate == r) out.insert(e.subject);
    }
    return out;
}

std::set<Relation> oracle_comp(const SceneGraph& g, EntityId o) {
    std::set<Relation> out;
    for (const auto& e : g.edges()) {
        if (e.object == o) out.insert({e.subject, e.predicate, Direction::Incoming});
        if (e.subject == o) out.insert({e.object, e.predicate, Direction::Outgoing});
    }
    return out;
}

TEST(QueryOperators, ObjectObjectIsDirectional) {
    SceneGraph g(Stage::Final, "a.jpg");
    auto black = g.add_entity("player", {"in black"});
    auto frisbee = g.add_entity("frisbee");
    g.add_edge(black, "reaches for", frisbee, EdgeKind::Interaction);
    EXPECT_EQ(q_oo(g, black, frisbee), (std::set<std::string>{"reaches for"}));
    EXPECT_TRUE(q_oo(g, frisbee, black).empty());
    EXPECT_THROW(q_oo(g, black, EntityId{99}), Error);
}

TEST(QueryOperators, SubjectRelation) {
    auto s = testing::frisbee_final();
    EXPECT_EQ(q_sr(s.graph, s.white, "jumps to"), (std::set<EntityId>{s.frisbee}));
    EXPECT_TRUE(q_sr(s.graph, s.white, "eats").empty());
    EXPECT_EQ(q_sr(s.graph, s.white, "Jumps  To"), (std::set<EntityId>{s.frisbee}));

    SceneGraph g(Stage::Final, "a.jpg");
    auto man = g.add_entity("man");
    auto dog = g.add_entity("dog");
    auto cat = g.add_entity("cat");
    g.add_edge(man, "feeds", dog, EdgeKind::Interaction);
    g.add_edge(man, "feeds", cat, EdgeKind::Interaction);
    EXPECT_EQ(q_sr(g, man, "feeds").size(), 2u);
    try {
        q_sr(g, EntityId{42}, "feeds");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnknownEntity);
    }
}

TEST(QueryOperators, RelationObject) {
    auto s = testing::frisbee_final();
    EXPECT_EQ(q_ro(s.graph, "reaches for", s.frisbee), (std::set<EntityId>{s.black}));
    EXPECT_TRUE(q_ro(s.graph, "behind", s.frisbee).empty());

    SceneGraph g(Stage::Final, "a.jpg");
    auto red = g.add_entity("player", {"in red hat"});
    auto white = g.add_entity("player", {"in white"});
    auto black = g.add_entity("player", {"in black"});
    g.add_edge(white, "collides", red, EdgeKind::Interaction);
    g.add_edge(black, "collides", red, EdgeKind::Interaction);
    EXPECT_EQ(q_ro(g, "collides", red), (std::set<EntityId>{white, black}));
    EXPECT_THROW(q_ro(g, "collides", EntityId{77}), Error);
}

TEST(QueryOperators, ComprehensiveTagsBothDirections) {
    auto s = testing::frisbee_final();
    auto rel = q_comp(s.graph, s.frisbee);
    std::set<Relation> incoming;
    for (const auto& r : rel) {
        if (r.direction == Direction::Incoming) incoming.insert(r);
    }
    EXPECT_EQ(incoming, (std::set<Relation>{{s.black, "near", Direction::Incoming},
                                            {s.black, "reaches for", Direction::Incoming},
                                            {s.black, "catches", Direction::Incoming},
                                            {s.white, "jumps to", Direction::Incoming},
                                            {s.red, "looking at", Direction::Incoming}}));
    EXPECT_TRUE(rel.count({s.grass, "on", Direction::Outgoing}));
    EXPECT_EQ(rel.size(), 6u);

    SceneGraph g(Stage::Interaction, "a.jpg");
    auto a = g.add_entity("a");
    auto b = g.add_entity("b");
    auto c = g.add_entity("c");
    auto lone = g.add_entity("lone");
    g.add_edge(a, "pushes", b, EdgeKind::Interaction);
    g.add_edge(b, "pulls", c, EdgeKind::Interaction);
    EXPECT_EQ(q_comp(g, b), (std::set<Relation>{{a, "pushes", Direction::Incoming}, {c, "pulls", Direction::Outgoing}}));
    EXPECT_TRUE(q_comp(g, lone).empty());
    EXPECT_THROW(q_comp(g, EntityId{1000}), Error);
}

TEST(QueryOperators, MatchBruteForceOnRandomGraphs) {
    std::mt19937_64 rng(20241014);
    for (int trial = 0; trial < 200; ++trial) {
        auto g = testing::random_graph(rng);
        std::set<std::string> preds{"absent"};
        for (const auto& e : g.edges()) preds.insert(e.predicate);
        for (const auto& [a, ea] : g.entities()) {
            EXPECT_EQ(q_comp(g, a), oracle_comp(g, a));
            std::set<Relation> incoming;
            for (const auto& r : q_comp(g, a)) {
                if (r.direction == Direction::Incoming) incoming.insert(r);
            }
            std::set<Relation> via_ro;
            for (const auto& p : preds) {
                EXPECT_EQ(q_sr(g, a, p), oracle_sr(g, a, p));
                EXPECT_EQ(q_ro(g, p, a), oracle_ro(g, p, a));
                for (auto s : q_ro(g, p, a)) via_ro.insert({s, p, Direction::Incoming});
            }
            EXPECT_EQ(incoming, via_ro);
            for (const auto& [b, eb] : g.entities()) EXPECT_EQ(q_oo(g, a, b), oracle_oo(g, a, b));
        }
        for (const auto& e : g.edges()) {
            EXPECT_TRUE(q_sr(g, e.subject, e.predicate).count(e.object));
            EXPECT_TRUE(q_ro(g, e.predicate, e.object).count(e.subject));
            EXPECT_TRUE(q_oo(g, e.subject, e.object).count(e.predicate));
        }
    }
}

/// Entities placed in the answer other than the queried one.
std::set<EntityId> answer_entities(const GeneratedInstruction& ins, EntityId queried) {
    std::set<EntityId> out;
    for (const auto& p : ins.placements) {
        if (p.entity != queried) out.insert(p.entity);
    }
    return out;
}

void check_against_operators(const SceneGraph& g, const GeneratedInstruction& ins) {
    ASSERT_FALSE(ins.evidence.empty());
    for (const auto& e : ins.evidence) EXPECT_TRUE(g.edges().count(e)) << ins.question;
    const Edge& head = ins.evidence.front();
    switch (ins.kind) {
        case QueryKind::ObjectObject: {
            auto preds = q_oo(g, head.subject, head.object);
            for (const auto& e : ins.evidence) {
                EXPECT_TRUE(preds.count(e.predicate));
                EXPECT_NE(ins.answer.find(e.predicate), std::string::npos);
            }
            break;
        }
        case QueryKind::SubjectRelation: {
            auto objects = q_sr(g, head.subject, head.predicate);
            for (auto id : answer_entities(ins, head.subject)) EXPECT_TRUE(objects.count(id)) << ins.answer;
            break;
        }
        case QueryKind::RelationObject: {
            auto subjects = q_ro(g, head.predicate, head.object);
            for (auto id : answer_entities(ins, head.object)) EXPECT_TRUE(subjects.count(id)) << ins.answer;
            break;
        }
        case QueryKind::Comprehensive: {
            std::set<EntityId> related;
            for (const auto& r : q_comp(g, head.subject)) related.insert(r.other);
            for (auto id : answer_entities(ins, head.subject)) EXPECT_TRUE(related.count(id)) << ins.answer;
            break;
        }
    }
}

TEST(GenerateInstructions, FourTemplatesOnFrisbeeGraph) {
    auto s = testing::frisbee_final();
    auto set = generate_instructions(s.graph);
    ASSERT_EQ(set.instructions.size(), 4u);
    EXPECT_TRUE(set.skipped.empty());
    std::set<QueryKind> kinds;
    for (const auto& ins : set.instructions) {
        kinds.insert(ins.kind);
        EXPECT_TRUE(bbox_rule_holds(ins)) << ins.question << " / " << ins.answer;
        check_against_operators(s.graph, ins);
    }
    EXPECT_EQ(kinds.size(), 4u);

    const auto& oo = set.instructions[0];
    EXPECT_EQ(oo.kind, QueryKind::ObjectObject);
    EXPECT_EQ(oo.question,
              "What is the relationship between player in black[0.1,0.2,0.3,0.9] and frisbee[0.45,0.1,0.52,0.18]?");
    EXPECT_EQ(oo.answer, "player in black catches and reaches for frisbee.");

    const auto& sr = set.instructions[1];
    EXPECT_TRUE(sr.question.starts_with("What does player in black[0.1,0.2,0.3,0.9] catches"));
    const auto& ro = set.instructions[2];
    EXPECT_TRUE(ro.question.starts_with("What is catches by frisbee[0.45,0.1,0.52,0.18]"));
    EXPECT_EQ(ro.answer, "player in black[0.1,0.2,0.3,0.9] catches frisbee.");

    const auto& comp = set.instructions[3];
    EXPECT_EQ(comp.kind, QueryKind::Comprehensive);
    EXPECT_TRUE(comp.question.starts_with("What objects have a relationship with "));
    EXPECT_NE(comp.answer.find("player in black"), std::string::npos);
}

TEST(GenerateInstructions, Deterministic) {
    auto s = testing::frisbee_final();
    auto a = generate_instructions(s.graph);
    auto b = generate_instructions(s.graph);
    ASSERT_EQ(a.instructions.size(), b.instructions.size());
    for (std::size_t i = 0; i < a.instructions.size(); ++i) {
        EXPECT_EQ(to_json(a.instructions[i]).dump(), to_json(b.instructions[i]).dump());
    }
}

TEST(GenerateInstructions, SingleEdgeGraph) {
    SceneGraph g(Stage::Final, "a.jpg");
    auto man = g.add_entity("man", {}, BBox{0.1, 0.1, 0.3, 0.9});
    auto kite = g.add_entity("kite");
    g.add_edge(man, "flies", kite, EdgeKind::Interaction);
    auto set = generate_instructions(g);
    EXPECT_LE(set.instructions.size(), 4u);
    EXPECT_FALSE(set.instructions.empty());
    EXPECT_EQ(set.instructions.size() + set.skipped.size(), 4u);
    const Edge only = *g.edges().begin();
    for (const auto& ins : set.instructions) {
        ASSERT_EQ(ins.evidence.size(), 1u);
        EXPECT_TRUE(ins.evidence[0].same_as(only));
        EXPECT_TRUE(bbox_rule_holds(ins));
    }
}

TEST(GenerateInstructions, CountAndEmptyGraph) {
    auto s = testing::frisbee_final();
    EXPECT_EQ(generate_instructions(s.graph, 2).instructions.size(), 2u);
    SceneGraph empty(Stage::Final, "a.jpg");
    empty.add_entity("x");
    EXPECT_THROW(generate_instructions(empty), Error);
}

TEST(GenerateInstructions, BboxRuleOnRandomGraphs) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = testing::random_graph(rng);
        if (g.edges().empty()) continue;
        for (const auto& [id, e] : g.entities()) {
            if (rng() % 2) {
                double x = static_cast<double>(rng() % 50) / 100.0;
                g.set_bbox(id, BBox{x, x, x + 0.25, x + 0.25});
            }
        }
        for (const auto& ins : generate_instructions(g).instructions) {
            EXPECT_TRUE(bbox_rule_holds(ins)) << ins.question << " / " << ins.answer;
            check_against_operators(g, ins);
            for (const auto& p : ins.placements) {
                const bool boxed = g.entity(p.entity).bbox.has_value();
                if (boxed) EXPECT_TRUE(p.in_question || p.in_answer) << p.name;
                if (!boxed) EXPECT_FALSE(p.in_question || p.in_answer) << p.name;
            }
        }
    }
}

TEST(GenerateInstructions, BackendPhrasingKeepsTheContract) {
    auto lib = SceneLibrary::load(testing::scenes_dir());
    MockBackend backend(lib, 7);
    auto pipeline = Pipeline(std::make_shared<MockBackend>(lib, 7), PipelineConfig{});
    auto g = pipeline.run("frisbee_park.jpg", std::string("Who will catch the frisbee?")).final_graph;
    for (long long seed = 0; seed < 5; ++seed) {
        MockBackend b(lib, seed);
        auto set = generate_instructions_with_backend(g, b, TemplateSet{}, GenerationParams{});
        EXPECT_LE(set.instructions.size(), 4u);
        for (const auto& ins : set.instructions) {
            EXPECT_TRUE(bbox_rule_holds(ins));
            for (const auto& e : ins.evidence) EXPECT_TRUE(g.edges().count(e));
        }
    }
}

TEST(GenerateInstructions, BackendAnswerBoxesRepeatedFromQuestionAreRemoved) {
    struct Fixed : Backend {
        std::vector<std::string> generate_group(const PromptRequest& r, int k) override {
            check_request(r, k);
            return {"1. Q: What does man[0.1,0.1,0.3,0.9] fly?\nA: Man[0.1,0.1,0.3,0.9] flies kite."};
        }
        std::string name() const override { return "fixed"; }
    } backend;
    SceneGraph g(Stage::Final, "a.jpg");
    g.add_edge(g.add_entity("man", {}, BBox{0.1, 0.1, 0.3, 0.9}), "flies", g.add_entity("kite"), EdgeKind::Interaction);
    auto set = generate_instructions_with_backend(g, backend, TemplateSet{}, GenerationParams{});
    ASSERT_EQ(set.instructions.size(), 1u);
    EXPECT_EQ(set.instructions[0].answer, "Man flies kite.");
    EXPECT_TRUE(bbox_rule_holds(set.instructions[0]));
}

TEST(InstructionJson, Keys) {
    auto set = generate_instructions(testing::frisbee_final().graph);
    auto j = to_json(set.instructions[0]);
    for (const char* k : {"kind", "question", "answer", "evidence", "bbox_placement"}) EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j["kind"], "object_object");
    for (auto k : kAllQueryKinds) EXPECT_EQ(query_kind_from_string(to_string(k)), k);
}

}  // namespace
}  // namespace isgr
