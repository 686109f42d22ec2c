#include "isgr/dataset.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

namespace isgr {
namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

RunResult run_cli(const std::vector<std::string>& args) {
    static int counter = 0;
    const auto base = std::filesystem::temp_directory_path() /
                      ("isgr_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::string cmd = quote(testing::cli_path());
    for (const auto& a : args) cmd += " " + quote(a);
    cmd += " > " + quote(base.string() + ".out") + " 2> " + quote(base.string() + ".err");
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = testing::read_file(base.string() + ".out");
    r.err = testing::read_file(base.string() + ".err");
    std::filesystem::remove(base.string() + ".out");
    std::filesystem::remove(base.string() + ".err");
    return r;
}

std::string config(const std::string& name) { return (testing::fixtures() / "configs" / name).string(); }

const std::string kQuestion = "Who will catch the frisbee?";

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run_cli({}).exit_code, 2);
    EXPECT_EQ(run_cli({"no-such-command"}).exit_code, 2);
    EXPECT_EQ(run_cli({"build-graph", "--image", "x.jpg"}).exit_code, 2);
    EXPECT_EQ(run_cli({"score", "--context", "/nonexistent", "--candidates", "/nonexistent"}).exit_code, 2);
    EXPECT_EQ(run_cli({"--help"}).exit_code, 0);
}

TEST(Cli, BuildGraphIsByteIdenticalAcrossRuns) {
    testing::TempDir dir("cli");
    auto a = run_cli({"build-graph", "--image", "frisbee_park.jpg", "--question", kQuestion, "--config",
                      config("mock.json"), "--trace", (dir / "trace.json").string()});
    auto b = run_cli({"build-graph", "--image", "frisbee_park.jpg", "--question", kQuestion, "--config",
                      config("mock.json")});
    ASSERT_EQ(a.exit_code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    auto g = deserialize(a.out);
    EXPECT_EQ(g.stage(), Stage::Final);
    auto trace = nlohmann::json::parse(testing::read_file(dir / "trace.json"));
    EXPECT_EQ(trace["stages"].size(), 4u);
}

TEST(Cli, ReplayMatchesMockAndMissesNameTheKey) {
    auto mock = run_cli({"build-graph", "--image", "frisbee_park.jpg", "--question", kQuestion, "--config",
                         config("mock.json")});
    auto replay = run_cli({"build-graph", "--image", "frisbee_park.jpg", "--question", kQuestion, "--config",
                           config("replay.json")});
    ASSERT_EQ(replay.exit_code, 0) << replay.err;
    EXPECT_EQ(replay.out, mock.out);

    auto miss = run_cli({"build-graph", "--image", "dog_park.jpg", "--config", config("replay.json")});
    EXPECT_EQ(miss.exit_code, 1);
    PromptRequest req{TemplateId::SpatialInit, TemplateSet{}.render(TemplateId::SpatialInit, {{"image", "<image>"}}),
                      "dog_park.jpg", {}};
    EXPECT_NE(miss.err.find(fixture_key(req)), std::string::npos) << miss.err;
    EXPECT_NE(miss.err.find("FixtureMiss"), std::string::npos);
}

TEST(Cli, ConfigOverridesAndUnknownKeys) {
    auto capped = run_cli({"build-graph", "--image", "frisbee_park.jpg", "--question", kQuestion, "--config",
                           config("mock.json"), "--set", "pipeline.m_salient=1"});
    ASSERT_EQ(capped.exit_code, 0) << capped.err;
    auto g = deserialize(capped.out);
    int interactions = 0;
    for (const auto& e : g.edges()) interactions += e.kind == EdgeKind::Interaction;
    EXPECT_EQ(interactions, 1);
    auto bad = run_cli({"build-graph", "--image", "frisbee_park.jpg", "--config", config("mock.json"), "--set",
                        "pipeline.nonsense=1"});
    EXPECT_EQ(bad.exit_code, 1);
    EXPECT_NE(bad.err.find("InvalidConfig"), std::string::npos);
}

TEST(Cli, GenQueriesEmitsFourKinds) {
    testing::TempDir dir("cliq");
    testing::write_file(dir / "g.json", serialize(testing::frisbee_final().graph));
    auto r = run_cli({"gen-queries", "--graph", (dir / "g.json").string()});
    ASSERT_EQ(r.exit_code, 0) << r.err;
    auto lines = split_lines(r.out);
    std::set<std::string> kinds;
    for (auto line : lines) {
        if (trim(line).empty()) continue;
        kinds.insert(nlohmann::json::parse(line)["kind"].get<std::string>());
    }
    EXPECT_EQ(kinds, (std::set<std::string>{"object_object", "subject_relation", "relation_object", "comprehensive"}));
    EXPECT_EQ(run_cli({"gen-queries", "--graph", (dir / "g.json").string()}).out, r.out);

    auto phrased = run_cli({"gen-queries", "--graph", (dir / "g.json").string(), "--backend-phrasing", "--config",
                            config("mock.json")});
    EXPECT_EQ(phrased.exit_code, 0) << phrased.err;
}

TEST(Cli, ScoreReportsDefaultWeightsAndRanks) {
    testing::TempDir dir("clis");
    auto g = testing::frisbee_final().graph;
    testing::write_file(dir / "ctx.json", nlohmann::json{{"question", kQuestion}, {"graph", to_json(g)}}.dump());
    testing::write_file(dir / "cands.jsonl",
                        "\"player in black catches frisbee\"\n{\"response\": \"the player\"}\n\"grass\"\n\"no idea\"\n");
    auto r = run_cli({"score", "--context", (dir / "ctx.json").string(), "--candidates", (dir / "cands.jsonl").string()});
    ASSERT_EQ(r.exit_code, 0) << r.err;
    auto lines = split_lines(r.out);
    ASSERT_GE(lines.size(), 5u);
    auto header = nlohmann::json::parse(lines[0]);
    EXPECT_EQ(header["weights"]["lambda_focus"].get<double>(), 0.4);
    EXPECT_EQ(header["weights"]["lambda_disamb"].get<double>(), 0.4);
    EXPECT_EQ(header["weights"]["lambda_rele"].get<double>(), 0.2);
    EXPECT_EQ(header["candidates"], 4);
    auto best = nlohmann::json::parse(lines[1]);
    EXPECT_EQ(best["index"], 0);
    EXPECT_EQ(best["rank"], 1);

    auto weighted = run_cli({"score", "--context", (dir / "ctx.json").string(), "--candidates",
                             (dir / "cands.jsonl").string(), "--weights", "1,0,0"});
    EXPECT_EQ(nlohmann::json::parse(split_lines(weighted.out)[0])["weights"]["lambda_focus"].get<double>(), 1.0);

    testing::write_file(dir / "bad.jsonl", "not json\n");
    EXPECT_EQ(run_cli({"score", "--context", (dir / "ctx.json").string(), "--candidates", (dir / "bad.jsonl").string()})
                  .exit_code,
              1);
}

TEST(Cli, DatasetReviewAndVariantsFlow) {
    testing::TempDir dir("clid");
    const auto out = (dir / "ds.jsonl").string();
    auto built = run_cli({"build-dataset", "--manifest", (testing::fixtures() / "corpus" / "manifest.jsonl").string(),
                          "--out", out, "--config", config("mock.json"), "--parallelism", "3"});
    ASSERT_EQ(built.exit_code, 0) << built.err;
    auto stats = nlohmann::json::parse(built.out);
    EXPECT_EQ(stats["rows_processed"], 10);
    const auto first_bytes = testing::read_file(out);
    ASSERT_EQ(run_cli({"build-dataset", "--manifest", (testing::fixtures() / "corpus" / "manifest.jsonl").string(),
                       "--out", out, "--config", config("mock.json")})
                  .exit_code,
              0);
    EXPECT_EQ(testing::read_file(out), first_bytes);

    auto records = read_records(out);
    testing::write_file(dir / "log.jsonl",
                        to_jsonl_line({{"record_id", records[0].record_id}, {"decision", "reject"}, {"reviewer", "r"}}));
    auto applied = run_cli({"apply-reviews", "--dataset", out, "--log", (dir / "log.jsonl").string(), "--train-out",
                            (dir / "train.jsonl").string()});
    ASSERT_EQ(applied.exit_code, 0) << applied.err;
    EXPECT_EQ(nlohmann::json::parse(applied.out)["training_records"], records.size() - 1);

    auto s = run_cli({"stats", "--dataset", out});
    EXPECT_EQ(nlohmann::json::parse(s.out)["statuses"]["rejected"], 1);

    testing::write_file(dir / "base.jsonl", to_jsonl_line({{"id", 1}}));
    testing::write_file(dir / "recipe.json", nlohmann::json::parse(R"({
        "sources": {"base": "base.jsonl"},
        "interaction_set": "train.jsonl",
        "variants": [{"name": "mix", "base": ["base"], "interaction": true}]
    })").dump());
    auto composed = run_cli({"compose-variants", "--recipe", (dir / "recipe.json").string(), "--out",
                             (dir / "variants").string()});
    ASSERT_EQ(composed.exit_code, 0) << composed.err;
    EXPECT_EQ(nlohmann::json::parse(composed.out)["rows"], records.size());

    auto missing = run_cli({"apply-reviews", "--dataset", (dir / "nope.jsonl").string(), "--log", (dir / "log.jsonl").string()});
    EXPECT_EQ(missing.exit_code, 1);
}

}  // namespace
}  // namespace isgr
