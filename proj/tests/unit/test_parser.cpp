#include "isgr/parser.hpp"

#include <gtest/gtest.h>

#include <random>

namespace isgr {
namespace {

RawTriple triple(std::string s, std::string p, std::string o, int line) {
    RawTriple t;
    t.subject = std::move(s);
    t.predicate = std::move(p);
    t.object = std::move(o);
    t.source_line = line;
    return t;
}

bool has_warning(const std::vector<ParseWarning>& ws, WarningKind kind) {
    for (const auto& w : ws) {
        if (w.kind == kind) return true;
    }
    return false;
}

TEST(ParseTriples, ExampleOutputLines) {
    auto r = parse_triples("- <person, on, chair>\n- <table, next to, chair>");
    ASSERT_EQ(r.triples.size(), 2u);
    EXPECT_EQ(r.triples[0], triple("person", "on", "chair", 1));
    EXPECT_EQ(r.triples[1], triple("table", "next to", "chair", 2));
    EXPECT_TRUE(r.warnings.empty());
}

TEST(ParseTriples, AngleForm) {
    auto r = parse_triples("<goalkeeper, catching, ball>");
    ASSERT_EQ(r.triples.size(), 1u);
    EXPECT_EQ(r.triples[0], triple("goalkeeper", "catching", "ball", 1));
}

TEST(ParseTriples, TooFewFields) {
    auto r = parse_triples("<a, b>");
    EXPECT_TRUE(r.triples.empty());
    EXPECT_TRUE(has_warning(r.warnings, WarningKind::TooFewFields));
    EXPECT_TRUE(has_warning(r.warnings, WarningKind::EmptyOutput));
}

TEST(ParseTriples, ExtraCommasSplitAtFirstAndLast) {
    auto r = parse_triples("<man, sitting on, old wooden chair, near window>");
    ASSERT_EQ(r.triples.size(), 1u);
    EXPECT_EQ(r.triples[0], triple("man", "sitting on, old wooden chair", "near window", 1));
    EXPECT_TRUE(has_warning(r.warnings, WarningKind::SuspiciousPredicate));
}

TEST(ParseTriples, OtherAcceptedForms) {
    auto r = parse_triples("(dog, chases, ball)\ncat, sits on, mat\n1. <Bird, Flies Over, Tree>\n* <a,b,c>");
    ASSERT_EQ(r.triples.size(), 4u);
    EXPECT_EQ(r.triples[0], triple("dog", "chases", "ball", 1));
    EXPECT_EQ(r.triples[1], triple("cat", "sits on", "mat", 2));
    EXPECT_EQ(r.triples[2], triple("bird", "flies over", "tree", 3));
    EXPECT_EQ(r.triples[3], triple("a", "b", "c", 4));
}

TEST(ParseTriples, InlineBoxesDoNotSplit) {
    auto r = parse_triples("- <player[0.1,0.2,0.3,0.9], near, frisbee[0.45,0.1,0.52,0.18]>");
    ASSERT_EQ(r.triples.size(), 1u);
    const auto& t = r.triples[0];
    EXPECT_EQ(t.subject, "player");
    EXPECT_EQ(t.object, "frisbee");
    ASSERT_TRUE(t.subject_bbox);
    EXPECT_TRUE(approx_equal(*t.subject_bbox, {0.1, 0.2, 0.3, 0.9}));
    ASSERT_TRUE(t.object_bbox);
    EXPECT_TRUE(approx_equal(*t.object_bbox, {0.45, 0.1, 0.52, 0.18}));
}

TEST(ParseTriples, BadBoxesWarn) {
    auto r = parse_triples("<cup[0.5,0.5,0.4,0.9], on, table>\n<cup[10,20,30,40], on, table>");
    ASSERT_EQ(r.triples.size(), 2u);
    EXPECT_FALSE(r.triples[0].subject_bbox);
    EXPECT_TRUE(has_warning(r.warnings, WarningKind::InvalidBbox));
    EXPECT_TRUE(has_warning(r.warnings, WarningKind::PixelBboxWithoutDimensions));
}

TEST(ParseTriples, MalformedLinesAreWarningsNotErrors) {
    auto r = parse_triples("Here are the triples:\n\n<x, y, z>\n<, on, >\ngarbage");
    ASSERT_EQ(r.triples.size(), 1u);
    EXPECT_EQ(r.triples[0].source_line, 3);
    EXPECT_TRUE(has_warning(r.warnings, WarningKind::MalformedLine));
    EXPECT_TRUE(has_warning(r.warnings, WarningKind::EmptyField));
}

TEST(ParseTriplesProperty, FormatThenParseRoundTrips) {
    std::mt19937_64 rng(5);
    const std::string alphabet = "abcdefghij klmnop";
    auto word = [&] {
        std::string w;
        int n = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) w += alphabet[rng() % alphabet.size()];
        return normalize_phrase(w);
    };
    for (int i = 0; i < 500; ++i) {
        std::string s = word(), p = word(), o = word();
        if (s.empty() || p.empty() || o.empty()) continue;
        auto r = parse_triples("<" + s + ", " + p + ", " + o + ">");
        ASSERT_EQ(r.triples.size(), 1u);
        EXPECT_EQ(r.triples[0], triple(s, p, o, 1));
    }
}

TEST(ParseTriplesProperty, RandomBytesNeverThrow) {
    std::mt19937_64 rng(11);
    const std::string biased = "<>(),[]-*. \n\t0123456789abc";
    for (int i = 0; i < 2000; ++i) {
        std::string text;
        int n = static_cast<int>(rng() % 120);
        for (int k = 0; k < n; ++k) {
            text += rng() % 2 ? static_cast<char>(rng() % 256) : biased[rng() % biased.size()];
        }
        TripleParse r;
        ASSERT_NO_THROW(r = parse_triples(text));
        EXPECT_LE(r.triples.size(), split_lines(text).size());
        for (const auto& t : r.triples) {
            EXPECT_FALSE(t.subject.empty());
            EXPECT_FALSE(t.predicate.empty());
            EXPECT_FALSE(t.object.empty());
            EXPECT_EQ(std::string(trim(t.subject)), t.subject);
        }
    }
}

TEST(ParseQa, PairWithTwoBoxes) {
    auto r = parse_qa_pairs(
        "Q: What does player in black[0.1,0.2,0.3,0.9] reach for?\nA: player in black reaches for "
        "frisbee[0.4,0.1,0.5,0.2].");
    ASSERT_EQ(r.pairs.size(), 1u);
    const auto& p = r.pairs[0];
    EXPECT_EQ(p.question, "What does player in black[0.1,0.2,0.3,0.9] reach for?");
    ASSERT_EQ(p.bbox_mentions.size(), 2u);
    EXPECT_EQ(p.bbox_mentions[0].phrase, "player in black");
    EXPECT_TRUE(approx_equal(p.bbox_mentions[0].bbox, {0.1, 0.2, 0.3, 0.9}));
    EXPECT_EQ(p.bbox_mentions[1].phrase, "frisbee");
    EXPECT_TRUE(approx_equal(p.bbox_mentions[1].bbox, {0.4, 0.1, 0.5, 0.2}));
}

TEST(ParseQa, EmptyInput) {
    auto r = parse_qa_pairs("");
    EXPECT_TRUE(r.pairs.empty());
}

TEST(ParseQa, UnpairedQuestion) {
    auto r = parse_qa_pairs("Q: x?\nQ: y?\nA: z");
    ASSERT_EQ(r.pairs.size(), 1u);
    EXPECT_EQ(r.pairs[0].question, "y?");
    EXPECT_EQ(r.pairs[0].answer, "z");
    ASSERT_TRUE(has_warning(r.warnings, WarningKind::UnpairedQuestion));
    for (const auto& w : r.warnings) {
        if (w.kind == WarningKind::UnpairedQuestion) EXPECT_EQ(w.detail, "x?");
    }
}

TEST(ParseQa, NumberedAndBoldForms) {
    auto r = parse_qa_pairs("1. **Q**: What is on the table?\n**A**: a cup.\n\n2. Question: Who runs?\nAnswer: the dog");
    ASSERT_EQ(r.pairs.size(), 2u);
    EXPECT_EQ(r.pairs[0].question, "What is on the table?");
    EXPECT_EQ(r.pairs[0].answer, "a cup.");
    EXPECT_EQ(r.pairs[1].answer, "the dog");
}

TEST(ParseQa, PixelBoxesNeedImageSize) {
    const std::string text = "Q: Where is cup[100,50,200,150]?\nA: on the table.";
    auto flagged = parse_qa_pairs(text);
    ASSERT_EQ(flagged.pairs.size(), 1u);
    EXPECT_TRUE(flagged.pairs[0].bbox_mentions.empty());
    EXPECT_TRUE(has_warning(flagged.warnings, WarningKind::PixelBboxWithoutDimensions));

    QAParseOptions opts;
    opts.image_size = ImageSize{400, 300};
    auto scaled = parse_qa_pairs(text, opts);
    ASSERT_EQ(scaled.pairs[0].bbox_mentions.size(), 1u);
    EXPECT_TRUE(approx_equal(scaled.pairs[0].bbox_mentions[0].bbox, {0.25, 1.0 / 6.0, 0.5, 0.5}));
}

TEST(ParseQa, VocabularyPicksLongestKnownName) {
    QAParseOptions opts;
    opts.vocabulary = {"player", "player in red hat", "frisbee"};
    auto ms = extract_bbox_mentions("What is looking at by the player in red hat[0.7,0.3,0.85,0.92]?", opts);
    ASSERT_EQ(ms.size(), 1u);
    EXPECT_EQ(ms[0].phrase, "player in red hat");
}

TEST(ParseQa, StripBboxSpans) {
    EXPECT_EQ(strip_bbox_spans("cup[0.1,0.2,0.3,0.4] on table"), "cup on table");
    EXPECT_EQ(strip_bbox_spans("see [note] here"), "see [note] here");
}

}  // namespace
}  // namespace isgr
