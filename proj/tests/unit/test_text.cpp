#include "isgr/hash.hpp"
#include "isgr/text.hpp"

#include <gtest/gtest.h>

namespace isgr {
namespace {

TEST(Text, NormalizeLowercasesAndCollapses) {
    EXPECT_EQ(normalize_phrase("  Player   In\tBlack "), "player in black");
    EXPECT_EQ(normalize_phrase(""), "");
    EXPECT_EQ(normalize_phrase(" \n "), "");
}

TEST(Text, BboxValidity) {
    EXPECT_TRUE((BBox{0.1, 0.2, 0.3, 0.9}.valid()));
    EXPECT_FALSE((BBox{0.3, 0.2, 0.1, 0.9}.valid()));
    EXPECT_FALSE((BBox{0.1, 0.2, 0.3, 1.2}.valid()));
    EXPECT_FALSE((BBox{0.1, 0.2, 0.1, 0.9}.valid()));
}

TEST(Text, FormatBbox) {
    EXPECT_EQ(format_bbox({0.1, 0.2, 0.3, 0.9}), "[0.1,0.2,0.3,0.9]");
    EXPECT_EQ(format_bbox({0, 0.12345, 0.5, 1}), "[0,0.1235,0.5,1]");
}

TEST(PhraseMatcherTest, LongestMatchOnWordBoundaries) {
    PhraseMatcher m;
    m.add("player", 1);
    m.add("player in black", 2);
    m.add("ball", 3);
    auto hits = m.scan("The Player in black kicks the ballpark ball.");
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0].phrase, "player in black");
    EXPECT_EQ(hits[0].payloads, std::vector<std::size_t>{2});
    EXPECT_EQ(hits[1].phrase, "ball");
}

TEST(PhraseMatcherTest, RepeatedPhraseCollectsPayloads) {
    PhraseMatcher m;
    m.add("player", 1);
    m.add("Player", 2);
    auto hits = m.scan("a player");
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].payloads, (std::vector<std::size_t>{1, 2}));
}

TEST(Text, SplitLines) {
    EXPECT_EQ(split_lines("a\r\nb\n"), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(split_lines("a\n\nb"), (std::vector<std::string>{"a", "", "b"}));
}

TEST(Hash, KnownSha256) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hash, StableKeySeparatesParts) {
    EXPECT_NE(stable_key({"ab", "c"}), stable_key({"a", "bc"}));
    EXPECT_EQ(stable_key({"x", "y"}).size(), 16u);
    EXPECT_EQ(stable_key({"x", "y"}), stable_key({"x", "y"}));
}

TEST(Hash, Base64) {
    EXPECT_EQ(base64_encode("hello"), "aGVsbG8=");
    EXPECT_EQ(base64_encode(""), "");
}

}  // namespace
}  // namespace isgr
