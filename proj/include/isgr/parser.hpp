#pragma once

#include "isgr/text.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace isgr {

enum class WarningKind {
    EmptyOutput,
    MalformedLine,
    TooFewFields,
    EmptyField,
    SuspiciousPredicate,
    InvalidBbox,
    PixelBboxWithoutDimensions,
    UnpairedQuestion,
    UnpairedAnswer,
};

std::string_view to_string(WarningKind kind);

struct ParseWarning {
    WarningKind kind;
    int line = 0;  // 1-based; 0 when the warning concerns the whole text
    std::string detail;
};

struct RawTriple {
    std::string subject;
    std::string predicate;
    std::string object;
    int source_line = 0;
    std::optional<BBox> subject_bbox;
    std::optional<BBox> object_bbox;

    bool operator==(const RawTriple&) const = default;
};

struct TripleParse {
    std::vector<RawTriple> triples;
    std::vector<ParseWarning> warnings;
};

/// Accepts "<a, b, c>", "- <a, b, c>", "(a, b, c)" and bare "a, b, c" lines.
/// Commas inside [...] bbox spans do not count as separators. With more than two
/// separators the line splits at the first and last one. Never throws.
TripleParse parse_triples(std::string_view text);

struct BboxMention {
    std::string phrase;
    BBox bbox;
};

struct RawQAPair {
    std::string question;
    std::string answer;
    std::vector<BboxMention> bbox_mentions;
};

struct ImageSize {
    double width = 0;
    double height = 0;
};

struct QAParseOptions {
    std::optional<ImageSize> image_size;
    /// Known entity names; when given, the phrase before a bbox span is the
    /// longest known name ending there. Otherwise a stop-word heuristic is used.
    std::vector<std::string> vocabulary;
};

struct QAParse {
    std::vector<RawQAPair> pairs;
    std::vector<ParseWarning> warnings;
};

QAParse parse_qa_pairs(std::string_view text, const QAParseOptions& options = {});

/// Extracts "phrase[x1,y1,x2,y2]" spans from a single line of text.
std::vector<BboxMention> extract_bbox_mentions(std::string_view text, const QAParseOptions& options,
                                               std::vector<ParseWarning>* warnings = nullptr,
                                               int line = 0);

/// Removes every [...] numeric span, leaving the surrounding words.
std::string strip_bbox_spans(std::string_view text);

nlohmann::json to_json(const ParseWarning& w);
nlohmann::json to_json(const RawTriple& t);

}  // namespace isgr
