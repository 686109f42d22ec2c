#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace isgr {

/// Lowercases ASCII letters, trims, and collapses internal whitespace runs to a
/// single space.
std::string normalize_phrase(std::string_view text);

std::string_view trim(std::string_view text);

bool is_word_char(char c);

/// Normalized axis-aligned box, coordinates in [0,1] with x1<x2, y1<y2.
struct BBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    bool valid() const;
    bool operator==(const BBox&) const = default;
};

bool approx_equal(const BBox& a, const BBox& b, double tol = 1e-3);

/// "[0.1,0.2,0.3,0.9]" with at most four decimals, trailing zeros trimmed.
std::string format_bbox(const BBox& box);

std::string format_number(double value);

/// Longest-match phrase scanner over normalized text. Matches start and end on
/// word boundaries; at each word start the longest registered phrase wins.
class PhraseMatcher {
public:
    struct Match {
        std::size_t begin = 0;
        std::size_t end = 0;
        std::string phrase;
        std::vector<std::size_t> payloads;
    };

    /// Registers `phrase` (normalized on insert). Re-registering a phrase adds
    /// another payload to it.
    void add(std::string_view phrase, std::size_t payload);

    /// Scans `text` after normalizing it. Offsets refer to the normalized text.
    std::vector<Match> scan(std::string_view text) const;

    bool empty() const { return phrases_.empty(); }

private:
    struct Phrase {
        std::string text;
        std::vector<std::size_t> payloads;
    };
    std::vector<Phrase> phrases_;
};

std::vector<std::string> split_lines(std::string_view text);

}  // namespace isgr
