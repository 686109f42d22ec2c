#include "isgr/text.hpp"

#include "isgr/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace isgr {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DuplicateDisplayName: return "DuplicateDisplayName";
        case ErrorCode::InvalidBbox: return "InvalidBbox";
        case ErrorCode::InvalidLabel: return "InvalidLabel";
        case ErrorCode::UnknownEntity: return "UnknownEntity";
        case ErrorCode::SelfLoop: return "SelfLoop";
        case ErrorCode::StageMismatch: return "StageMismatch";
        case ErrorCode::EmptyGraph: return "EmptyGraph";
        case ErrorCode::GraphParse: return "GraphParse";
        case ErrorCode::FixtureMiss: return "FixtureMiss";
        case ErrorCode::UnknownScene: return "UnknownScene";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::HttpStatus: return "HttpStatus";
        case ErrorCode::MalformedResponse: return "MalformedResponse";
        case ErrorCode::ImageUnavailable: return "ImageUnavailable";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InvalidRequest: return "InvalidRequest";
        case ErrorCode::ManifestParse: return "ManifestParse";
        case ErrorCode::UnwritableOutput: return "UnwritableOutput";
        case ErrorCode::UnknownSource: return "UnknownSource";
        case ErrorCode::UnknownRecordId: return "UnknownRecordId";
        case ErrorCode::DecisionLogParse: return "DecisionLogParse";
        case ErrorCode::DatasetUnreadable: return "DatasetUnreadable";
        case ErrorCode::BindFailure: return "BindFailure";
    }
    return "Unknown";
}

namespace {
bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
}  // namespace

std::string_view trim(std::string_view text) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    return text.substr(b, e - b);
}

std::string normalize_phrase(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

bool BBox::valid() const {
    auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    return in_unit(x1) && in_unit(y1) && in_unit(x2) && in_unit(y2) && x1 < x2 && y1 < y2;
}

bool approx_equal(const BBox& a, const BBox& b, double tol) {
    return std::abs(a.x1 - b.x1) <= tol && std::abs(a.y1 - b.y1) <= tol &&
           std::abs(a.x2 - b.x2) <= tol && std::abs(a.y2 - b.y2) <= tol;
}

std::string format_number(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", value);
    std::string s(buf);
    if (s.find('.') != std::string::npos) {
        while (!s.empty() && s.back() == '0') s.pop_back();
        if (!s.empty() && s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    return s;
}

std::string format_bbox(const BBox& box) {
    return "[" + format_number(box.x1) + "," + format_number(box.y1) + "," +
           format_number(box.x2) + "," + format_number(box.y2) + "]";
}

void PhraseMatcher::add(std::string_view phrase, std::size_t payload) {
    std::string norm = normalize_phrase(phrase);
    if (norm.empty()) return;
    auto it = std::find_if(phrases_.begin(), phrases_.end(),
                           [&](const Phrase& p) { return p.text == norm; });
    if (it == phrases_.end()) {
        phrases_.push_back({std::move(norm), {payload}});
        return;
    }
    if (std::find(it->payloads.begin(), it->payloads.end(), payload) == it->payloads.end()) {
        it->payloads.push_back(payload);
    }
}

std::vector<PhraseMatcher::Match> PhraseMatcher::scan(std::string_view raw) const {
    std::vector<Match> out;
    const std::string text = normalize_phrase(raw);
    std::size_t pos = 0;
    while (pos < text.size()) {
        if (!is_word_char(text[pos]) || (pos > 0 && is_word_char(text[pos - 1]))) {
            ++pos;
            continue;
        }
        const Phrase* best = nullptr;
        for (const auto& p : phrases_) {
            if (best && p.text.size() <= best->text.size()) continue;
            if (text.compare(pos, p.text.size(), p.text) != 0) continue;
            std::size_t end = pos + p.text.size();
            if (end < text.size() && is_word_char(text[end]) && is_word_char(p.text.back())) continue;
            best = &p;
        }
        if (best) {
            out.push_back({pos, pos + best->text.size(), best->text, best->payloads});
            pos += best->text.size();
        } else {
            ++pos;
        }
    }
    return out;
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(start));
            break;
        }
        std::string_view line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    if (!lines.empty() && lines.back().empty() && !text.empty() && text.back() == '\n') lines.pop_back();
    if (!lines.empty() && !lines.back().empty() && lines.back().back() == '\r') lines.back().pop_back();
    return lines;
}

}  // namespace isgr
