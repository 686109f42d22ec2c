#include "isgr/parser.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <set>

namespace isgr {

std::string_view to_string(WarningKind kind) {
    switch (kind) {
        case WarningKind::EmptyOutput: return "EmptyOutput";
        case WarningKind::MalformedLine: return "MalformedLine";
        case WarningKind::TooFewFields: return "TooFewFields";
        case WarningKind::EmptyField: return "EmptyField";
        case WarningKind::SuspiciousPredicate: return "SuspiciousPredicate";
        case WarningKind::InvalidBbox: return "InvalidBbox";
        case WarningKind::PixelBboxWithoutDimensions: return "PixelBboxWithoutDimensions";
        case WarningKind::UnpairedQuestion: return "UnpairedQuestion";
        case WarningKind::UnpairedAnswer: return "UnpairedAnswer";
    }
    return "Unknown";
}

nlohmann::json to_json(const ParseWarning& w) {
    return {{"kind", to_string(w.kind)}, {"line", w.line}, {"detail", w.detail}};
}

nlohmann::json to_json(const RawTriple& t) {
    nlohmann::json j = {{"subject", t.subject}, {"predicate", t.predicate}, {"object", t.object},
                        {"line", t.source_line}};
    if (t.subject_bbox) j["subject_bbox"] = format_bbox(*t.subject_bbox);
    if (t.object_bbox) j["object_bbox"] = format_bbox(*t.object_bbox);
    return j;
}

namespace {

std::string_view strip_bullet(std::string_view s) {
    s = trim(s);
    if (s.starts_with("\xe2\x80\xa2")) return trim(s.substr(3));
    if (!s.empty() && (s[0] == '-' || s[0] == '*' || s[0] == '+')) {
        // "**Q**" style emphasis is not a bullet.
        if (s.size() > 1 && s[0] == '*' && s[1] == '*') return s;
        return trim(s.substr(1));
    }
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
        if (i + 1 == s.size() || s[i + 1] == ' ' || s[i + 1] == '\t') return trim(s.substr(i + 1));
    }
    return s;
}

std::string_view strip_decoration(std::string_view s) {
    s = trim(s);
    auto deco = [](char c) { return c == '"' || c == '\'' || c == '*' || c == '`' || c == '_'; };
    while (!s.empty() && deco(s.front())) s.remove_prefix(1);
    while (!s.empty() && deco(s.back())) s.remove_suffix(1);
    return trim(s);
}

std::optional<std::array<double, 4>> parse_four_numbers(std::string_view inner) {
    std::array<double, 4> v{};
    std::size_t idx = 0;
    std::size_t pos = 0;
    while (idx < 4) {
        while (pos < inner.size() && (inner[pos] == ' ' || inner[pos] == '\t')) ++pos;
        if (pos >= inner.size()) return std::nullopt;
        std::size_t start = pos;
        if (inner[pos] == '+') ++start;
        auto res = std::from_chars(inner.data() + start, inner.data() + inner.size(), v[idx]);
        if (res.ec != std::errc{} || res.ptr == inner.data() + start) return std::nullopt;
        pos = static_cast<std::size_t>(res.ptr - inner.data());
        while (pos < inner.size() && (inner[pos] == ' ' || inner[pos] == '\t')) ++pos;
        ++idx;
        if (idx < 4) {
            if (pos >= inner.size() || inner[pos] != ',') return std::nullopt;
            ++pos;
        }
    }
    while (pos < inner.size() && (inner[pos] == ' ' || inner[pos] == '\t')) ++pos;
    if (pos != inner.size()) return std::nullopt;
    return v;
}

enum class BoxStatus { Ok, Pixel, Invalid };

BoxStatus normalize_box(const std::array<double, 4>& v, const std::optional<ImageSize>& size, BBox& out) {
    bool pixel = std::any_of(v.begin(), v.end(), [](double x) { return x > 1.0; });
    out = BBox{v[0], v[1], v[2], v[3]};
    if (pixel) {
        if (!size || size->width <= 0 || size->height <= 0) return BoxStatus::Pixel;
        out = BBox{v[0] / size->width, v[1] / size->height, v[2] / size->width, v[3] / size->height};
    }
    return out.valid() ? BoxStatus::Ok : BoxStatus::Invalid;
}

struct Part {
    std::string text;
    std::optional<BBox> bbox;
};

Part parse_part(std::string_view raw, int line, std::vector<ParseWarning>& warnings) {
    std::string_view s = strip_decoration(raw);
    Part part;
    if (!s.empty() && s.back() == ']') {
        auto open = s.rfind('[');
        if (open != std::string_view::npos) {
            auto nums = parse_four_numbers(s.substr(open + 1, s.size() - open - 2));
            if (nums) {
                BBox box;
                switch (normalize_box(*nums, std::nullopt, box)) {
                    case BoxStatus::Ok: part.bbox = box; break;
                    case BoxStatus::Pixel:
                        warnings.push_back({WarningKind::PixelBboxWithoutDimensions, line, std::string(s)});
                        break;
                    case BoxStatus::Invalid:
                        warnings.push_back({WarningKind::InvalidBbox, line, std::string(s)});
                        break;
                }
                s = strip_decoration(s.substr(0, open));
            }
        }
    }
    part.text = normalize_phrase(s);
    return part;
}

std::vector<std::size_t> top_level_commas(std::string_view body) {
    std::vector<std::size_t> commas;
    int depth = 0;
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (c == '[') ++depth;
        else if (c == ']' && depth > 0) --depth;
        else if (c == ',' && depth == 0) commas.push_back(i);
    }
    return commas;
}

}  // namespace

TripleParse parse_triples(std::string_view text) {
    TripleParse out;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const int line_no = static_cast<int>(i + 1);
        std::string_view s = strip_bullet(lines[i]);
        if (s.empty()) continue;

        std::string_view body;
        auto lt = s.find('<');
        auto gt = s.rfind('>');
        if (lt != std::string_view::npos && gt != std::string_view::npos && gt > lt) {
            body = s.substr(lt + 1, gt - lt - 1);
        } else if (s.front() == '(' && s.back() == ')') {
            body = s.substr(1, s.size() - 2);
        } else if (s.front() == '(' && s.size() > 2 && s[s.size() - 2] == ')' &&
                   (s.back() == ',' || s.back() == '.' || s.back() == ';')) {
            body = s.substr(1, s.size() - 3);
        } else {
            body = s;
            while (!body.empty() && (body.back() == '.' || body.back() == ';')) body.remove_suffix(1);
        }

        const auto commas = top_level_commas(body);
        if (commas.size() < 2) {
            WarningKind kind = (commas.empty() && lt == std::string_view::npos && s.front() != '(')
                                   ? WarningKind::MalformedLine
                                   : WarningKind::TooFewFields;
            out.warnings.push_back({kind, line_no, std::string(s)});
            continue;
        }
        const std::size_t first = commas.front();
        const std::size_t last = commas.back();
        Part subj = parse_part(body.substr(0, first), line_no, out.warnings);
        Part pred = parse_part(body.substr(first + 1, last - first - 1), line_no, out.warnings);
        Part obj = parse_part(body.substr(last + 1), line_no, out.warnings);
        if (subj.text.empty() || pred.text.empty() || obj.text.empty()) {
            out.warnings.push_back({WarningKind::EmptyField, line_no, std::string(s)});
            continue;
        }
        if (commas.size() > 2) {
            out.warnings.push_back({WarningKind::SuspiciousPredicate, line_no, pred.text});
        }
        RawTriple t;
        t.subject = std::move(subj.text);
        t.predicate = std::move(pred.text);
        t.object = std::move(obj.text);
        t.source_line = line_no;
        t.subject_bbox = subj.bbox;
        t.object_bbox = obj.bbox;
        out.triples.push_back(std::move(t));
    }
    if (out.triples.empty()) out.warnings.push_back({WarningKind::EmptyOutput, 0, "no triples parsed"});
    return out;
}

namespace {

const std::set<std::string>& stop_words() {
    static const std::set<std::string> words = {
        "what", "who", "whom", "which", "does", "do", "did", "is", "are", "was", "were",
        "the", "a", "an", "between", "and", "or", "with", "by", "for", "to", "at", "of",
        "on", "from", "have", "has", "had", "relationship", "objects", "q", "a:", "q:"};
    return words;
}

std::string phrase_before(std::string_view prefix, const QAParseOptions& options) {
    const std::string norm = normalize_phrase(strip_bbox_spans(prefix));
    if (!options.vocabulary.empty()) {
        std::string best;
        for (const auto& v : options.vocabulary) {
            std::string name = normalize_phrase(v);
            if (name.empty() || name.size() <= best.size() || name.size() > norm.size()) continue;
            if (norm.compare(norm.size() - name.size(), name.size(), name) != 0) continue;
            std::size_t start = norm.size() - name.size();
            if (start > 0 && is_word_char(norm[start - 1])) continue;
            best = name;
        }
        if (!best.empty()) return best;
    }
    // Walk back word by word until a stop word or punctuation.
    std::vector<std::string> tokens;
    for (std::size_t start = 0; start < norm.size();) {
        std::size_t sp = norm.find(' ', start);
        if (sp == std::string::npos) sp = norm.size();
        tokens.push_back(norm.substr(start, sp - start));
        start = sp + 1;
    }
    std::vector<std::string> words;
    for (auto it = tokens.rbegin(); it != tokens.rend(); ++it) {
        const std::string& tok = *it;
        if (!words.empty() && !is_word_char(tok.back())) break;
        std::string bare = tok;
        while (!bare.empty() && !is_word_char(bare.back())) bare.pop_back();
        while (!bare.empty() && !is_word_char(bare.front())) bare.erase(bare.begin());
        if (bare.empty() || stop_words().count(bare)) break;
        words.push_back(bare);
        if (!is_word_char(tok.front())) break;
    }
    std::reverse(words.begin(), words.end());
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

}  // namespace

std::string strip_bbox_spans(std::string_view text) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find('[', pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        auto close = text.find(']', open);
        if (close == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, open - pos));
        if (!parse_four_numbers(text.substr(open + 1, close - open - 1))) {
            out.append(text.substr(open, close - open + 1));
        }
        pos = close + 1;
    }
    return out;
}

std::vector<BboxMention> extract_bbox_mentions(std::string_view text, const QAParseOptions& options,
                                               std::vector<ParseWarning>* warnings, int line) {
    std::vector<BboxMention> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find('[', pos);
        if (open == std::string_view::npos) break;
        auto close = text.find(']', open);
        if (close == std::string_view::npos) break;
        auto nums = parse_four_numbers(text.substr(open + 1, close - open - 1));
        pos = close + 1;
        if (!nums) continue;
        std::string phrase = phrase_before(text.substr(0, open), options);
        BBox box;
        switch (normalize_box(*nums, options.image_size, box)) {
            case BoxStatus::Ok:
                if (!phrase.empty()) out.push_back({phrase, box});
                break;
            case BoxStatus::Pixel:
                if (warnings) warnings->push_back({WarningKind::PixelBboxWithoutDimensions, line, phrase});
                break;
            case BoxStatus::Invalid:
                if (warnings) warnings->push_back({WarningKind::InvalidBbox, line, phrase});
                break;
        }
    }
    return out;
}

namespace {

enum class QALine { Question, Answer, Other };

QALine classify(std::string_view s, std::string_view& rest) {
    s = strip_bullet(s);
    std::string head;
    std::size_t i = 0;
    while (i < s.size() && head.size() < 12 && s[i] != ':') {
        if (s[i] != '*' && s[i] != '_') head.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
        ++i;
    }
    if (i >= s.size() || s[i] != ':') return QALine::Other;
    std::string key = normalize_phrase(head);
    std::size_t after = i + 1;
    while (after < s.size() && (s[after] == '*' || s[after] == '_')) ++after;
    rest = trim(s.substr(after));
    if (key == "q" || key == "question") return QALine::Question;
    if (key == "a" || key == "answer") return QALine::Answer;
    return QALine::Other;
}

}  // namespace

QAParse parse_qa_pairs(std::string_view text, const QAParseOptions& options) {
    QAParse out;
    const auto lines = split_lines(text);

    std::optional<std::string> question;
    int question_line = 0;
    std::string* continuation = nullptr;
    std::vector<std::pair<RawQAPair, int>> pending;

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const int line_no = static_cast<int>(i + 1);
        std::string_view s = trim(lines[i]);
        if (s.empty()) {
            continuation = nullptr;
            continue;
        }
        std::string_view rest;
        switch (classify(s, rest)) {
            case QALine::Question:
                if (question) out.warnings.push_back({WarningKind::UnpairedQuestion, question_line, *question});
                question = std::string(rest);
                question_line = line_no;
                continuation = &*question;
                break;
            case QALine::Answer:
                if (!question) {
                    out.warnings.push_back({WarningKind::UnpairedAnswer, line_no, std::string(rest)});
                    continuation = nullptr;
                    break;
                }
                pending.push_back({RawQAPair{*question, std::string(rest), {}}, question_line});
                question.reset();
                continuation = &pending.back().first.answer;
                break;
            case QALine::Other:
                if (continuation) {
                    if (!continuation->empty()) continuation->push_back(' ');
                    continuation->append(s);
                }
                break;
        }
    }
    if (question) out.warnings.push_back({WarningKind::UnpairedQuestion, question_line, *question});

    for (auto& [pair, line] : pending) {
        pair.question = std::string(trim(pair.question));
        pair.answer = std::string(trim(pair.answer));
        if (pair.question.empty() || pair.answer.empty()) {
            out.warnings.push_back({WarningKind::EmptyField, line, pair.question});
            continue;
        }
        auto q = extract_bbox_mentions(pair.question, options, &out.warnings, line);
        auto a = extract_bbox_mentions(pair.answer, options, &out.warnings, line);
        pair.bbox_mentions = std::move(q);
        pair.bbox_mentions.insert(pair.bbox_mentions.end(), a.begin(), a.end());
        out.pairs.push_back(std::move(pair));
    }
    return out;
}

}  // namespace isgr
