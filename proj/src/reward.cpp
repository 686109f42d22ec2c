#include "isgr/reward.hpp"

#include "isgr/error.hpp"
#include "isgr/parser.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace isgr {

void RewardWeights::validate() const {
    for (double w : {focus, disamb, rele}) {
        if (!std::isfinite(w) || w < 0) throw Error(ErrorCode::InvalidConfig, "reward weights must be non-negative");
    }
}

RewardWeights RewardWeights::parse(std::string_view text) {
    std::vector<double> values;
    std::stringstream ss{std::string(text)};
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            std::string t(trim(part));
            values.push_back(std::stod(t, &used));
            if (used != t.size()) throw std::invalid_argument(t);
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidConfig, "bad weight '" + part + "'");
        }
    }
    if (values.size() != 3) throw Error(ErrorCode::InvalidConfig, "expected three comma-separated weights");
    RewardWeights w{values[0], values[1], values[2]};
    w.validate();
    return w;
}

RewardWeights RewardWeights::from_config(const Config& config) {
    RewardWeights w;
    w.focus = config.get_double("reward.lambda_focus", w.focus);
    w.disamb = config.get_double("reward.lambda_disamb", w.disamb);
    w.rele = config.get_double("reward.lambda_rele", w.rele);
    w.validate();
    return w;
}

RewardContext RewardContext::make(SceneGraph graph, std::string question, std::optional<std::string> reference_answer) {
    RewardContext ctx;
    ctx.question_entities = graph.entities_matching(question);
    ctx.graph = std::move(graph);
    ctx.question = std::move(question);
    ctx.reference_answer = std::move(reference_answer);
    return ctx;
}

RewardContext RewardContext::from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("graph") || !j.contains("question")) {
        throw Error(ErrorCode::InvalidRequest, "reward context needs 'question' and 'graph'");
    }
    std::optional<std::string> ref;
    if (j.contains("reference_answer") && !j["reference_answer"].is_null()) ref = j["reference_answer"].get<std::string>();
    return make(graph_from_json(j["graph"]), j["question"].get<std::string>(), std::move(ref));
}

namespace {

struct ResponseMention {
    bool is_entity = false;
    std::vector<EntityId> candidates;  // entity mentions
    std::string predicate;             // predicate mentions
};

constexpr std::size_t kPredicateBase = std::size_t{1} << 40;

std::vector<ResponseMention> mentions(std::string_view response, const SceneGraph& g) {
    PhraseMatcher matcher;
    std::vector<EntityId> ids;
    for (const auto& [id, e] : g.entities()) {
        ids.push_back(id);
        matcher.add(e.display_name(), ids.size() - 1);
        matcher.add(e.label, ids.size() - 1);
    }
    std::vector<std::string> predicates;
    for (const auto& e : g.edges()) {
        if (std::find(predicates.begin(), predicates.end(), e.predicate) == predicates.end()) {
            predicates.push_back(e.predicate);
            matcher.add(e.predicate, kPredicateBase + predicates.size() - 1);
        }
    }
    std::vector<ResponseMention> out;
    for (const auto& m : matcher.scan(strip_bbox_spans(response))) {
        ResponseMention rm;
        for (auto p : m.payloads) {
            if (p < kPredicateBase) rm.candidates.push_back(ids[p]);
        }
        if (!rm.candidates.empty()) {
            rm.is_entity = true;
            std::sort(rm.candidates.begin(), rm.candidates.end());
        } else {
            rm.predicate = predicates[m.payloads.front() - kPredicateBase];
        }
        out.push_back(std::move(rm));
    }
    return out;
}

}  // namespace

double f_focus(std::string_view response, const RewardContext& ctx) {
    if (ctx.question_entities.empty()) return 1.0;
    std::set<EntityId> named;
    for (const auto& m : mentions(response, ctx.graph)) {
        if (m.is_entity) named.insert(m.candidates.begin(), m.candidates.end());
    }
    std::size_t hit = 0;
    for (auto id : ctx.question_entities) hit += named.count(id);
    return static_cast<double>(hit) / static_cast<double>(ctx.question_entities.size());
}

double f_disamb(std::string_view response, const RewardContext& ctx) {
    std::size_t total = 0;
    std::size_t clear = 0;
    for (const auto& m : mentions(response, ctx.graph)) {
        if (!m.is_entity) continue;
        ++total;
        if (m.candidates.size() == 1) ++clear;
    }
    return total == 0 ? 0.0 : static_cast<double>(clear) / static_cast<double>(total);
}

double f_rele(std::string_view response, const RewardContext& ctx) {
    auto found = mentions(response, ctx.graph);
    if (found.empty() || ctx.question_entities.empty()) return 0.0;
    const auto component = ctx.graph.connected_component(ctx.question_entities);
    std::set<std::string> component_predicates;
    for (const auto& e : ctx.graph.edges()) {
        if (component.count(e.subject) && component.count(e.object)) component_predicates.insert(e.predicate);
    }
    std::size_t off = 0;
    for (const auto& m : found) {
        bool inside = m.is_entity ? std::any_of(m.candidates.begin(), m.candidates.end(),
                                                [&](EntityId id) { return component.count(id) != 0; })
                                  : component_predicates.count(m.predicate) != 0;
        if (!inside) ++off;
    }
    return static_cast<double>(off) / static_cast<double>(found.size());
}

namespace {

std::string answer_form(std::string_view text) {
    std::string s = normalize_phrase(strip_bbox_spans(text));
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == ' ')) s.pop_back();
    return s;
}

}  // namespace

RewardBreakdown reward(std::string_view response, const RewardContext& ctx, const RewardWeights& weights,
                       double answer_match_bonus) {
    weights.validate();
    RewardBreakdown b;
    b.focus = f_focus(response, ctx);
    b.disamb = f_disamb(response, ctx);
    b.rele = f_rele(response, ctx);
    b.total = weights.focus * b.focus + weights.disamb * b.disamb - weights.rele * b.rele;
    if (answer_match_bonus != 0.0 && ctx.reference_answer &&
        answer_form(response) == answer_form(*ctx.reference_answer)) {
        b.bonus = answer_match_bonus;
        b.total += b.bonus;
    }
    return b;
}

std::vector<RankedCandidate> rank_group(const std::vector<std::string>& responses, const RewardContext& ctx,
                                        const RewardWeights& weights, double answer_match_bonus) {
    if (responses.empty()) throw Error(ErrorCode::InvalidRequest, "rank_group needs at least one candidate");
    std::vector<RankedCandidate> out;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        out.push_back({i, reward(responses[i], ctx, weights, answer_match_bonus), 0.0, 0});
    }
    const double n = static_cast<double>(out.size());
    double mean = 0;
    for (const auto& c : out) mean += c.breakdown.total;
    mean /= n;
    double var = 0;
    for (const auto& c : out) var += (c.breakdown.total - mean) * (c.breakdown.total - mean);
    const double sd = std::sqrt(var / n);
    const bool uniform = std::all_of(out.begin(), out.end(), [&](const RankedCandidate& c) {
        return c.breakdown.total == out.front().breakdown.total;
    });
    if (!uniform) {
        for (auto& c : out) c.advantage = (c.breakdown.total - mean) / (sd + 1e-8);
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
        if (a.breakdown.total != b.breakdown.total) return a.breakdown.total > b.breakdown.total;
        return a.index < b.index;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
    return out;
}

nlohmann::json to_json(const RankedCandidate& c) {
    return {{"index", c.index},       {"focus", c.breakdown.focus}, {"disamb", c.breakdown.disamb},
            {"rele", c.breakdown.rele}, {"total", c.breakdown.total}, {"advantage", c.advantage},
            {"rank", c.rank}};
}

}  // namespace isgr
