#pragma once

#include "isgr/config.hpp"
#include "isgr/graph.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace isgr {

struct RewardWeights {
    double focus = 0.4;
    double disamb = 0.4;
    double rele = 0.2;

    void validate() const;
    RewardWeights scaled(double factor) const { return {focus * factor, disamb * factor, rele * factor}; }

    /// Parses "l1,l2,l3".
    static RewardWeights parse(std::string_view text);
    static RewardWeights from_config(const Config& config);
};

struct RewardContext {
    std::string question;
    SceneGraph graph;
    std::set<EntityId> question_entities;
    std::optional<std::string> reference_answer;

    /// Question entities are the graph entities named in `question`.
    static RewardContext make(SceneGraph graph, std::string question,
                              std::optional<std::string> reference_answer = std::nullopt);
    /// {"question", "graph", "reference_answer"?}; `graph` is a serialized scene graph object.
    static RewardContext from_json(const nlohmann::json& j);
};

struct RewardBreakdown {
    double focus = 0;
    double disamb = 0;
    double rele = 0;
    double total = 0;
    double bonus = 0;
};

double f_focus(std::string_view response, const RewardContext& ctx);
double f_disamb(std::string_view response, const RewardContext& ctx);
double f_rele(std::string_view response, const RewardContext& ctx);

/// total = w.focus*focus + w.disamb*disamb - w.rele*rele, plus `answer_match_bonus`
/// when the response equals the reference answer after normalization.
RewardBreakdown reward(std::string_view response, const RewardContext& ctx, const RewardWeights& weights = {},
                       double answer_match_bonus = 0.0);

struct RankedCandidate {
    std::size_t index = 0;
    RewardBreakdown breakdown;
    double advantage = 0;
    int rank = 0;
};

/// Scores every response; advantage = (total - mean) / (std + 1e-8) with the
/// population standard deviation. Sorted by total descending, then index.
std::vector<RankedCandidate> rank_group(const std::vector<std::string>& responses, const RewardContext& ctx,
                                        const RewardWeights& weights = {}, double answer_match_bonus = 0.0);

nlohmann::json to_json(const RankedCandidate& c);

}  // namespace isgr
