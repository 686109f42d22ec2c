#include "isgr/backend.hpp"
#include "isgr/error.hpp"
#include "isgr/parser.hpp"
#include "isgr/pipeline.hpp"
#include "isgr/query.hpp"
#include "isgr/reward.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace isgr;

namespace {

py::dict breakdown_dict(const RewardBreakdown& b) {
    py::dict d;
    d["focus"] = b.focus;
    d["disamb"] = b.disamb;
    d["rele"] = b.rele;
    d["total"] = b.total;
    return d;
}

RewardWeights weights_from(const std::optional<std::tuple<double, double, double>>& w) {
    if (!w) return {};
    RewardWeights out{std::get<0>(*w), std::get<1>(*w), std::get<2>(*w)};
    out.validate();
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Scene-graph pipeline, query generation and reward scoring";

    py::register_exception<Error>(m, "IsgrError");

    m.def("default_generation_params", [] {
        GenerationParams p;
        py::dict d;
        d["temperature"] = p.temperature;
        d["top_p"] = p.top_p;
        d["max_output_tokens"] = p.max_output_tokens;
        d["num_candidates"] = p.num_candidates;
        return d;
    });

    m.def("default_reward_weights", [] {
        RewardWeights w;
        return std::make_tuple(w.focus, w.disamb, w.rele);
    });

    m.def(
        "parse_triples",
        [](const std::string& text) {
            std::vector<std::tuple<std::string, std::string, std::string>> out;
            for (const auto& t : parse_triples(text).triples) out.emplace_back(t.subject, t.predicate, t.object);
            return out;
        },
        py::arg("text"));

    m.def(
        "build_graph",
        [](const std::string& scenes, const std::string& image_ref, std::optional<std::string> question,
           long long seed, std::vector<std::vector<std::string>> exclusive) {
            PipelineConfig cfg;
            for (const auto& set : exclusive) cfg.exclusive_predicate_sets.emplace_back(set.begin(), set.end());
            auto backend = std::make_shared<MockBackend>(SceneLibrary::load(scenes), seed);
            Pipeline pipeline(backend, cfg);
            return serialize(pipeline.run(image_ref, question).final_graph);
        },
        py::arg("scenes"), py::arg("image_ref"), py::arg("question") = std::nullopt, py::arg("seed") = 0,
        py::arg("exclusive_predicates") = std::vector<std::vector<std::string>>{},
        "Runs the pipeline against the mock backend and returns the serialized final graph.");

    m.def(
        "generate_instructions",
        [](const std::string& graph_json) {
            auto set = generate_instructions(deserialize(graph_json));
            py::list out;
            for (const auto& ins : set.instructions) out.append(py::str(to_json(ins).dump()));
            return out;
        },
        py::arg("graph_json"), "Instructions as JSON strings.");

    m.def(
        "reward",
        [](const std::string& response, const std::string& graph_json, const std::string& question,
           std::optional<std::tuple<double, double, double>> weights) {
            auto ctx = RewardContext::make(deserialize(graph_json), question);
            return breakdown_dict(reward(response, ctx, weights_from(weights)));
        },
        py::arg("response"), py::arg("graph_json"), py::arg("question"), py::arg("weights") = std::nullopt);

    m.def(
        "rank_group",
        [](const std::vector<std::string>& responses, const std::string& graph_json, const std::string& question,
           std::optional<std::tuple<double, double, double>> weights) {
            auto ctx = RewardContext::make(deserialize(graph_json), question);
            py::list out;
            for (const auto& c : rank_group(responses, ctx, weights_from(weights))) {
                py::dict d = breakdown_dict(c.breakdown);
                d["index"] = c.index;
                d["advantage"] = c.advantage;
                d["rank"] = c.rank;
                out.append(d);
            }
            return out;
        },
        py::arg("responses"), py::arg("graph_json"), py::arg("question"), py::arg("weights") = std::nullopt);
}
