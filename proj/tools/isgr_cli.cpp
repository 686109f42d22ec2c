// isgr: scene-graph construction, query generation, scoring and review tooling.

#include "isgr/dataset.hpp"
#include "isgr/error.hpp"
#include "isgr/pipeline.hpp"
#include "isgr/query.hpp"
#include "isgr/review.hpp"
#include "isgr/reward.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace isgr;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::InvalidRequest, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::UnwritableOutput, "cannot write " + path.string());
    out << text;
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config config = path.empty() ? Config{} : Config::load(path);
    for (const auto& o : overrides) config.set_from_assignment(o);
    return config;
}

void emit(const nlohmann::json& j) { std::cout << j.dump() << "\n"; }

std::vector<std::string> read_candidates(const fs::path& path) {
    std::vector<std::string> out;
    for (const auto& line : split_lines(read_text(path))) {
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::InvalidRequest, "candidate lines must be JSON strings or {\"response\": ...}");
        }
        if (j.is_string()) {
            out.push_back(j.get<std::string>());
        } else if (j.is_object() && j.contains("response")) {
            out.push_back(j["response"].get<std::string>());
        } else {
            throw Error(ErrorCode::InvalidRequest, "candidate lines must be JSON strings or {\"response\": ...}");
        }
    }
    return out;
}

ReviewService* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interaction scene graph toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto add_config = [&](CLI::App* cmd, bool required) {
        auto* opt = cmd->add_option("--config", config_path, "Flat JSON config file");
        if (required) opt->required()->check(CLI::ExistingFile);
        cmd->add_option("--set", overrides, "Override a config key, key=value");
    };

    // build-graph
    auto* build_graph = app.add_subcommand("build-graph", "Run the staged pipeline on one image");
    std::string image_ref;
    std::optional<std::string> question;
    std::string trace_path;
    build_graph->add_option("--image", image_ref, "Image reference")->required();
    build_graph->add_option("--question", question, "Question text");
    build_graph->add_option("--trace", trace_path, "Write the pipeline trace JSON here");
    add_config(build_graph, true);

    // gen-queries
    auto* gen_queries = app.add_subcommand("gen-queries", "Generate the four instructions for a final graph");
    std::string graph_path;
    bool backend_phrasing = false;
    gen_queries->add_option("--graph", graph_path, "Serialized final graph")->required()->check(CLI::ExistingFile);
    gen_queries->add_flag("--backend-phrasing", backend_phrasing, "Ask the backend to phrase the QA pairs");
    add_config(gen_queries, false);

    // build-dataset
    auto* build_dataset_cmd = app.add_subcommand("build-dataset", "Build an instruction dataset from a manifest");
    std::string manifest_path;
    std::string out_path;
    std::optional<int> parallelism;
    build_dataset_cmd->add_option("--manifest", manifest_path, "Manifest JSONL")->required()->check(CLI::ExistingFile);
    build_dataset_cmd->add_option("--out", out_path, "Output dataset JSONL")->required();
    build_dataset_cmd->add_option("--parallelism", parallelism, "Rows processed concurrently")->check(CLI::PositiveNumber);
    add_config(build_dataset_cmd, true);

    // score
    auto* score = app.add_subcommand("score", "Score and rank candidate responses");
    std::string context_path;
    std::string candidates_path;
    std::string weights_text;
    score->add_option("--context", context_path, "Reward context JSON")->required()->check(CLI::ExistingFile);
    score->add_option("--candidates", candidates_path, "Candidate responses, JSON lines")->required()->check(CLI::ExistingFile);
    score->add_option("--weights", weights_text, "l1,l2,l3");
    add_config(score, false);

    // serve-review
    auto* serve = app.add_subcommand("serve-review", "Serve the review queue over HTTP");
    std::string dataset_path;
    std::string log_path;
    std::string images_dir;
    std::string bind_address = "127.0.0.1:8080";
    serve->add_option("--dataset", dataset_path, "Dataset JSONL")->required();
    serve->add_option("--log", log_path, "Decision log JSONL (appended)")->required();
    serve->add_option("--images", images_dir, "Image directory");
    serve->add_option("--bind", bind_address, "host:port, port 0 picks a free port");

    // stats
    auto* stats = app.add_subcommand("stats", "Counts and histograms for a dataset");
    stats->add_option("--dataset", dataset_path, "Dataset JSONL")->required();

    // apply-reviews
    auto* apply = app.add_subcommand("apply-reviews", "Merge a decision log into a dataset");
    std::string train_out;
    apply->add_option("--dataset", dataset_path, "Dataset JSONL")->required();
    apply->add_option("--log", log_path, "Decision log JSONL")->required();
    apply->add_option("--train-out", train_out, "Training emission path");

    // compose-variants
    auto* compose = app.add_subcommand("compose-variants", "Compose dataset variants from a recipe");
    std::string recipe_path;
    std::string out_dir;
    compose->add_option("--recipe", recipe_path, "Recipe JSON")->required()->check(CLI::ExistingFile);
    compose->add_option("--out", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, std::cerr, std::cerr);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*build_graph) {
            Pipeline pipeline = make_pipeline(load_config(config_path, overrides));
            try {
                auto result = pipeline.run(image_ref, question);
                if (!trace_path.empty()) write_text(trace_path, to_json(result.trace).dump(2) + "\n");
                std::cout << serialize(result.final_graph) << "\n";
            } catch (const PipelineFailure& f) {
                if (!trace_path.empty()) write_text(trace_path, to_json(f.trace()).dump(2) + "\n");
                throw;
            }
        } else if (*gen_queries) {
            SceneGraph g = deserialize(read_text(graph_path));
            InstructionSet set;
            if (backend_phrasing) {
                Pipeline pipeline = make_pipeline(load_config(config_path, overrides));
                set = generate_instructions_with_backend(g, *pipeline.backend(), pipeline.templates(), pipeline.params());
            } else {
                set = generate_instructions(g);
            }
            for (const auto& note : set.notes) std::cerr << "note: " << note << "\n";
            for (const auto& ins : set.instructions) emit(to_json(ins));
        } else if (*build_dataset_cmd) {
            Config config = load_config(config_path, overrides);
            BuildOptions options;
            options.parallelism = parallelism.value_or(static_cast<int>(config.get_int("dataset.parallelism", 1)));
            options.backend_phrasing = config.get_bool("dataset.backend_phrasing", false);
            Pipeline pipeline = make_pipeline(config);
            auto rows = load_manifest(manifest_path);
            auto result = build_dataset(rows, pipeline, out_path, options);
            if (result.rows_failed) {
                std::cerr << result.rows_failed << " row(s) failed; see " << errors_path_for(out_path).string() << "\n";
            }
            emit(result.to_json());
        } else if (*score) {
            Config config = load_config(config_path, overrides);
            RewardWeights weights = weights_text.empty() ? RewardWeights::from_config(config)
                                                         : RewardWeights::parse(weights_text);
            const double bonus = config.get_double("reward.answer_match_bonus", 0.0);
            auto ctx = RewardContext::from_json(nlohmann::json::parse(read_text(context_path)));
            auto candidates = read_candidates(candidates_path);
            auto ranked = rank_group(candidates, ctx, weights, bonus);
            emit({{"weights", {{"lambda_focus", weights.focus}, {"lambda_disamb", weights.disamb},
                               {"lambda_rele", weights.rele}}},
                  {"candidates", candidates.size()}});
            for (const auto& c : ranked) emit(to_json(c));
        } else if (*serve) {
            ReviewServiceOptions options{dataset_path, log_path, std::nullopt};
            if (!images_dir.empty()) options.images_dir = images_dir;
            ReviewService service(options);
            auto [host, port] = parse_bind_address(bind_address);
            int bound = service.bind(host, port);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            emit({{"listening", "http://" + host + ":" + std::to_string(bound)}});
            std::cout.flush();
            std::cerr << "serving review queue on " << host << ":" << bound << "\n";
            service.serve();
            g_service = nullptr;
        } else if (*stats) {
            emit(compute_stats(read_records(dataset_path)).to_json());
        } else if (*apply) {
            std::optional<fs::path> train;
            if (!train_out.empty()) train = train_out;
            emit(apply_reviews(dataset_path, log_path, train).to_json());
        } else if (*compose) {
            const fs::path recipe_file(recipe_path);
            auto recipe = nlohmann::json::parse(read_text(recipe_file));
            auto reports = compose_variants(recipe, recipe_file.parent_path(), out_dir);
            for (const auto& r : reports) {
                for (const auto& w : r.warnings) std::cerr << "warning: " << r.name << ": " << w << "\n";
                emit(to_json(r));
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: invalid JSON: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
