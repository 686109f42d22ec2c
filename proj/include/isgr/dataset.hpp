#pragma once

#include "isgr/graph.hpp"
#include "isgr/pipeline.hpp"
#include "isgr/query.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace isgr {

struct ManifestRow {
    std::string image_ref;
    std::optional<std::string> question;
    std::optional<SceneGraph> spatial_graph;
    std::string source_tag;
};

/// JSON lines {image_ref, question?, spatial_graph?, source_tag}. Blank lines are skipped.
std::vector<ManifestRow> parse_manifest(std::string_view text);
std::vector<ManifestRow> load_manifest(const std::filesystem::path& path);

enum class ReviewStatus { Unreviewed, Accepted, Rejected, Edited };

std::string_view to_string(ReviewStatus s);
ReviewStatus review_status_from_string(std::string_view s);

struct InstructionRecord {
    std::string record_id;
    std::string image_ref;
    std::string question;
    std::string answer;
    QueryKind kind = QueryKind::ObjectObject;
    nlohmann::json final_graph;
    nlohmann::json evidence = nlohmann::json::array();
    std::string source_tag;
    ReviewStatus review_status = ReviewStatus::Unreviewed;
    /// Generated answer, kept once a reviewer edit replaces `answer`.
    std::optional<std::string> original_answer;
    std::optional<nlohmann::json> original_evidence;

    nlohmann::json to_json() const;
    static InstructionRecord from_json(const nlohmann::json& j);
};

std::string record_id_for(std::string_view image_ref, std::string_view question, std::string_view answer);

/// One JSON object per line, sorted keys.
std::string to_jsonl_line(const nlohmann::json& j);

std::vector<InstructionRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<InstructionRecord>& records);

struct DatasetStats {
    std::size_t rows_processed = 0;
    std::size_t rows_failed = 0;
    std::size_t instructions_generated = 0;
    std::size_t duplicates = 0;
    std::size_t records = 0;
    std::size_t training_records = 0;
    std::map<std::string, std::size_t> kinds;
    std::map<std::string, std::size_t> predicates;
    std::map<std::string, std::size_t> statuses;
    std::map<std::string, std::size_t> sources;

    nlohmann::json to_json() const;
};

DatasetStats compute_stats(const std::vector<InstructionRecord>& records);

struct BuildOptions {
    int parallelism = 1;
    bool backend_phrasing = false;
};

/// Runs the pipeline per manifest row and writes records to `out`. Failed rows
/// go to `<out>.errors.jsonl`; the corpus build carries on.
DatasetStats build_dataset(const std::vector<ManifestRow>& manifest, const Pipeline& pipeline,
                           const std::filesystem::path& out, const BuildOptions& options = {});

std::filesystem::path errors_path_for(const std::filesystem::path& out);
std::filesystem::path training_path_for(const std::filesystem::path& dataset);

// ---------------------------------------------------------------------------
// Review decisions

enum class Decision { Accept, Reject, Edit };

std::string_view to_string(Decision d);
Decision decision_from_string(std::string_view s);

struct DecisionEntry {
    std::string record_id;
    Decision decision = Decision::Accept;
    std::optional<std::string> edited_answer;
    std::optional<nlohmann::json> edited_evidence;
    std::string reviewer;
    std::string timestamp;

    nlohmann::json to_json() const;
    static DecisionEntry from_json(const nlohmann::json& j);
};

/// Reads an append-only decision log. A final line cut short by a crash is ignored.
std::vector<DecisionEntry> read_decision_log(const std::filesystem::path& path);

/// Applies `decision` to `record`, restoring the generated answer first so the
/// result depends only on the last decision.
void apply_decision(InstructionRecord& record, const std::optional<DecisionEntry>& decision);

/// Rewrites the dataset with review statuses from the log (last write wins) and
/// emits the training file without rejected records.
DatasetStats apply_reviews(const std::filesystem::path& dataset, const std::filesystem::path& decision_log,
                           std::optional<std::filesystem::path> training_out = std::nullopt);

// ---------------------------------------------------------------------------
// Variant composition

struct VariantReport {
    std::string name;
    std::filesystem::path path;
    std::size_t rows = 0;
    std::map<std::string, std::size_t> per_source;
    std::vector<std::string> warnings;
};

/// `recipe`: {"sources": {name: path}, "interaction_set": path?,
///            "variants": [{"name", "base": [names], "interaction": bool}]}.
/// Relative paths resolve against `base_dir`. One JSONL file per variant in `out_dir`.
std::vector<VariantReport> compose_variants(const nlohmann::json& recipe, const std::filesystem::path& base_dir,
                                            const std::filesystem::path& out_dir);

nlohmann::json to_json(const VariantReport& r);

}  // namespace isgr
