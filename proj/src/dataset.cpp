#include "isgr/dataset.hpp"

#include "isgr/error.hpp"
#include "isgr/hash.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

namespace isgr {

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path, ErrorCode code) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(code, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
}

void write_atomically(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::UnwritableOutput, "cannot write " + path.string());
        out << content;
        if (!out) throw Error(ErrorCode::UnwritableOutput, "short write to " + path.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::UnwritableOutput, "cannot replace " + path.string() + ": " + ec.message());
}

}  // namespace

std::vector<ManifestRow> parse_manifest(std::string_view text) {
    std::vector<ManifestRow> rows;
    std::set<std::string> seen;
    int line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = "manifest line " + std::to_string(line_no);
        ManifestRow row;
        try {
            auto j = nlohmann::json::parse(line);
            if (!j.is_object()) throw Error(ErrorCode::ManifestParse, where + ": not an object");
            row.image_ref = j.at("image_ref").get<std::string>();
            row.question = opt_string(j, "question");
            row.source_tag = j.value("source_tag", std::string{});
            if (j.contains("spatial_graph") && !j["spatial_graph"].is_null()) {
                row.spatial_graph = graph_from_json(j["spatial_graph"]);
            }
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::ManifestParse, where + ": " + ex.what());
        } catch (const Error& ex) {
            if (ex.code() == ErrorCode::ManifestParse) throw;
            throw Error(ErrorCode::ManifestParse, where + ": " + ex.what());
        }
        if (row.image_ref.empty()) throw Error(ErrorCode::ManifestParse, where + ": empty image_ref");
        if (trim(row.source_tag).empty()) throw Error(ErrorCode::ManifestParse, where + ": missing source_tag");
        if (!seen.insert(row.image_ref).second) {
            throw Error(ErrorCode::ManifestParse, where + ": duplicate image_ref '" + row.image_ref + "'");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ManifestRow> load_manifest(const fs::path& path) {
    return parse_manifest(slurp(path, ErrorCode::ManifestParse));
}

std::string_view to_string(ReviewStatus s) {
    switch (s) {
        case ReviewStatus::Unreviewed: return "unreviewed";
        case ReviewStatus::Accepted: return "accepted";
        case ReviewStatus::Rejected: return "rejected";
        case ReviewStatus::Edited: return "edited";
    }
    return "unreviewed";
}

ReviewStatus review_status_from_string(std::string_view s) {
    for (auto v : {ReviewStatus::Unreviewed, ReviewStatus::Accepted, ReviewStatus::Rejected, ReviewStatus::Edited}) {
        if (to_string(v) == s) return v;
    }
    throw Error(ErrorCode::DatasetUnreadable, "unknown review status '" + std::string(s) + "'");
}

nlohmann::json InstructionRecord::to_json() const {
    nlohmann::json j = {{"record_id", record_id},
                        {"image_ref", image_ref},
                        {"question", question},
                        {"answer", answer},
                        {"kind", isgr::to_string(kind)},
                        {"final_graph", final_graph},
                        {"evidence", evidence},
                        {"source_tag", source_tag},
                        {"review_status", isgr::to_string(review_status)}};
    if (original_answer) j["original_answer"] = *original_answer;
    if (original_evidence) j["original_evidence"] = *original_evidence;
    return j;
}

InstructionRecord InstructionRecord::from_json(const nlohmann::json& j) {
    InstructionRecord r;
    try {
        r.record_id = j.at("record_id").get<std::string>();
        r.image_ref = j.at("image_ref").get<std::string>();
        r.question = j.at("question").get<std::string>();
        r.answer = j.at("answer").get<std::string>();
        r.kind = query_kind_from_string(j.at("kind").get<std::string>());
        r.final_graph = j.at("final_graph");
        r.evidence = j.value("evidence", nlohmann::json::array());
        r.source_tag = j.value("source_tag", std::string{});
        r.review_status = review_status_from_string(j.value("review_status", std::string("unreviewed")));
        r.original_answer = opt_string(j, "original_answer");
        if (j.contains("original_evidence") && !j["original_evidence"].is_null()) r.original_evidence = j["original_evidence"];
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::DatasetUnreadable, std::string("bad record: ") + ex.what());
    } catch (const Error& ex) {
        throw Error(ErrorCode::DatasetUnreadable, ex.what());
    }
    return r;
}

std::string record_id_for(std::string_view image_ref, std::string_view question, std::string_view answer) {
    return stable_key({image_ref, question, answer});
}

std::string to_jsonl_line(const nlohmann::json& j) { return j.dump() + "\n"; }

std::vector<InstructionRecord> read_records(const fs::path& path) {
    std::vector<InstructionRecord> out;
    const std::string text = slurp(path, ErrorCode::DatasetUnreadable);
    int line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(InstructionRecord::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::DatasetUnreadable, path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return out;
}

void write_records(const fs::path& path, const std::vector<InstructionRecord>& records) {
    std::string content;
    for (const auto& r : records) content += to_jsonl_line(r.to_json());
    write_atomically(path, content);
}

nlohmann::json DatasetStats::to_json() const {
    return {{"rows_processed", rows_processed},
            {"rows_failed", rows_failed},
            {"instructions_generated", instructions_generated},
            {"duplicates", duplicates},
            {"records", records},
            {"training_records", training_records},
            {"kinds", kinds},
            {"predicates", predicates},
            {"statuses", statuses},
            {"sources", sources}};
}

DatasetStats compute_stats(const std::vector<InstructionRecord>& records) {
    DatasetStats s;
    s.records = records.size();
    for (auto k : kAllQueryKinds) s.kinds[std::string(to_string(k))] = 0;
    for (auto st : {ReviewStatus::Unreviewed, ReviewStatus::Accepted, ReviewStatus::Rejected, ReviewStatus::Edited}) {
        s.statuses[std::string(to_string(st))] = 0;
    }
    for (const auto& r : records) {
        ++s.kinds[std::string(to_string(r.kind))];
        ++s.statuses[std::string(to_string(r.review_status))];
        ++s.sources[r.source_tag];
        for (const auto& e : r.evidence) {
            if (e.contains("predicate")) ++s.predicates[e["predicate"].get<std::string>()];
        }
        if (r.review_status != ReviewStatus::Rejected) ++s.training_records;
    }
    return s;
}

fs::path errors_path_for(const fs::path& out) {
    return out.parent_path() / (out.stem().string() + ".errors.jsonl");
}

fs::path training_path_for(const fs::path& dataset) {
    return dataset.parent_path() / (dataset.stem().string() + ".train.jsonl");
}

// ---------------------------------------------------------------------------

namespace {

struct RowResult {
    std::vector<InstructionRecord> records;
    std::optional<nlohmann::json> error;
};

RowResult process_row(const ManifestRow& row, const Pipeline& pipeline, const BuildOptions& options) {
    RowResult result;
    auto fail = [&](std::string_view code, const std::string& detail, const nlohmann::json& trace) {
        result.error = nlohmann::json{{"image_ref", row.image_ref}, {"source_tag", row.source_tag},
                                      {"error", code},          {"detail", detail},
                                      {"trace", trace}};
    };
    try {
        PipelineResult run;
        if (row.spatial_graph) {
            SceneGraph spatial = *row.spatial_graph;
            if (row.question) spatial.set_question(row.question);
            run = pipeline.run_from_spatial(spatial);
        } else {
            run = pipeline.run(row.image_ref, row.question);
        }
        InstructionSet set = options.backend_phrasing
                                 ? generate_instructions_with_backend(run.final_graph, *pipeline.backend(),
                                                                      pipeline.templates(), pipeline.params())
                                 : generate_instructions(run.final_graph);
        const auto graph_json = to_json(run.final_graph);
        for (const auto& ins : set.instructions) {
            InstructionRecord r;
            r.image_ref = row.image_ref;
            r.question = ins.question;
            r.answer = ins.answer;
            r.record_id = record_id_for(r.image_ref, r.question, r.answer);
            r.kind = ins.kind;
            r.final_graph = graph_json;
            for (const auto& e : ins.evidence) r.evidence.push_back(to_json(e));
            r.source_tag = row.source_tag;
            result.records.push_back(std::move(r));
        }
    } catch (const PipelineFailure& ex) {
        fail(to_string(ex.code()), ex.detail(), to_json(ex.trace()));
    } catch (const Error& ex) {
        fail(to_string(ex.code()), ex.detail(), nullptr);
    } catch (const std::exception& ex) {
        fail("Internal", ex.what(), nullptr);
    }
    return result;
}

}  // namespace

DatasetStats build_dataset(const std::vector<ManifestRow>& manifest, const Pipeline& pipeline, const fs::path& out,
                           const BuildOptions& options) {
    if (options.parallelism < 1) throw Error(ErrorCode::InvalidConfig, "parallelism must be >= 1");
    {
        std::ofstream probe(out, std::ios::binary | std::ios::trunc);
        if (!probe) throw Error(ErrorCode::UnwritableOutput, "cannot write " + out.string());
    }

    std::vector<RowResult> results(manifest.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < manifest.size(); i = next++) {
            results[i] = process_row(manifest[i], pipeline, options);
        }
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(options.parallelism), manifest.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }

    DatasetStats stats;
    std::vector<InstructionRecord> records;
    std::set<std::string> seen;
    std::string errors;
    for (auto& r : results) {
        ++stats.rows_processed;
        if (r.error) {
            ++stats.rows_failed;
            errors += to_jsonl_line(*r.error);
            continue;
        }
        for (auto& rec : r.records) {
            ++stats.instructions_generated;
            if (!seen.insert(rec.record_id).second) {
                ++stats.duplicates;
                continue;
            }
            records.push_back(std::move(rec));
        }
    }
    write_records(out, records);
    if (errors.empty()) {
        std::error_code ec;
        fs::remove(errors_path_for(out), ec);
    } else {
        write_atomically(errors_path_for(out), errors);
    }

    DatasetStats counted = compute_stats(records);
    counted.rows_processed = stats.rows_processed;
    counted.rows_failed = stats.rows_failed;
    counted.instructions_generated = stats.instructions_generated;
    counted.duplicates = stats.duplicates;
    return counted;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Decision d) {
    switch (d) {
        case Decision::Accept: return "accept";
        case Decision::Reject: return "reject";
        case Decision::Edit: return "edit";
    }
    return "accept";
}

Decision decision_from_string(std::string_view s) {
    for (auto d : {Decision::Accept, Decision::Reject, Decision::Edit}) {
        if (to_string(d) == s) return d;
    }
    throw Error(ErrorCode::InvalidRequest, "decision must be accept, reject or edit");
}

nlohmann::json DecisionEntry::to_json() const {
    nlohmann::json j = {{"record_id", record_id},
                        {"decision", isgr::to_string(decision)},
                        {"reviewer", reviewer},
                        {"timestamp", timestamp}};
    if (edited_answer) j["edited_answer"] = *edited_answer;
    if (edited_evidence) j["edited_evidence"] = *edited_evidence;
    return j;
}

DecisionEntry DecisionEntry::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidRequest, "decision must be a JSON object");
    DecisionEntry d;
    try {
        d.record_id = j.value("record_id", std::string{});
        d.decision = decision_from_string(j.at("decision").get<std::string>());
        d.edited_answer = opt_string(j, "edited_answer");
        if (j.contains("edited_evidence") && !j["edited_evidence"].is_null()) {
            if (!j["edited_evidence"].is_array()) throw Error(ErrorCode::InvalidRequest, "edited_evidence must be a list");
            d.edited_evidence = j["edited_evidence"];
        }
        d.reviewer = j.value("reviewer", std::string{});
        d.timestamp = j.value("timestamp", std::string{});
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::InvalidRequest, ex.what());
    }
    if (d.decision == Decision::Edit && (!d.edited_answer || trim(*d.edited_answer).empty())) {
        throw Error(ErrorCode::InvalidRequest, "edit decisions need a non-empty edited_answer");
    }
    return d;
}

std::vector<DecisionEntry> read_decision_log(const fs::path& path) {
    std::vector<DecisionEntry> out;
    if (!fs::exists(path)) return out;
    const std::string text = slurp(path, ErrorCode::DecisionLogParse);
    const auto lines = split_lines(text);
    const bool ends_clean = text.empty() || text.back() == '\n';
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            auto entry = DecisionEntry::from_json(nlohmann::json::parse(lines[i]));
            if (entry.record_id.empty()) throw Error(ErrorCode::InvalidRequest, "missing record_id");
            out.push_back(std::move(entry));
        } catch (const std::exception& ex) {
            if (i + 1 == lines.size() && !ends_clean) {
                std::cerr << "warning: ignoring truncated last line of " << path.string() << "\n";
                break;
            }
            throw Error(ErrorCode::DecisionLogParse, path.string() + ":" + std::to_string(i + 1) + ": " + ex.what());
        }
    }
    return out;
}

void apply_decision(InstructionRecord& record, const std::optional<DecisionEntry>& decision) {
    if (record.original_answer) {
        record.answer = *record.original_answer;
        record.original_answer.reset();
    }
    if (record.original_evidence) {
        record.evidence = *record.original_evidence;
        record.original_evidence.reset();
    }
    if (!decision) {
        record.review_status = ReviewStatus::Unreviewed;
        return;
    }
    switch (decision->decision) {
        case Decision::Accept: record.review_status = ReviewStatus::Accepted; break;
        case Decision::Reject: record.review_status = ReviewStatus::Rejected; break;
        case Decision::Edit:
            record.review_status = ReviewStatus::Edited;
            record.original_answer = record.answer;
            record.answer = *decision->edited_answer;
            if (decision->edited_evidence) {
                record.original_evidence = record.evidence;
                record.evidence = *decision->edited_evidence;
            }
            break;
    }
}

DatasetStats apply_reviews(const fs::path& dataset, const fs::path& decision_log, std::optional<fs::path> training_out) {
    auto records = read_records(dataset);
    const auto log = read_decision_log(decision_log);

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < records.size(); ++i) index[records[i].record_id] = i;
    std::map<std::string, DecisionEntry> last;
    for (const auto& d : log) {
        if (!index.count(d.record_id)) throw Error(ErrorCode::UnknownRecordId, d.record_id);
        last.insert_or_assign(d.record_id, d);
    }
    for (auto& r : records) {
        auto it = last.find(r.record_id);
        apply_decision(r, it == last.end() ? std::nullopt : std::optional<DecisionEntry>(it->second));
    }
    write_records(dataset, records);

    std::vector<InstructionRecord> training;
    for (const auto& r : records) {
        if (r.review_status != ReviewStatus::Rejected) training.push_back(r);
    }
    write_records(training_out.value_or(training_path_for(dataset)), training);
    return compute_stats(records);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<nlohmann::json> read_rows(const fs::path& path) {
    std::vector<nlohmann::json> rows;
    int line_no = 0;
    for (const auto& line : split_lines(slurp(path, ErrorCode::UnknownSource))) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::ManifestParse, path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
        }
    }
    return rows;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

std::vector<VariantReport> compose_variants(const nlohmann::json& recipe, const fs::path& base_dir,
                                            const fs::path& out_dir) {
    if (!recipe.is_object() || !recipe.contains("variants") || !recipe["variants"].is_array()) {
        throw Error(ErrorCode::InvalidConfig, "recipe needs a 'variants' list");
    }
    std::map<std::string, fs::path> sources;
    const nlohmann::json source_map = recipe.value("sources", nlohmann::json::object());
    for (const auto& [name, path] : source_map.items()) {
        sources[name] = resolve(base_dir, path.get<std::string>());
    }
    std::optional<fs::path> interaction_path;
    if (recipe.contains("interaction_set") && !recipe["interaction_set"].is_null()) {
        interaction_path = resolve(base_dir, recipe["interaction_set"].get<std::string>());
    }

    std::map<std::string, std::vector<nlohmann::json>> cache;
    auto rows_of = [&](const std::string& name) -> const std::vector<nlohmann::json>& {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        auto src = sources.find(name);
        if (src == sources.end()) throw Error(ErrorCode::UnknownSource, name);
        if (!fs::exists(src->second)) throw Error(ErrorCode::UnknownSource, name + " (" + src->second.string() + ")");
        return cache[name] = read_rows(src->second);
    };

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::vector<VariantReport> reports;
    for (const auto& v : recipe["variants"]) {
        VariantReport rep;
        rep.name = v.at("name").get<std::string>();
        rep.path = out_dir / (rep.name + ".jsonl");
        std::string content;
        auto emit = [&](const std::string& source, nlohmann::json row) {
            if (row.is_object() && !row.contains("source_tag")) row["source_tag"] = source;
            content += to_jsonl_line(row);
            ++rep.rows;
            ++rep.per_source[source];
        };
        const nlohmann::json bases = v.value("base", nlohmann::json::array());
        for (const auto& b : bases) {
            const std::string name = b.get<std::string>();
            rep.per_source[name] += 0;
            for (const auto& row : rows_of(name)) emit(name, row);
        }
        if (v.value("interaction", false)) {
            rep.per_source["interaction"] += 0;
            std::size_t added = 0;
            if (interaction_path) {
                if (!fs::exists(*interaction_path)) throw Error(ErrorCode::UnknownSource, "interaction set " + interaction_path->string());
                for (const auto& row : read_rows(*interaction_path)) {
                    if (row.is_object() && row.value("review_status", std::string{}) == "rejected") continue;
                    emit("interaction", row);
                    ++added;
                }
            }
            if (added == 0) rep.warnings.push_back("interaction set is empty; variant equals its base mixture");
        }
        write_atomically(rep.path, content);
        reports.push_back(std::move(rep));
    }
    return reports;
}

nlohmann::json to_json(const VariantReport& r) {
    return {{"name", r.name}, {"path", r.path.string()}, {"rows", r.rows}, {"per_source", r.per_source},
            {"warnings", r.warnings}};
}

}  // namespace isgr
