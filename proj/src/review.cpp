#include "isgr/review.hpp"

#include "isgr/error.hpp"

#include <httplib.h>

#include <chrono>
#include <ctime>
#include <sstream>

namespace isgr {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ApiResponse error_response(int status, std::string_view code) { return {status, {{"error", code}}}; }

}  // namespace

ReviewService::ReviewService(ReviewServiceOptions options) : options_(std::move(options)) {
    records_ = read_records(options_.dataset);
    for (std::size_t i = 0; i < records_.size(); ++i) index_[records_[i].record_id] = i;

    std::map<std::string, DecisionEntry> last;
    for (auto& d : read_decision_log(options_.log)) {
        if (!index_.count(d.record_id)) throw Error(ErrorCode::UnknownRecordId, d.record_id);
        last.insert_or_assign(d.record_id, std::move(d));
    }
    for (auto& r : records_) {
        auto it = last.find(r.record_id);
        if (it != last.end()) apply_decision(r, it->second);
    }

    // A crash mid-write can leave a partial last line; cut it off before appending.
    if (fs::exists(options_.log) && fs::file_size(options_.log) > 0) {
        std::ifstream in(options_.log, std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        if (content.back() != '\n') {
            auto keep = content.rfind('\n');
            fs::resize_file(options_.log, keep == std::string::npos ? 0 : keep + 1);
        }
    }
    log_.open(options_.log, std::ios::binary | std::ios::app);
    if (!log_) throw Error(ErrorCode::UnwritableOutput, "cannot append to " + options_.log.string());
}

ReviewService::~ReviewService() { stop(); }

nlohmann::json ReviewService::item_json(const InstructionRecord& r) const {
    nlohmann::json j = {{"record_id", r.record_id},
                        {"image_ref", r.image_ref},
                        {"image_url", "/images/" + r.image_ref},
                        {"question", r.question},
                        {"answer", r.answer},
                        {"kind", to_string(r.kind)},
                        {"final_graph", r.final_graph},
                        {"evidence", r.evidence},
                        {"review_status", to_string(r.review_status)}};
    return j;
}

ApiResponse ReviewService::queue(std::size_t n) const {
    std::shared_lock lock(state_mu_);
    nlohmann::json items = nlohmann::json::array();
    for (const auto& r : records_) {
        if (items.size() >= n) break;
        if (r.review_status == ReviewStatus::Unreviewed) items.push_back(item_json(r));
    }
    return {200, {{"items", items}}};
}

ApiResponse ReviewService::item(const std::string& record_id) const {
    std::shared_lock lock(state_mu_);
    auto it = index_.find(record_id);
    if (it == index_.end()) return error_response(404, "UnknownRecordId");
    return {200, item_json(records_[it->second])};
}

ApiResponse ReviewService::decide(const std::string& record_id, const nlohmann::json& body) {
    if (!index_.count(record_id)) return error_response(404, "UnknownRecordId");
    DecisionEntry entry;
    try {
        entry = DecisionEntry::from_json(body);
    } catch (const Error&) {
        return error_response(400, "InvalidRequest");
    }
    entry.record_id = record_id;
    entry.timestamp = utc_now();

    std::lock_guard log_lock(log_mu_);
    log_ << to_jsonl_line(entry.to_json()) << std::flush;
    if (!log_) return error_response(500, "UnwritableOutput");

    std::unique_lock lock(state_mu_);
    auto& record = records_[index_.at(record_id)];
    apply_decision(record, entry);
    return {200, item_json(record)};
}

nlohmann::json ReviewService::snapshot_stats() const {
    std::shared_lock lock(state_mu_);
    std::map<ReviewStatus, std::size_t> counts;
    for (const auto& r : records_) ++counts[r.review_status];
    return {{"total", records_.size()},
            {"unreviewed", counts[ReviewStatus::Unreviewed]},
            {"accepted", counts[ReviewStatus::Accepted]},
            {"rejected", counts[ReviewStatus::Rejected]},
            {"edited", counts[ReviewStatus::Edited]}};
}

ApiResponse ReviewService::stats() const { return {200, snapshot_stats()}; }

// ---------------------------------------------------------------------------

namespace {

void send(httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    res.set_content(api.body.dump(), "application/json");
}

std::string content_type_for(const fs::path& p) {
    auto ext = p.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    return "application/octet-stream";
}

}  // namespace

void ReviewService::install_routes() {
    auto& srv = *server_;
    srv.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
        std::size_t n = 1;
        if (req.has_param("n")) {
            const std::string raw = req.get_param_value("n");
            try {
                std::size_t used = 0;
                long long v = std::stoll(raw, &used);
                if (used != raw.size() || v < 0) throw std::invalid_argument(raw);
                n = static_cast<std::size_t>(v);
            } catch (const std::exception&) {
                send(res, error_response(400, "InvalidRequest"));
                return;
            }
        }
        send(res, queue(n));
    });
    srv.Get(R"(/api/item/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        send(res, item(req.matches[1]));
    });
    srv.Post(R"(/api/item/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
            send(res, error_response(400, "InvalidRequest"));
            return;
        }
        send(res, decide(req.matches[1], body));
    });
    srv.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) { send(res, stats()); });
    srv.Get(R"(/images/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
        if (!options_.images_dir) {
            send(res, error_response(404, "ImageUnavailable"));
            return;
        }
        std::error_code ec;
        const fs::path root = fs::weakly_canonical(*options_.images_dir, ec);
        const fs::path file = fs::weakly_canonical(root / std::string(req.matches[1]), ec);
        auto [root_end, _] = std::mismatch(root.begin(), root.end(), file.begin(), file.end());
        if (ec || root_end != root.end() || !fs::is_regular_file(file)) {
            send(res, error_response(404, "ImageUnavailable"));
            return;
        }
        std::ifstream in(file, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        res.set_content(ss.str(), content_type_for(file));
    });
    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            const char* code = res.status == 404 ? "NotFound" : "HttpStatus";
            res.set_content(nlohmann::json{{"error", code}}.dump(), "application/json");
        }
    });
}

int ReviewService::bind(const std::string& host, int port) {
    server_ = std::make_unique<httplib::Server>();
    // The library default also sets SO_REUSEPORT, which lets a second service share the port.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    install_routes();
    int bound = -1;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
    } else if (server_->bind_to_port(host, port)) {
        bound = port;
    }
    if (bound <= 0) throw Error(ErrorCode::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void ReviewService::serve() {
    if (!server_) throw Error(ErrorCode::BindFailure, "serve() called before bind()");
    server_->listen_after_bind();
}

void ReviewService::stop() {
    if (server_) server_->stop();
}

std::pair<std::string, int> parse_bind_address(std::string_view address) {
    std::string host = "127.0.0.1";
    std::string port_text(address);
    auto colon = address.rfind(':');
    if (colon != std::string_view::npos) {
        host = std::string(address.substr(0, colon));
        port_text = std::string(address.substr(colon + 1));
        if (host.empty()) host = "127.0.0.1";
    }
    try {
        std::size_t used = 0;
        int port = std::stoi(port_text, &used);
        if (used != port_text.size() || port < 0 || port > 65535) throw std::invalid_argument(port_text);
        return {host, port};
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "bad bind address '" + std::string(address) + "'");
    }
}

}  // namespace isgr
