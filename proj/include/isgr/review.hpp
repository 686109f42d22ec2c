#pragma once

#include "isgr/dataset.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace isgr {

struct ReviewServiceOptions {
    std::filesystem::path dataset;
    std::filesystem::path log;
    std::optional<std::filesystem::path> images_dir;
};

/// JSON result of a handled request.
struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

/// Review queue over a built dataset. State is the dataset plus a replay of the
/// decision log; every decision is appended to the log before it is applied.
class ReviewService {
public:
    explicit ReviewService(ReviewServiceOptions options);
    ~ReviewService();

    ReviewService(const ReviewService&) = delete;
    ReviewService& operator=(const ReviewService&) = delete;

    ApiResponse queue(std::size_t n) const;
    ApiResponse item(const std::string& record_id) const;
    ApiResponse decide(const std::string& record_id, const nlohmann::json& body);
    ApiResponse stats() const;

    /// {total, unreviewed, accepted, rejected, edited}
    nlohmann::json snapshot_stats() const;

    /// Binds `host:port` (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called. bind() must have succeeded.
    void serve();
    void stop();

private:
    nlohmann::json item_json(const InstructionRecord& r) const;
    void install_routes();

    ReviewServiceOptions options_;
    std::vector<InstructionRecord> records_;
    std::map<std::string, std::size_t> index_;

    mutable std::shared_mutex state_mu_;
    std::mutex log_mu_;
    std::ofstream log_;

    std::unique_ptr<httplib::Server> server_;
};

/// Splits "host:port"; a bare port binds 127.0.0.1.
std::pair<std::string, int> parse_bind_address(std::string_view address);

}  // namespace isgr
