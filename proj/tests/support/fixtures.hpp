#pragma once

#include "pyguard/detector.hpp"
#include "pyguard/embedding.hpp"
#include "pyguard/llm.hpp"
#include "pyguard/service.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>

namespace httplib {
class Client;
}

namespace pyguard::testing {

/// Fresh directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Skip-gram embeddings over generate(t, per_type, seed) for all seven types.
EmbeddingModel corpus_embeddings(std::size_t per_type, std::uint64_t seed);

/// Embeddings plus one default-config model per type, each trained for `epochs`
/// epochs on generate(t, 200, seed).
ModelBundle train_bundle(std::span<const VulnType> types, std::size_t epochs, std::uint64_t seed);

/// Small embeddings plus zero-weight default-config models: every window scores
/// exactly 0.5, so with the default threshold every window is positive.
ModelBundle zero_bundle(std::span<const VulnType> types);

/// Service on an ephemeral port backed by an in-memory store.
struct RunningService {
    RunningService(ModelBundle models, std::shared_ptr<ChatProvider> llm, ServiceConfig config = {});
    ~RunningService();

    httplib::Client& client();

    std::shared_ptr<Store> store;
    std::unique_ptr<Service> service;
    int port = 0;

private:
    std::unique_ptr<httplib::Client> client_;
};

struct ApiResponse {
    int status = 0;  // 0 when the request itself failed
    nlohmann::json body;  // null unless the reply parsed as JSON
    std::string raw;
    std::string content_type;
};

/// One API call. `body` is sent as JSON unless `content_type` says otherwise.
ApiResponse call(httplib::Client& client, const std::string& method, const std::string& path,
                 const std::string& token = "", const std::string& body = "",
                 const std::string& content_type = "application/json");

/// Registers and logs in; returns the bearer token.
std::string sign_up(httplib::Client& client, const std::string& username,
                    const std::string& password = "correct horse battery");

/// Polls GET /api/scans/{id} until the job is done or failed (or `seconds`
/// pass) and returns the last job document.
nlohmann::json wait_for_scan(httplib::Client& client, const std::string& token, long long scan_id,
                             double seconds = 60);

}  // namespace pyguard::testing
