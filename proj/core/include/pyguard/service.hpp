#pragma once

#include "pyguard/detector.hpp"
#include "pyguard/ingest.hpp"
#include "pyguard/llm.hpp"
#include "pyguard/report.hpp"
#include "pyguard/store.hpp"

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace pyguard {

/// Library version, e.g. "0.3.0".
std::string_view library_version() noexcept;

/// Service configuration, read from a JSON file:
///
///   {
///     "listen": "127.0.0.1:8080",
///     "store":  {"path": "pyguard.db"},
///     "models": {"dir": "models", "embeddings": "models/emb.json"},
///     "llm":    {"endpoint": "...", "model": "gpt-3.5-turbo", "timeout_seconds": 60,
///                "max_in_flight": 4, "context_budget": 12000},
///     "ingest": {"allowlist": ["https://github.com/*"],
///                "rewrites": {"https://mirror.test/": "file:///srv/git/"}},
///     "jobs":   {"workers": 1},
///     "webui":  {"dir": "webui/dist"},
///     "window": {"length": 40, "stride": 5, "threshold": 0.5}
///   }
///
/// Every key is optional. Relative paths resolve against the config file's
/// directory. The API key comes from LLM_API_KEY, never from the file.
struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string store_path = "pyguard.db";
    std::filesystem::path models_dir = "models";
    std::filesystem::path embeddings_path;  // empty: the one word2vec file in models_dir
    LlmConfig llm;
    RepositoryConfig repository;
    std::size_t workers = 1;
    std::filesystem::path webui_dir;
    WindowSpec window;
};

/// Throws InvalidConfig for unknown keys, wrong types or invalid values.
ServiceConfig service_config_from_json(std::string_view text,
                                       const std::filesystem::path& base_dir = {});
ServiceConfig load_service_config(const std::filesystem::path& path);

/// One row of the endpoint table; `example` is a concrete path for tests.
struct RouteInfo {
    std::string method;
    std::string pattern;
    std::string example;
    bool requires_auth = true;
};

const std::vector<RouteInfo>& api_routes();

/**
 * HTTP API over a Store, a loaded ModelBundle and an optional chat provider.
 * Scans run on `config.workers` background threads in FIFO order; on start
 * jobs left running by a previous process are failed and queued ones are
 * resumed.
 */
class Service {
public:
    Service(ServiceConfig config, std::shared_ptr<Store> store, ModelBundle models,
            std::shared_ptr<ChatProvider> llm);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds host:port (port 0 picks a free one) and starts the workers.
    /// Returns the bound port; throws IoError when binding fails.
    int bind();

    /// Serves requests until stop() is called. Requires bind().
    void serve();

    /// bind() plus serve() on a background thread.
    int start_background();

    void stop();

    /// Blocks until no job is queued or running; for tests.
    void wait_idle();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace pyguard
