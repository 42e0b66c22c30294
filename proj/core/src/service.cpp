#include "pyguard/service.hpp"

#include "httplib.h"
#include "json.hpp"
#include "pyguard/digest.hpp"
#include "pyguard/errors.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#ifndef PYGUARD_VERSION_STRING
#define PYGUARD_VERSION_STRING "0.0.0"
#endif

namespace pyguard {

using nlohmann::json;

std::string_view library_version() noexcept { return PYGUARD_VERSION_STRING; }

// ---------------------------------------------------------------- config

namespace {

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw InvalidConfig("unknown config key " + where + key);
        }
    }
}

const json& section(const json& root, const char* name) {
    static const json empty = json::object();
    auto it = root.find(name);
    if (it == root.end()) return empty;
    if (!it->is_object()) throw InvalidConfig(std::string("config key ") + name + " must be an object");
    return *it;
}

template <typename T>
void read_key(const json& obj, const char* key, T& out, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw InvalidConfig("config key " + where + key + " has the wrong type");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

ServiceConfig service_config_from_json(std::string_view text, const std::filesystem::path& base_dir) {
    const json root = json::parse(text, nullptr, false);
    if (root.is_discarded() || !root.is_object()) throw InvalidConfig("config is not a JSON object");
    reject_unknown(root, {"listen", "store", "models", "llm", "ingest", "jobs", "webui", "window"}, "");

    ServiceConfig c;
    std::string listen = c.host + ":" + std::to_string(c.port);
    read_key(root, "listen", listen, "");
    const std::size_t colon = listen.rfind(':');
    if (colon == std::string::npos) throw InvalidConfig("listen must be host:port");
    c.host = listen.substr(0, colon);
    try {
        std::size_t used = 0;
        c.port = std::stoi(listen.substr(colon + 1), &used);
        if (used != listen.size() - colon - 1 || c.port < 0 || c.port > 65535) throw std::out_of_range("port");
    } catch (const std::exception&) {
        throw InvalidConfig("listen port must be an integer in [0, 65535]");
    }

    const json& store = section(root, "store");
    reject_unknown(store, {"path"}, "store.");
    std::string store_path = c.store_path;
    read_key(store, "path", store_path, "store.");
    c.store_path = store_path == ":memory:" ? store_path : resolve(base_dir, store_path).string();

    const json& models = section(root, "models");
    reject_unknown(models, {"dir", "embeddings"}, "models.");
    std::string models_dir = c.models_dir.string(), embeddings;
    read_key(models, "dir", models_dir, "models.");
    read_key(models, "embeddings", embeddings, "models.");
    c.models_dir = resolve(base_dir, models_dir);
    c.embeddings_path = resolve(base_dir, embeddings);

    const json& llm = section(root, "llm");
    reject_unknown(llm, {"endpoint", "model", "timeout_seconds", "max_in_flight", "context_budget", "max_tokens"},
                   "llm.");
    read_key(llm, "endpoint", c.llm.endpoint, "llm.");
    read_key(llm, "model", c.llm.model, "llm.");
    read_key(llm, "timeout_seconds", c.llm.timeout_seconds, "llm.");
    read_key(llm, "max_in_flight", c.llm.max_in_flight, "llm.");
    read_key(llm, "context_budget", c.llm.context_budget, "llm.");
    read_key(llm, "max_tokens", c.llm.max_tokens, "llm.");
    if (!(c.llm.timeout_seconds > 0)) throw InvalidConfig("llm.timeout_seconds must be positive");
    if (c.llm.max_in_flight == 0) throw InvalidConfig("llm.max_in_flight must be >= 1");

    const json& ingest = section(root, "ingest");
    reject_unknown(ingest, {"allowlist", "rewrites", "max_bytes", "timeout_seconds"}, "ingest.");
    read_key(ingest, "allowlist", c.repository.allowlist, "ingest.");
    std::map<std::string, std::string> rewrites;
    read_key(ingest, "rewrites", rewrites, "ingest.");
    c.repository.rewrites.assign(rewrites.begin(), rewrites.end());
    // Longest prefix first so the most specific rewrite wins.
    std::stable_sort(c.repository.rewrites.begin(), c.repository.rewrites.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    read_key(ingest, "max_bytes", c.repository.max_total_bytes, "ingest.");
    read_key(ingest, "timeout_seconds", c.repository.timeout_seconds, "ingest.");

    const json& jobs = section(root, "jobs");
    reject_unknown(jobs, {"workers"}, "jobs.");
    read_key(jobs, "workers", c.workers, "jobs.");
    if (c.workers == 0) throw InvalidConfig("jobs.workers must be >= 1");

    const json& webui = section(root, "webui");
    reject_unknown(webui, {"dir"}, "webui.");
    std::string webui_dir;
    read_key(webui, "dir", webui_dir, "webui.");
    c.webui_dir = resolve(base_dir, webui_dir);

    const json& window = section(root, "window");
    reject_unknown(window, {"length", "stride", "threshold"}, "window.");
    read_key(window, "length", c.window.length, "window.");
    read_key(window, "stride", c.window.stride, "window.");
    read_key(window, "threshold", c.window.threshold, "window.");
    validate(c.window);
    return c;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return service_config_from_json(ss.str(), path.parent_path());
}

const std::vector<RouteInfo>& api_routes() {
    static const std::vector<RouteInfo> routes = {
        {"POST", "/api/register", "/api/register", false},
        {"POST", "/api/login", "/api/login", false},
        {"GET", "/api/health", "/api/health", false},
        {"POST", "/api/logout", "/api/logout", true},
        {"POST", "/api/projects", "/api/projects", true},
        {"GET", "/api/projects", "/api/projects", true},
        {"GET", "/api/projects/{id}", "/api/projects/1", true},
        {"POST", "/api/projects/{id}/sources", "/api/projects/1/sources", true},
        {"POST", "/api/projects/{id}/repository", "/api/projects/1/repository", true},
        {"POST", "/api/projects/{id}/scans", "/api/projects/1/scans", true},
        {"GET", "/api/scans/{id}", "/api/scans/1", true},
        {"GET", "/api/scans/{id}/report", "/api/scans/1/report?format=json", true},
        {"POST", "/api/scans/{id}/rewrite", "/api/scans/1/rewrite", true},
        {"POST", "/api/feedback", "/api/feedback", true},
    };
    return routes;
}

// ---------------------------------------------------------------- service

namespace {

struct ApiError {
    int status;
    std::string code;
    std::string message;
};

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
    res.status = status;
    res.set_content(json{{"code", code}, {"message", message}}.dump(), "application/json");
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    json j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ApiError{422, "invalid_json", "request body must be a JSON object"};
    return j;
}

std::string string_field(const json& body, const char* key) {
    auto it = body.find(key);
    if (it == body.end() || !it->is_string()) {
        throw ApiError{422, "validation_error", std::string("field '") + key + "' must be a string"};
    }
    return it->get<std::string>();
}

Id path_id(const httplib::Request& req) {
    try {
        return std::stoll(req.matches[1].str());
    } catch (const std::exception&) {
        throw ApiError{404, "not_found", "unknown id"};
    }
}

std::optional<std::string> bearer_token(const httplib::Request& req) {
    const std::string h = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (h.size() <= prefix.size() || !std::equal(prefix.begin(), prefix.end(), h.begin(), [](char a, char b) {
            return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
        })) {
        return std::nullopt;
    }
    return h.substr(prefix.size());
}

json project_json(const Project& p) {
    json j = {{"id", p.id},
              {"name", p.name},
              {"source_kind", p.source_kind ? json(std::string(to_string(*p.source_kind))) : json(nullptr)},
              {"source_ref", p.source_ref},
              {"created_at", iso8601_utc(p.created_at)}};
    return j;
}

json manifest_json(const std::vector<FileEntry>& files) {
    json arr = json::array();
    for (const FileEntry& f : files) arr.push_back({{"path", f.path}, {"size", f.size}, {"digest", f.digest}});
    return arr;
}

json job_json(const ScanJob& j) {
    json types = json::array();
    for (VulnType t : j.types) types.push_back(std::string(to_string(t)));
    return {{"id", j.id},
            {"project_id", j.project_id},
            {"engine", std::string(to_string(j.engine))},
            {"types", types},
            {"status", std::string(to_string(j.status))},
            {"error", j.error ? json(*j.error) : json(nullptr)},
            {"created_at", iso8601_utc(j.created_at)},
            {"finished_at", j.finished_at ? json(iso8601_utc(*j.finished_at)) : json(nullptr)},
            {"report_id", j.report_id ? json(*j.report_id) : json(nullptr)}};
}

// Largest prefix length <= limit that does not split a UTF-8 sequence.
std::size_t utf8_prefix(std::string_view s, std::size_t limit) {
    if (s.size() <= limit) return s.size();
    std::size_t n = limit;
    while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xc0) == 0x80) --n;
    return n;
}

Finding finding_for_lines(const SourceFile& file, const LlmFinding& lf) {
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 0; i < file.bytes.size(); ++i) {
        if (file.bytes[i] == '\n' && i + 1 < file.bytes.size()) starts.push_back(i + 1);
    }
    const auto last = static_cast<int>(starts.size());
    const int a = std::clamp(lf.line_start, 1, last);
    const int b = std::clamp(lf.line_end, a, last);
    std::size_t end = b < last ? starts[static_cast<std::size_t>(b)] : file.bytes.size();
    if (end > starts[static_cast<std::size_t>(a - 1)] && file.bytes[end - 1] == '\n') --end;

    Finding f;
    f.vuln_type = *lf.vuln_type;
    f.file_path = file.path;
    f.byte_start = starts[static_cast<std::size_t>(a - 1)];
    f.byte_end = std::max(end, f.byte_start);
    f.line_start = a;
    f.line_end = b;
    f.score = 1.0;
    const std::string_view body = std::string_view(file.bytes).substr(f.byte_start, f.byte_end - f.byte_start);
    f.snippet = std::string(body.substr(0, utf8_prefix(body, kMaxSnippetBytes)));
    f.origin = FindingOrigin::llm;
    f.explanation = lf.explanation;
    return f;
}

}  // namespace

struct Service::Impl {
    ServiceConfig config;
    std::shared_ptr<Store> store;
    ModelBundle models;
    std::shared_ptr<ChatProvider> llm;

    httplib::Server server;
    std::thread server_thread;
    int bound_port = -1;

    std::mutex mu;
    std::condition_variable work_cv;
    std::condition_variable idle_cv;
    std::deque<Id> queue;
    std::size_t active = 0;
    bool stopping = false;
    std::vector<std::thread> workers;

    Impl(ServiceConfig c, std::shared_ptr<Store> s, ModelBundle m, std::shared_ptr<ChatProvider> p)
        : config(std::move(c)), store(std::move(s)), models(std::move(m)), llm(std::move(p)) {
        if (!store) throw InvalidConfig("service needs a store");
        validate(config.window);
        routes();
    }

    // ------------------------------------------------------------ jobs

    void start_workers() {
        if (!workers.empty()) return;
        for (const ScanJob& j : store->jobs_with_status(JobStatus::running)) {
            store->update_job_status(j.id, JobStatus::failed, "interrupted by a service restart");
        }
        {
            std::lock_guard lock(mu);
            for (const ScanJob& j : store->jobs_with_status(JobStatus::queued)) queue.push_back(j.id);
        }
        for (std::size_t i = 0; i < config.workers; ++i) workers.emplace_back([this] { worker_loop(); });
    }

    void stop_workers() {
        {
            std::lock_guard lock(mu);
            stopping = true;
        }
        work_cv.notify_all();
        for (std::thread& t : workers) t.join();
        workers.clear();
    }

    void enqueue(Id id) {
        {
            std::lock_guard lock(mu);
            queue.push_back(id);
        }
        work_cv.notify_one();
    }

    void worker_loop() {
        for (;;) {
            Id id;
            {
                std::unique_lock lock(mu);
                work_cv.wait(lock, [&] { return stopping || !queue.empty(); });
                if (stopping) return;
                id = queue.front();
                queue.pop_front();
                ++active;
            }
            run_job(id);
            {
                std::lock_guard lock(mu);
                --active;
            }
            idle_cv.notify_all();
        }
    }

    void run_job(Id id) {
        ScanJob job;
        try {
            job = store->update_job_status(id, JobStatus::running);
        } catch (const std::exception&) {
            return;  // deleted or already handled
        }
        try {
            const std::vector<SourceFile> files = store->load_sources(job.project_id);
            ScanReport report = job.engine == Engine::bilstm ? run_bilstm(files, job.types) : run_llm(files, job.types);
            report.id = std::to_string(id);
            report.scan_id = std::to_string(id);
            store->complete_job(id, report_to_json(report));
        } catch (const std::exception& e) {
            try {
                store->update_job_status(id, JobStatus::failed, e.what());
            } catch (const std::exception&) {
            }
        }
    }

    ScanReport run_bilstm(const std::vector<SourceFile>& files, const std::vector<VulnType>& types) {
        if (!models.embeddings) throw ModelMissing("no embeddings loaded");
        ScanResult result = scan_tree(models.models, *models.embeddings, files, config.window, types);
        return make_report(std::move(result), Engine::bilstm, types, iso8601_utc(system_now()));
    }

    ScanReport run_llm(const std::vector<SourceFile>& files, const std::vector<VulnType>& types) {
        if (!llm) throw MissingCredentials("no LLM provider is configured");
        ScanResult result;
        std::vector<std::string> warnings;
        std::vector<const SourceFile*> ordered;
        for (const SourceFile& f : files) ordered.push_back(&f);
        std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->path < b->path; });
        for (const SourceFile* f : ordered) {
            if (!is_python_path(f->path)) {
                result.skipped_files.push_back(f->path);
                continue;
            }
            ++result.files_scanned;
            result.per_file[f->path] = 0;
            if (f->bytes.empty()) continue;
            const LlmAnalysis analysis = analyze_code(*llm, f->bytes, types, config.llm.model);
            for (const std::string& w : analysis.warnings) warnings.push_back(f->path + ": " + w);
            for (const LlmFinding& lf : analysis.findings) {
                if (!lf.vuln_type || std::find(types.begin(), types.end(), *lf.vuln_type) == types.end()) continue;
                result.findings.push_back(finding_for_lines(*f, lf));
            }
        }
        std::stable_sort(result.findings.begin(), result.findings.end(), [](const Finding& a, const Finding& b) {
            return std::tie(a.file_path, a.byte_start, a.vuln_type) < std::tie(b.file_path, b.byte_start, b.vuln_type);
        });
        ScanReport report = make_report(std::move(result), Engine::llm, types, iso8601_utc(system_now()));
        report.warnings = std::move(warnings);
        return report;
    }

    // ------------------------------------------------------------ http

    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
    using AuthedHandler = std::function<void(const httplib::Request&, httplib::Response&, const User&)>;

    static Handler guarded(Handler h) {
        return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            try {
                h(req, res);
            } catch (const ApiError& e) {
                send_error(res, e.status, e.code, e.message);
            } catch (const DuplicateUsername& e) {
                send_error(res, 409, "duplicate_username", e.what());
            } catch (const ValidationError& e) {
                send_error(res, 422, "validation_error", e.what());
            } catch (const AuthFailed& e) {
                send_error(res, 401, "auth_failed", e.what());
            } catch (const NotFound& e) {
                send_error(res, 404, "not_found", e.what());
            } catch (const ArchiveTooLarge& e) {
                send_error(res, 413, "archive_too_large", e.what());
            } catch (const UnsafePath& e) {
                send_error(res, 422, "unsafe_path", e.what());
            } catch (const BadArchive& e) {
                send_error(res, 422, "bad_archive", e.what());
            } catch (const UrlNotAllowed& e) {
                send_error(res, 422, "url_not_allowed", e.what());
            } catch (const FetchFailed& e) {
                send_error(res, 502, "fetch_failed", e.what());
            } catch (const MissingCredentials& e) {
                send_error(res, 502, "missing_credentials", e.what());
            } catch (const ProviderError& e) {
                send_error(res, 502, "provider_error", e.what());
            } catch (const Timeout& e) {
                send_error(res, 502, "provider_timeout", e.what());
            } catch (const NoCodeInResponse& e) {
                send_error(res, 502, "no_code_in_response", e.what());
            } catch (const std::exception&) {
                send_error(res, 500, "internal", "internal error");
            }
        };
    }

    Handler authed(AuthedHandler h) {
        return guarded([this, h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
            const auto token = bearer_token(req);
            const auto user = token ? store->authenticate(*token) : std::nullopt;
            if (!user) throw ApiError{401, "unauthenticated", "a valid bearer token is required"};
            h(req, res, *user);
        });
    }

    Project owned_project(Id id, const User& user) {
        Project p = store->get_project(id);
        if (p.owner_id != user.id) throw ApiError{403, "forbidden", "project belongs to another user"};
        return p;
    }

    ScanJob owned_job(Id id, const User& user) {
        ScanJob j = store->get_job(id);
        owned_project(j.project_id, user);
        return j;
    }

    void routes() {
        server.set_payload_max_length(kMaxUploadBytes + (2u << 20));
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
            send_error(res, 500, "internal", "internal error");
        });
        server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            switch (res.status) {
            case 404: send_error(res, 404, "not_found", "no such route"); break;
            case 413: send_error(res, 413, "archive_too_large", "request body too large"); break;
            default: send_error(res, res.status, "http_error", httplib::status_message(res.status));
            }
        });
        if (!config.webui_dir.empty() && std::filesystem::is_directory(config.webui_dir)) {
            server.set_mount_point("/", config.webui_dir.string());
        }

        server.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
            json types = json::array();
            for (const auto& [t, _] : models.models) types.push_back(std::string(to_string(t)));
            send_json(res, 200,
                      {{"status", "ok"},
                       {"version", std::string(library_version())},
                       {"models", types},
                       {"embeddings", static_cast<bool>(models.embeddings)},
                       {"llm", static_cast<bool>(llm)}});
        }));

        server.Post("/api/register", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            const User u = store->create_user(string_field(body, "username"), string_field(body, "password"));
            send_json(res, 201, {{"id", u.id}, {"username", u.username}, {"created_at", iso8601_utc(u.created_at)}});
        }));

        server.Post("/api/login", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            const Session s = store->verify_login(string_field(body, "username"), string_field(body, "password"));
            send_json(res, 200, {{"token", s.token}, {"expires_at", iso8601_utc(s.expires_at)}});
        }));

        server.Post("/api/logout", authed([this](const httplib::Request& req, httplib::Response& res, const User&) {
            store->logout(*bearer_token(req));
            res.status = 204;
        }));

        server.Post("/api/projects", authed([this](const httplib::Request& req, httplib::Response& res, const User& u) {
            const json body = parse_body(req);
            send_json(res, 201, project_json(store->create_project(u.id, string_field(body, "name"))));
        }));

        server.Get("/api/projects", authed([this](const httplib::Request&, httplib::Response& res, const User& u) {
            json arr = json::array();
            for (const Project& p : store->list_projects(u.id)) arr.push_back(project_json(p));
            send_json(res, 200, arr);
        }));

        server.Get(R"(/api/projects/(\d+))",
                   authed([this](const httplib::Request& req, httplib::Response& res, const User& u) {
                       const Project p = owned_project(path_id(req), u);
                       json j = project_json(p);
                       j["files"] = manifest_json(store->project_files(p.id));
                       send_json(res, 200, j);
                   }));

        server.Post(R"(/api/projects/(\d+)/sources)",
                    authed([this](const httplib::Request& req, httplib::Response& res, const User& u) {
                        const Project p = owned_project(path_id(req), u);
                        std::string archive;
                        if (req.is_multipart_form_data()) {
                            if (req.has_file("archive")) archive = req.get_file_value("archive").content;
                            else if (req.has_file("file")) archive = req.get_file_value("file").content;
                            else if (!req.files.empty()) archive = req.files.begin()->second.content;
                            else throw ApiError{422, "validation_error", "multipart body carries no file"};
                        } else {
                            archive = req.body;
                        }
                        const auto files = unpack_upload(archive);
                        const auto manifest = store->set_project_sources(p.id, SourceKind::upload,
                                                                         crypto::sha256_hex(archive), files);
                        send_json(res, 200, {{"files", manifest_json(manifest)}});
                    }));

        server.Post(R"(/api/projects/(\d+)/repository)",
                    authed([this](const httplib::Request& req, httplib::Response& res, const User& u) {
                        const Project p = owned_project(path_id(req), u);
                        const std::string url = string_field(parse_body(req), "url");
                        const auto files = fetch_repository(url, config.repository);
                        const auto manifest = store->set_project_sources(p.id, SourceKind::repository, url, files);
                        send_json(res, 200, {{"files", manifest_json(manifest)}});
                    }));

        server.Post(R"(/api/projects/(\d+)/scans)",
                    authed([this](const httplib::Request& req, httplib::Response& res, const User& u) {
                        const Project p = owned_project(path_id(req), u);
                        const json body = parse_body(req);
                        const auto engine = parse_engine(string_field(body, "engine"));
                        if (!engine) throw ApiError{422, "validation_error", "engine must be \"bilstm\" or \"llm\""};
                        std::vector<VulnType> types;
                        if (auto it = body.find("types"); it != body.end()) {
                            if (!it->is_array()) throw ApiError{422, "validation_error", "types must be an array"};
                            for (const json& t : *it) {
                                const auto vt = t.is_string() ? parse_vuln_type(t.get<std::string>()) : std::nullopt;
                                if (!vt) throw ApiError{422, "validation_error", "unknown vulnerability type " + t.dump()};
                                if (std::find(types.begin(), types.end(), *vt) == types.end()) types.push_back(*vt);
                            }
                            if (types.empty()) throw ApiError{422, "validation_error", "types must not be empty"};
                        } else {
                            types.assign(kAllVulnTypes.begin(), kAllVulnTypes.end());
                        }
                        std::sort(types.begin(), types.end());
                        if (*engine == Engine::bilstm) {
                            for (VulnType t : types) {
                                if (!models.embeddings || !models.models.contains(t)) {
                                    throw ApiError{422, "model_missing",
                                                   "no BiLSTM model loaded for " + std::string(to_string(t))};
                                }
                            }
                        }
                        if (!p.source_kind) throw ApiError{409, "no_sources", "project has no sources yet"};
                        const ScanJob job = store->create_job(p.id, *engine, types);
                        enqueue(job.id);
                        send_json(res, 202, {{"scan_id", job.id}});
                    }));

        server.Get(R"(/api/scans/(\d+))",
                   authed([this](const httplib::Request& req, httplib::Response& res, const User& u) {
                       send_json(res, 200, job_json(owned_job(path_id(req), u)));
                   }));

        server.Get(R"(/api/scans/(\d+)/report)",
                   authed([this](const httplib::Request& req, httplib::Response& res, const User& u) {
                       const ScanJob job = owned_job(path_id(req), u);
                       const std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
                       if (format != "json" && format != "html") {
                           throw ApiError{422, "validation_error", "format must be json or html"};
                       }
                       if (job.status == JobStatus::failed) {
                           throw ApiError{409, "scan_failed", job.error.value_or("scan failed")};
                       }
                       if (job.status != JobStatus::done || !job.report_id) {
                           throw ApiError{409, "not_ready", "scan has not finished"};
                       }
                       const StoredReport stored = store->get_report(*job.report_id);
                       res.status = 200;
                       if (format == "json") {
                           res.set_content(stored.body, "application/json");
                       } else {
                           res.set_content(report_to_html(report_from_json(stored.body)), "text/html; charset=utf-8");
                       }
                   }));

        server.Post(R"(/api/scans/(\d+)/rewrite)",
                    authed([this](const httplib::Request& req, httplib::Response& res, const User& u) {
                        const ScanJob job = owned_job(path_id(req), u);
                        const json body = parse_body(req);
                        auto ids_it = body.find("finding_ids");
                        if (ids_it == body.end() || !ids_it->is_array() || ids_it->empty()) {
                            throw ApiError{422, "validation_error", "finding_ids must be a non-empty array"};
                        }
                        if (job.status != JobStatus::done || !job.report_id) {
                            throw ApiError{409, "not_ready", "scan has not finished"};
                        }
                        const ScanReport report = report_from_json(store->get_report(*job.report_id).body);
                        std::vector<Finding> chosen;
                        std::vector<std::string> ids;
                        for (const json& id : *ids_it) {
                            if (!id.is_string()) throw ApiError{422, "validation_error", "finding ids are strings"};
                            const std::string want = id.get<std::string>();
                            auto f = std::find_if(report.findings.begin(), report.findings.end(),
                                                  [&](const Finding& x) { return finding_id(x) == want; });
                            if (f == report.findings.end()) throw ApiError{404, "not_found", "unknown finding id " + want};
                            if (std::find(ids.begin(), ids.end(), want) != ids.end()) continue;
                            ids.push_back(want);
                            chosen.push_back(*f);
                        }
                        const std::string& path = chosen.front().file_path;
                        for (const Finding& f : chosen) {
                            if (f.file_path != path) {
                                throw ApiError{422, "validation_error", "all findings must belong to one file"};
                            }
                        }
                        std::optional<std::string> code;
                        for (SourceFile& f : store->load_sources(job.project_id)) {
                            if (f.path == path) code = std::move(f.bytes);
                        }
                        if (!code) throw ApiError{404, "not_found", "file is no longer part of the project: " + path};
                        if (!llm) throw MissingCredentials("no LLM provider is configured");
                        const RewriteResult r = secure_rewrite(*llm, *code, chosen, config.llm.model);
                        send_json(res, 200,
                                  {{"file_path", path},
                                   {"finding_ids", ids},
                                   {"original_code", *code},
                                   {"secure_code", r.secure_code},
                                   {"change_summary", r.change_summary},
                                   {"raw_response", r.raw_response}});
                    }));

        server.Post("/api/feedback", authed([this](const httplib::Request& req, httplib::Response& res, const User& u) {
            const Feedback f = store->add_feedback(u.id, string_field(parse_body(req), "text"));
            send_json(res, 201, {{"id", f.id}, {"created_at", iso8601_utc(f.created_at)}});
        }));
    }
};

Service::Service(ServiceConfig config, std::shared_ptr<Store> store, ModelBundle models,
                 std::shared_ptr<ChatProvider> llm)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(store), std::move(models), std::move(llm))) {}

Service::~Service() { stop(); }

int Service::bind() {
    Impl& s = *impl_;
    if (s.bound_port >= 0) return s.bound_port;
    if (s.config.port == 0) {
        s.bound_port = s.server.bind_to_any_port(s.config.host);
    } else {
        s.bound_port = s.server.bind_to_port(s.config.host, s.config.port) ? s.config.port : -1;
    }
    if (s.bound_port < 0) {
        throw IoError("cannot listen on " + s.config.host + ":" + std::to_string(s.config.port));
    }
    s.start_workers();
    return s.bound_port;
}

void Service::serve() {
    if (impl_->bound_port < 0) bind();
    impl_->server.listen_after_bind();
}

int Service::start_background() {
    const int port = bind();
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void Service::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->server_thread.joinable()) impl_->server_thread.join();
    impl_->stop_workers();
}

void Service::wait_idle() {
    std::unique_lock lock(impl_->mu);
    impl_->idle_cv.wait(lock, [&] { return impl_->queue.empty() && impl_->active == 0; });
}

}  // namespace pyguard
