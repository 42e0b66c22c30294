#pragma once

#include "pyguard/detector.hpp"
#include "pyguard/report.hpp"
#include "pyguard/vuln_type.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

struct sqlite3;

namespace pyguard {

using Id = std::int64_t;

/// Unix seconds. Injectable so session expiry can be tested.
using Clock = std::function<std::int64_t()>;

std::int64_t system_now();

/// "YYYY-MM-DDTHH:MM:SSZ".
std::string iso8601_utc(std::int64_t unix_seconds);

inline constexpr int kPasswordIterations = 100000;
inline constexpr std::int64_t kSessionTtlSeconds = 24 * 60 * 60;
inline constexpr std::size_t kMaxFeedbackChars = 4000;

struct User {
    Id id = 0;
    std::string username;
    std::int64_t created_at = 0;
    bool operator==(const User&) const = default;
};

struct Session {
    std::string token;  // returned once; only its SHA-256 is persisted
    Id user_id = 0;
    std::int64_t expires_at = 0;
};

enum class SourceKind { upload, repository };

std::string_view to_string(SourceKind kind) noexcept;

struct Project {
    Id id = 0;
    Id owner_id = 0;
    std::string name;
    std::optional<SourceKind> source_kind;  // unset until sources are ingested
    std::string source_ref;                 // archive digest or repository URL
    std::int64_t created_at = 0;
    bool operator==(const Project&) const = default;
};

struct FileEntry {
    std::string path;
    std::size_t size = 0;
    std::string digest;  // SHA-256 hex of the content
    bool operator==(const FileEntry&) const = default;
};

enum class JobStatus { queued, running, done, failed };

std::string_view to_string(JobStatus status) noexcept;

/// queued -> running -> (done | failed); nothing else.
bool is_legal_transition(JobStatus from, JobStatus to) noexcept;

struct ScanJob {
    Id id = 0;
    Id project_id = 0;
    Engine engine = Engine::bilstm;
    std::vector<VulnType> types;
    JobStatus status = JobStatus::queued;
    std::optional<std::string> error;
    std::int64_t created_at = 0;
    std::optional<std::int64_t> finished_at;
    std::optional<Id> report_id;  // set iff status == done
    bool operator==(const ScanJob&) const = default;
};

struct StoredReport {
    Id id = 0;
    Id scan_id = 0;
    std::string body;  // report JSON, never modified after insert
    bool operator==(const StoredReport&) const = default;
};

struct Feedback {
    Id id = 0;
    Id user_id = 0;
    std::string text;
    std::int64_t created_at = 0;
    bool operator==(const Feedback&) const = default;
};

/**
 * SQLite-backed persistence. One handle may be shared by any number of
 * threads; every call runs under an internal mutex and multi-row writes run
 * in a transaction.
 */
class Store {
public:
    /// Opens (creating if needed) the database file. ":memory:" works.
    explicit Store(const std::string& path, Clock clock = system_now);
    ~Store();
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    /// Throws ValidationError (username outside 3..64 chars of [A-Za-z0-9_.-],
    /// password shorter than 8 or longer than 1024 bytes) or DuplicateUsername.
    User create_user(std::string_view username, std::string_view password);
    User get_user(Id id);

    /// Throws AuthFailed with the same message for an unknown user and for a
    /// wrong password.
    Session verify_login(std::string_view username, std::string_view password);

    /// User owning an unexpired session, nullopt otherwise.
    std::optional<User> authenticate(std::string_view token);
    void logout(std::string_view token);

    Project create_project(Id owner_id, std::string_view name);
    Project get_project(Id id);
    std::vector<Project> list_projects(Id owner_id);
    void delete_project(Id id);

    /// Replaces the project's file set and source description in one
    /// transaction. Contents are stored once per digest.
    std::vector<FileEntry> set_project_sources(Id project_id, SourceKind kind, std::string_view ref,
                                               std::span<const SourceFile> files);
    std::vector<FileEntry> project_files(Id project_id);
    std::vector<SourceFile> load_sources(Id project_id);

    ScanJob create_job(Id project_id, Engine engine, std::span<const VulnType> types);
    ScanJob get_job(Id id);
    std::vector<ScanJob> jobs_with_status(JobStatus status);

    /// Moves a job along a legal transition. Reaching done requires a report,
    /// so it only happens through complete_job; asking for it here throws
    /// IllegalTransition like any other illegal move.
    ScanJob update_job_status(Id id, JobStatus next, std::optional<std::string> error = std::nullopt);

    /// Stores the report under the job's id and marks the running job done,
    /// atomically.
    ScanJob complete_job(Id id, std::string_view report_body);

    StoredReport get_report(Id id);

    /// Throws ValidationError for empty text or more than 4000 characters.
    Feedback add_feedback(Id user_id, std::string_view text);
    std::vector<Feedback> list_feedback(Id user_id);

private:
    class Statement;
    void exec(const char* sql);
    std::int64_t now() const { return clock_(); }
    ScanJob read_job(Id id);

    sqlite3* db_ = nullptr;
    Clock clock_;
    std::mutex mu_;
};

}  // namespace pyguard
