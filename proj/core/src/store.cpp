#include "pyguard/store.hpp"

#include "pyguard/digest.hpp"
#include "pyguard/errors.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <map>

namespace pyguard {

std::int64_t system_now() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string iso8601_utc(std::int64_t unix_seconds) {
    const std::time_t t = static_cast<std::time_t>(unix_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string_view to_string(SourceKind kind) noexcept {
    return kind == SourceKind::upload ? "upload" : "repository";
}

std::string_view to_string(JobStatus status) noexcept {
    switch (status) {
    case JobStatus::queued: return "queued";
    case JobStatus::running: return "running";
    case JobStatus::done: return "done";
    case JobStatus::failed: return "failed";
    }
    return "failed";
}

bool is_legal_transition(JobStatus from, JobStatus to) noexcept {
    return (from == JobStatus::queued && to == JobStatus::running) ||
           (from == JobStatus::running && (to == JobStatus::done || to == JobStatus::failed));
}

namespace {

JobStatus parse_status(std::string_view s) {
    if (s == "queued") return JobStatus::queued;
    if (s == "running") return JobStatus::running;
    if (s == "done") return JobStatus::done;
    if (s == "failed") return JobStatus::failed;
    throw FormatError("unknown job status in store: " + std::string(s));
}

std::string join_types(std::span<const VulnType> types) {
    std::string out;
    for (VulnType t : types) {
        if (!out.empty()) out += ',';
        out += to_string(t);
    }
    return out;
}

std::vector<VulnType> split_types(std::string_view s) {
    std::vector<VulnType> out;
    while (!s.empty()) {
        const std::size_t comma = s.find(',');
        const auto t = parse_vuln_type(s.substr(0, comma));
        if (!t) throw FormatError("unknown vulnerability type in store");
        out.push_back(*t);
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

std::size_t utf8_length(std::string_view s) {
    return static_cast<std::size_t>(std::count_if(
        s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xc0) != 0x80; }));
}

bool valid_username(std::string_view name) {
    if (name.size() < 3 || name.size() > 64) return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
               c == '.' || c == '-';
    });
}

constexpr std::size_t kSaltBytes = 16;
constexpr std::size_t kHashBytes = 32;

// Verifying against this keeps the cost of an unknown username equal to a
// wrong password.
const std::vector<std::uint8_t>& decoy_salt() {
    static const std::vector<std::uint8_t> salt(kSaltBytes, 0x5a);
    return salt;
}

}  // namespace

class Store::Statement {
public:
    Statement(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
            throw IoError(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
        }
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int i, std::int64_t v) {
        sqlite3_bind_int64(stmt_, i, v);
        return *this;
    }
    Statement& bind(int i, std::string_view v) {
        sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Statement& bind_blob(int i, std::string_view v) {
        sqlite3_bind_blob(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Statement& bind_blob(int i, std::span<const std::uint8_t> v) {
        sqlite3_bind_blob(stmt_, i, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
        return *this;
    }
    Statement& bind_null(int i) {
        sqlite3_bind_null(stmt_, i);
        return *this;
    }

    /// True while a row is available.
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        // Uniqueness is checked before inserting, so a constraint failure here
        // is a dangling reference.
        if (rc == SQLITE_CONSTRAINT) throw NotFound(std::string("referenced row missing: ") + sqlite3_errmsg(db_));
        throw IoError(std::string("sqlite step: ") + sqlite3_errmsg(db_));
    }
    void run() {
        while (step()) {
        }
    }

    std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
    bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
    std::string text(int col) const {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string();
    }
    std::string blob(int col) const {
        const auto* p = static_cast<const char*>(sqlite3_column_blob(stmt_, col));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string();
    }

private:
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

namespace {

class Transaction {
public:
    explicit Transaction(sqlite3* db) : db_(db) { sqlite3_exec(db_, "BEGIN IMMEDIATE", nullptr, nullptr, nullptr); }
    ~Transaction() {
        if (!committed_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    }
    void commit() {
        if (sqlite3_exec(db_, "COMMIT", nullptr, nullptr, nullptr) != SQLITE_OK) {
            throw IoError(std::string("sqlite commit: ") + sqlite3_errmsg(db_));
        }
        committed_ = true;
    }

private:
    sqlite3* db_;
    bool committed_ = false;
};

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS users (
  id INTEGER PRIMARY KEY,
  username TEXT NOT NULL UNIQUE,
  password_salt BLOB NOT NULL,
  password_hash BLOB NOT NULL,
  created_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS sessions (
  token_hash TEXT PRIMARY KEY,
  user_id INTEGER NOT NULL REFERENCES users(id),
  expires_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS projects (
  id INTEGER PRIMARY KEY,
  owner_id INTEGER NOT NULL REFERENCES users(id),
  name TEXT NOT NULL,
  source_kind TEXT,
  source_ref TEXT NOT NULL DEFAULT '',
  created_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS blobs (
  digest TEXT PRIMARY KEY,
  data BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS project_files (
  project_id INTEGER NOT NULL REFERENCES projects(id) ON DELETE CASCADE,
  path TEXT NOT NULL,
  digest TEXT NOT NULL REFERENCES blobs(digest),
  size INTEGER NOT NULL,
  PRIMARY KEY (project_id, path)
);
CREATE TABLE IF NOT EXISTS scan_jobs (
  id INTEGER PRIMARY KEY,
  project_id INTEGER NOT NULL REFERENCES projects(id) ON DELETE CASCADE,
  engine TEXT NOT NULL,
  types TEXT NOT NULL,
  status TEXT NOT NULL,
  error TEXT,
  created_at INTEGER NOT NULL,
  finished_at INTEGER,
  report_id INTEGER
);
CREATE TABLE IF NOT EXISTS reports (
  id INTEGER PRIMARY KEY,
  scan_id INTEGER NOT NULL UNIQUE REFERENCES scan_jobs(id) ON DELETE CASCADE,
  body TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS feedback (
  id INTEGER PRIMARY KEY,
  user_id INTEGER NOT NULL REFERENCES users(id),
  text TEXT NOT NULL,
  created_at INTEGER NOT NULL
);
)sql";

}  // namespace

Store::Store(const std::string& path, Clock clock) : clock_(std::move(clock)) {
    if (!clock_) clock_ = system_now;
    const int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
    if (sqlite3_open_v2(path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
        const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        db_ = nullptr;
        throw IoError("cannot open store " + path + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    exec("PRAGMA foreign_keys = ON");
    if (path != ":memory:") exec("PRAGMA journal_mode = WAL");
    exec(kSchema);
}

Store::~Store() { sqlite3_close(db_); }

void Store::exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        throw IoError("sqlite: " + msg);
    }
}

User Store::create_user(std::string_view username, std::string_view password) {
    if (!valid_username(username)) {
        throw ValidationError("username must be 3 to 64 characters of letters, digits, '_', '.' or '-'");
    }
    if (password.size() < 8 || password.size() > 1024) {
        throw ValidationError("password must be 8 to 1024 bytes long");
    }
    const auto salt = crypto::random_bytes(kSaltBytes);
    const auto hash = crypto::pbkdf2_sha256(password, salt, kPasswordIterations, kHashBytes);
    std::lock_guard lock(mu_);
    {
        Statement q(db_, "SELECT 1 FROM users WHERE username = ?");
        if (q.bind(1, username).step()) throw DuplicateUsername("username is taken");
    }
    User u{0, std::string(username), now()};
    Statement ins(db_, "INSERT INTO users (username, password_salt, password_hash, created_at) VALUES (?, ?, ?, ?)");
    ins.bind(1, username).bind_blob(2, salt).bind_blob(3, hash).bind(4, u.created_at).run();
    u.id = sqlite3_last_insert_rowid(db_);
    return u;
}

User Store::get_user(Id id) {
    std::lock_guard lock(mu_);
    Statement q(db_, "SELECT username, created_at FROM users WHERE id = ?");
    if (!q.bind(1, id).step()) throw NotFound("user " + std::to_string(id));
    return {id, q.text(0), q.integer(1)};
}

Session Store::verify_login(std::string_view username, std::string_view password) {
    std::optional<Id> user_id;
    std::string salt, stored;
    {
        std::lock_guard lock(mu_);
        Statement q(db_, "SELECT id, password_salt, password_hash FROM users WHERE username = ?");
        if (q.bind(1, username).step()) {
            user_id = q.integer(0);
            salt = q.blob(1);
            stored = q.blob(2);
        }
    }
    // Hash outside the lock; always hash so timing does not reveal whether
    // the user exists.
    std::vector<std::uint8_t> salt_bytes(salt.begin(), salt.end());
    if (!user_id) salt_bytes = decoy_salt();
    const auto hash = crypto::pbkdf2_sha256(password, salt_bytes, kPasswordIterations, kHashBytes);
    const std::vector<std::uint8_t> expected(stored.begin(), stored.end());
    const bool ok = user_id && crypto::constant_time_equal(hash, expected);
    if (!ok) throw AuthFailed("invalid username or password");

    const auto raw = crypto::random_bytes(32);
    Session s{crypto::to_hex(raw), *user_id, now() + kSessionTtlSeconds};
    std::lock_guard lock(mu_);
    Statement ins(db_, "INSERT INTO sessions (token_hash, user_id, expires_at) VALUES (?, ?, ?)");
    ins.bind(1, crypto::sha256_hex(s.token)).bind(2, s.user_id).bind(3, s.expires_at).run();
    return s;
}

std::optional<User> Store::authenticate(std::string_view token) {
    if (token.empty()) return std::nullopt;
    std::lock_guard lock(mu_);
    Statement q(db_,
                "SELECT u.id, u.username, u.created_at FROM sessions s JOIN users u ON u.id = s.user_id "
                "WHERE s.token_hash = ? AND s.expires_at > ?");
    if (!q.bind(1, crypto::sha256_hex(token)).bind(2, now()).step()) return std::nullopt;
    return User{q.integer(0), q.text(1), q.integer(2)};
}

void Store::logout(std::string_view token) {
    std::lock_guard lock(mu_);
    Statement(db_, "DELETE FROM sessions WHERE token_hash = ?").bind(1, crypto::sha256_hex(token)).run();
}

Project Store::create_project(Id owner_id, std::string_view name) {
    if (name.empty() || utf8_length(name) > 200) throw ValidationError("project name must be 1 to 200 characters");
    std::lock_guard lock(mu_);
    Project p{0, owner_id, std::string(name), std::nullopt, "", now()};
    Statement ins(db_, "INSERT INTO projects (owner_id, name, created_at) VALUES (?, ?, ?)");
    ins.bind(1, owner_id).bind(2, name).bind(3, p.created_at).run();
    p.id = sqlite3_last_insert_rowid(db_);
    return p;
}

namespace {

template <typename Stmt>
Project project_row(const Stmt& q) {
    Project p;
    p.id = q.integer(0);
    p.owner_id = q.integer(1);
    p.name = q.text(2);
    if (!q.is_null(3)) p.source_kind = q.text(3) == "upload" ? SourceKind::upload : SourceKind::repository;
    p.source_ref = q.text(4);
    p.created_at = q.integer(5);
    return p;
}

}  // namespace

Project Store::get_project(Id id) {
    std::lock_guard lock(mu_);
    Statement q(db_, "SELECT id, owner_id, name, source_kind, source_ref, created_at FROM projects WHERE id = ?");
    if (!q.bind(1, id).step()) throw NotFound("project " + std::to_string(id));
    return project_row(q);
}

std::vector<Project> Store::list_projects(Id owner_id) {
    std::lock_guard lock(mu_);
    Statement q(db_,
                "SELECT id, owner_id, name, source_kind, source_ref, created_at FROM projects "
                "WHERE owner_id = ? ORDER BY id");
    q.bind(1, owner_id);
    std::vector<Project> out;
    while (q.step()) out.push_back(project_row(q));
    return out;
}

void Store::delete_project(Id id) {
    std::lock_guard lock(mu_);
    Statement del(db_, "DELETE FROM projects WHERE id = ?");
    del.bind(1, id).run();
    if (sqlite3_changes(db_) == 0) throw NotFound("project " + std::to_string(id));
}

std::vector<FileEntry> Store::set_project_sources(Id project_id, SourceKind kind, std::string_view ref,
                                                  std::span<const SourceFile> files) {
    std::map<std::string, const SourceFile*> by_path;
    for (const SourceFile& f : files) by_path[f.path] = &f;
    std::vector<FileEntry> manifest;
    for (const auto& [path, f] : by_path) manifest.push_back({path, f->bytes.size(), crypto::sha256_hex(f->bytes)});

    std::lock_guard lock(mu_);
    Transaction tx(db_);
    Statement upd(db_, "UPDATE projects SET source_kind = ?, source_ref = ? WHERE id = ?");
    upd.bind(1, to_string(kind)).bind(2, ref).bind(3, project_id).run();
    if (sqlite3_changes(db_) == 0) throw NotFound("project " + std::to_string(project_id));
    Statement(db_, "DELETE FROM project_files WHERE project_id = ?").bind(1, project_id).run();
    for (const FileEntry& e : manifest) {
        Statement(db_, "INSERT OR IGNORE INTO blobs (digest, data) VALUES (?, ?)")
            .bind(1, e.digest)
            .bind_blob(2, std::string_view(by_path.at(e.path)->bytes))
            .run();
        Statement(db_, "INSERT INTO project_files (project_id, path, digest, size) VALUES (?, ?, ?, ?)")
            .bind(1, project_id)
            .bind(2, e.path)
            .bind(3, e.digest)
            .bind(4, static_cast<std::int64_t>(e.size))
            .run();
    }
    tx.commit();
    return manifest;
}

std::vector<FileEntry> Store::project_files(Id project_id) {
    std::lock_guard lock(mu_);
    Statement q(db_, "SELECT path, size, digest FROM project_files WHERE project_id = ? ORDER BY path");
    q.bind(1, project_id);
    std::vector<FileEntry> out;
    while (q.step()) out.push_back({q.text(0), static_cast<std::size_t>(q.integer(1)), q.text(2)});
    return out;
}

std::vector<SourceFile> Store::load_sources(Id project_id) {
    std::lock_guard lock(mu_);
    Statement q(db_,
                "SELECT f.path, b.data FROM project_files f JOIN blobs b ON b.digest = f.digest "
                "WHERE f.project_id = ? ORDER BY f.path");
    q.bind(1, project_id);
    std::vector<SourceFile> out;
    while (q.step()) out.push_back({q.text(0), q.blob(1)});
    return out;
}

ScanJob Store::create_job(Id project_id, Engine engine, std::span<const VulnType> types) {
    if (types.empty()) throw ValidationError("at least one vulnerability type is required");
    std::lock_guard lock(mu_);
    ScanJob j;
    j.project_id = project_id;
    j.engine = engine;
    j.types.assign(types.begin(), types.end());
    j.created_at = now();
    Statement ins(db_,
                  "INSERT INTO scan_jobs (project_id, engine, types, status, created_at) VALUES (?, ?, ?, 'queued', ?)");
    ins.bind(1, project_id).bind(2, to_string(engine)).bind(3, join_types(types)).bind(4, j.created_at).run();
    j.id = sqlite3_last_insert_rowid(db_);
    return j;
}

namespace {

constexpr const char* kJobColumns =
    "SELECT id, project_id, engine, types, status, error, created_at, finished_at, report_id FROM scan_jobs ";

template <typename Stmt>
ScanJob job_row(const Stmt& q) {
    ScanJob j;
    j.id = q.integer(0);
    j.project_id = q.integer(1);
    j.engine = q.text(2) == "llm" ? Engine::llm : Engine::bilstm;
    j.types = split_types(q.text(3));
    j.status = parse_status(q.text(4));
    if (!q.is_null(5)) j.error = q.text(5);
    j.created_at = q.integer(6);
    if (!q.is_null(7)) j.finished_at = q.integer(7);
    if (!q.is_null(8)) j.report_id = q.integer(8);
    return j;
}

}  // namespace

ScanJob Store::read_job(Id id) {
    Statement q(db_, (std::string(kJobColumns) + "WHERE id = ?").c_str());
    if (!q.bind(1, id).step()) throw NotFound("scan " + std::to_string(id));
    return job_row(q);
}

ScanJob Store::get_job(Id id) {
    std::lock_guard lock(mu_);
    return read_job(id);
}

std::vector<ScanJob> Store::jobs_with_status(JobStatus status) {
    std::lock_guard lock(mu_);
    Statement q(db_, (std::string(kJobColumns) + "WHERE status = ? ORDER BY id").c_str());
    q.bind(1, to_string(status));
    std::vector<ScanJob> out;
    while (q.step()) out.push_back(job_row(q));
    return out;
}

ScanJob Store::update_job_status(Id id, JobStatus next, std::optional<std::string> error) {
    std::lock_guard lock(mu_);
    Transaction tx(db_);
    ScanJob j = read_job(id);
    if (!is_legal_transition(j.status, next) || next == JobStatus::done) {
        throw IllegalTransition(std::string(to_string(j.status)) + " -> " + std::string(to_string(next)));
    }
    j.status = next;
    if (next == JobStatus::failed) {
        j.error = error.value_or("scan failed");
        j.finished_at = now();
    }
    Statement upd(db_, "UPDATE scan_jobs SET status = ?, error = ?, finished_at = ? WHERE id = ?");
    upd.bind(1, to_string(j.status));
    if (j.error) upd.bind(2, *j.error); else upd.bind_null(2);
    if (j.finished_at) upd.bind(3, *j.finished_at); else upd.bind_null(3);
    upd.bind(4, id).run();
    tx.commit();
    return j;
}

ScanJob Store::complete_job(Id id, std::string_view report_body) {
    std::lock_guard lock(mu_);
    Transaction tx(db_);
    ScanJob j = read_job(id);
    if (!is_legal_transition(j.status, JobStatus::done)) {
        throw IllegalTransition(std::string(to_string(j.status)) + " -> done");
    }
    // One report per scan, so the report shares the scan's id.
    Statement(db_, "INSERT INTO reports (id, scan_id, body) VALUES (?, ?, ?)")
        .bind(1, id)
        .bind(2, id)
        .bind(3, report_body)
        .run();
    j.report_id = id;
    j.status = JobStatus::done;
    j.finished_at = now();
    Statement(db_, "UPDATE scan_jobs SET status = 'done', finished_at = ?, report_id = ? WHERE id = ?")
        .bind(1, *j.finished_at)
        .bind(2, *j.report_id)
        .bind(3, id)
        .run();
    tx.commit();
    return j;
}

StoredReport Store::get_report(Id id) {
    std::lock_guard lock(mu_);
    Statement q(db_, "SELECT scan_id, body FROM reports WHERE id = ?");
    if (!q.bind(1, id).step()) throw NotFound("report " + std::to_string(id));
    return {id, q.integer(0), q.text(1)};
}

Feedback Store::add_feedback(Id user_id, std::string_view text) {
    if (text.empty() || utf8_length(text) > kMaxFeedbackChars) {
        throw ValidationError("feedback must be 1 to 4000 characters");
    }
    std::lock_guard lock(mu_);
    Feedback f{0, user_id, std::string(text), now()};
    Statement(db_, "INSERT INTO feedback (user_id, text, created_at) VALUES (?, ?, ?)")
        .bind(1, user_id)
        .bind(2, text)
        .bind(3, f.created_at)
        .run();
    f.id = sqlite3_last_insert_rowid(db_);
    return f;
}

std::vector<Feedback> Store::list_feedback(Id user_id) {
    std::lock_guard lock(mu_);
    Statement q(db_, "SELECT id, text, created_at FROM feedback WHERE user_id = ? ORDER BY id");
    q.bind(1, user_id);
    std::vector<Feedback> out;
    while (q.step()) out.push_back({q.integer(0), user_id, q.text(1), q.integer(2)});
    return out;
}

}  // namespace pyguard
