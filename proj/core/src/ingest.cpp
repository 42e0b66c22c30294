#include "pyguard/errors.hpp"
#include "pyguard/ingest.hpp"

#include <fcntl.h>
#include <fnmatch.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

extern char** environ;

namespace pyguard {

namespace fs = std::filesystem;

void check_repository_url(std::string_view url, const RepositoryConfig& config) {
    const std::string u(url);
    if (!u.starts_with("https://") || u.size() <= 8) throw UrlNotAllowed("only https repository URLs are accepted");
    if (u.find_first_of(" \t\r\n") != std::string::npos) throw UrlNotAllowed("repository URL contains whitespace");
    if (config.allowlist.empty()) return;
    for (const std::string& pattern : config.allowlist) {
        if (fnmatch(pattern.c_str(), u.c_str(), 0) == 0) return;
    }
    throw UrlNotAllowed("repository URL is not on the allowlist: " + u);
}

namespace {

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "pyguard-clone-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw FetchFailed("cannot create a temporary directory");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string last_line(std::string text) {
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    const std::size_t nl = text.rfind('\n');
    return nl == std::string::npos ? text : text.substr(nl + 1);
}

// Runs git with prompts disabled; stderr goes to `log`.
int run_git(const RepositoryConfig& config, const std::vector<std::string>& args, const fs::path& log) {
    std::vector<std::string> env;
    for (char** e = environ; *e; ++e) {
        std::string_view v(*e);
        if (!v.starts_with("GIT_TERMINAL_PROMPT=") && !v.starts_with("GIT_ASKPASS=")) env.emplace_back(v);
    }
    env.emplace_back("GIT_TERMINAL_PROMPT=0");
    env.emplace_back("GIT_ASKPASS=/bin/true");
    std::vector<char*> envp;
    for (auto& s : env) envp.push_back(s.data());
    envp.push_back(nullptr);

    std::vector<std::string> argv_store{config.git_binary};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    argv.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
    posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, "/dev/null", O_WRONLY, 0);
    posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    pid_t pid = 0;
    const int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), envp.data());
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) throw FetchFailed("cannot run " + config.git_binary);

    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(static_cast<long long>(config.timeout_seconds * 1000.0));
    int status = 0;
    for (;;) {
        const pid_t done = waitpid(pid, &status, WNOHANG);
        if (done == pid) break;
        if (done < 0) throw FetchFailed("lost track of the git process");
        if (std::chrono::steady_clock::now() > deadline) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            throw FetchFailed("git clone timed out");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

std::vector<SourceFile> fetch_repository(std::string_view url, const RepositoryConfig& config) {
    check_repository_url(url, config);
    std::string effective(url);
    for (const auto& [prefix, replacement] : config.rewrites) {
        if (effective.starts_with(prefix)) {
            effective = replacement + effective.substr(prefix.size());
            break;
        }
    }

    TempDir tmp;
    const fs::path checkout = tmp.path() / "tree";
    const fs::path log = tmp.path() / "git.log";
    const int code = run_git(config,
                             {"clone", "--depth", "1", "--quiet", "--no-tags", "--single-branch", "--",
                              effective, checkout.string()},
                             log);
    if (code != 0) {
        std::string detail = last_line(read_file(log));
        throw FetchFailed(detail.empty() ? "git clone failed" : detail);
    }

    std::vector<SourceFile> files;
    std::size_t total = 0;
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(checkout, fs::directory_options::none, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) throw FetchFailed("cannot walk the cloned tree: " + ec.message());
        const fs::directory_entry& entry = *it;
        if (entry.path().filename() == ".git") {
            if (entry.is_directory()) it.disable_recursion_pending();
            continue;
        }
        if (entry.is_symlink() || !entry.is_regular_file()) continue;
        total += entry.file_size();
        if (total > config.max_total_bytes) {
            throw ArchiveTooLarge("repository exceeds " + std::to_string(config.max_total_bytes) + " bytes");
        }
        files.push_back({fs::relative(entry.path(), checkout).generic_string(), read_file(entry.path())});
    }
    std::sort(files.begin(), files.end(), [](const SourceFile& a, const SourceFile& b) { return a.path < b.path; });
    return files;
}

}  // namespace pyguard
