#pragma once

#include "pyguard/detector.hpp"

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pyguard {

inline constexpr std::size_t kMaxUploadBytes = 32u << 20;

struct ZipLimits {
    std::size_t max_archive_bytes = kMaxUploadBytes;
    std::size_t max_total_bytes = kMaxUploadBytes;  // sum of uncompressed sizes
    std::size_t max_entries = 20000;
};

/**
 * Canonical relative form of an archive entry name: backslashes become '/',
 * "." and empty components are dropped. Throws UnsafePath for absolute paths,
 * drive letters, ".." components and embedded NUL bytes.
 */
std::string normalize_entry_path(std::string_view name);

/**
 * Regular files of a zip archive (stored or deflated entries), sorted by
 * path. Directory entries are skipped.
 *
 * Throws ArchiveTooLarge, UnsafePath (including symlink entries) or
 * BadArchive for anything malformed, encrypted, zip64, duplicated or failing
 * its CRC.
 */
std::vector<SourceFile> read_zip(std::string_view archive, const ZipLimits& limits = {});

/// read_zip with the default upload limits.
std::vector<SourceFile> unpack_upload(std::string_view archive);

struct RepositoryConfig {
    /// fnmatch patterns a repository URL must match, e.g.
    /// "https://github.com/*". Empty allows every https URL.
    std::vector<std::string> allowlist;

    /// (prefix, replacement) pairs applied to the URL after the allowlist
    /// check and before cloning; used to point tests at local fixtures.
    std::vector<std::pair<std::string, std::string>> rewrites;

    std::size_t max_total_bytes = kMaxUploadBytes;
    double timeout_seconds = 120.0;
    std::string git_binary = "git";
};

/// Throws UrlNotAllowed unless the URL is https and matches the allowlist.
void check_repository_url(std::string_view url, const RepositoryConfig& config);

/**
 * Shallow clone (depth 1) of the default branch, returned as the working-tree
 * files sorted by path. .git and symlinks are skipped.
 *
 * Throws UrlNotAllowed, FetchFailed(detail) when git fails or times out, and
 * ArchiveTooLarge when the tree exceeds max_total_bytes.
 */
std::vector<SourceFile> fetch_repository(std::string_view url, const RepositoryConfig& config);

}  // namespace pyguard
