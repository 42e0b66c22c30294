#pragma once

#include "pyguard/detector.hpp"
#include "pyguard/vuln_type.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pyguard {

enum class Engine { bilstm, llm };

std::string_view to_string(Engine engine) noexcept;
std::optional<Engine> parse_engine(std::string_view name) noexcept;

struct ScanReport {
    std::string id;       // empty outside the service
    std::string scan_id;  // empty outside the service
    Engine engine = Engine::bilstm;
    std::vector<VulnType> types;
    std::string generated_at;  // ISO-8601 UTC
    std::vector<Finding> findings;
    std::map<VulnType, std::size_t> summary;      // every requested type
    std::map<std::string, std::size_t> per_file;  // every scanned file
    std::size_t files_scanned = 0;
    std::vector<std::string> skipped_files;
    std::vector<std::string> degraded_files;
    std::vector<std::string> warnings;
};

/// Builds the report body from a scan; the summary is recomputed from the
/// finding list so the two can never disagree.
ScanReport make_report(ScanResult result, Engine engine, std::vector<VulnType> types,
                       std::string generated_at);

/// Stable identifier of a finding within a report: 16 hex digits of a
/// SHA-256 over its location, type and origin.
std::string finding_id(const Finding& f);

std::string report_to_json(const ScanReport& report);

/// Throws FormatError when the text is not a report produced by
/// report_to_json.
ScanReport report_from_json(std::string_view text);

/// Self-contained HTML page: findings grouped by type, each with a
/// line-numbered snippet whose rows carry anchors "<finding id>-L<line>".
std::string report_to_html(const ScanReport& report);

std::string html_escape(std::string_view text);

}  // namespace pyguard
