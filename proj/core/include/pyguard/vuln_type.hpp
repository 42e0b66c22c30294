#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace pyguard {

enum class VulnType {
    sql_injection,
    xss,
    command_injection,
    xsrf,
    path_disclosure,
    remote_code_execution,
    open_redirect,
};

inline constexpr std::array<VulnType, 7> kAllVulnTypes = {
    VulnType::sql_injection,         VulnType::xss,
    VulnType::command_injection,     VulnType::xsrf,
    VulnType::path_disclosure,       VulnType::remote_code_execution,
    VulnType::open_redirect,
};

/// Stable lowercase wire name, e.g. "sql_injection".
std::string_view to_string(VulnType type) noexcept;

/// Inverse of to_string; nullopt for anything else.
std::optional<VulnType> parse_vuln_type(std::string_view name) noexcept;

/// Human-readable title used in rendered reports.
std::string_view display_name(VulnType type) noexcept;

}  // namespace pyguard
