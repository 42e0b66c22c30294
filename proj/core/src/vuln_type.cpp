#include "pyguard/vuln_type.hpp"

namespace pyguard {

std::string_view to_string(VulnType type) noexcept {
    switch (type) {
        case VulnType::sql_injection: return "sql_injection";
        case VulnType::xss: return "xss";
        case VulnType::command_injection: return "command_injection";
        case VulnType::xsrf: return "xsrf";
        case VulnType::path_disclosure: return "path_disclosure";
        case VulnType::remote_code_execution: return "remote_code_execution";
        case VulnType::open_redirect: return "open_redirect";
    }
    return "unknown";
}

std::optional<VulnType> parse_vuln_type(std::string_view name) noexcept {
    for (VulnType t : kAllVulnTypes) {
        if (to_string(t) == name) return t;
    }
    return std::nullopt;
}

std::string_view display_name(VulnType type) noexcept {
    switch (type) {
        case VulnType::sql_injection: return "SQL Injection";
        case VulnType::xss: return "Cross-Site Scripting (XSS)";
        case VulnType::command_injection: return "Command Injection";
        case VulnType::xsrf: return "Cross-Site Request Forgery (XSRF)";
        case VulnType::path_disclosure: return "Path Disclosure";
        case VulnType::remote_code_execution: return "Remote Code Execution";
        case VulnType::open_redirect: return "Open Redirect";
    }
    return "Unknown";
}

}  // namespace pyguard
