#include "pyguard/report.hpp"

#include "json.hpp"
#include "pyguard/digest.hpp"
#include "pyguard/errors.hpp"

#include <cstdio>
#include <sstream>

namespace pyguard {

using nlohmann::json;

std::string_view to_string(Engine engine) noexcept {
    return engine == Engine::bilstm ? "bilstm" : "llm";
}

std::optional<Engine> parse_engine(std::string_view name) noexcept {
    if (name == "bilstm") return Engine::bilstm;
    if (name == "llm") return Engine::llm;
    return std::nullopt;
}

ScanReport make_report(ScanResult result, Engine engine, std::vector<VulnType> types,
                       std::string generated_at) {
    summarize(result, types);
    ScanReport r;
    r.engine = engine;
    r.types = std::move(types);
    r.generated_at = std::move(generated_at);
    r.findings = std::move(result.findings);
    r.summary = std::move(result.per_type);
    r.per_file = std::move(result.per_file);
    r.files_scanned = result.files_scanned;
    r.skipped_files = std::move(result.skipped_files);
    r.degraded_files = std::move(result.degraded_files);
    return r;
}

std::string finding_id(const Finding& f) {
    std::ostringstream key;
    key << f.file_path << '\0' << f.byte_start << '\0' << f.byte_end << '\0' << to_string(f.vuln_type)
        << '\0' << to_string(f.origin);
    return crypto::sha256_hex(key.str()).substr(0, 16);
}

namespace {

json finding_json(const Finding& f) {
    return {{"id", finding_id(f)},
            {"vuln_type", std::string(to_string(f.vuln_type))},
            {"file_path", f.file_path},
            {"byte_start", f.byte_start},
            {"byte_end", f.byte_end},
            {"line_start", f.line_start},
            {"line_end", f.line_end},
            {"score", f.score},
            {"snippet", f.snippet},
            {"origin", std::string(to_string(f.origin))},
            {"explanation", f.explanation}};
}

template <typename T>
T field(const json& j, const char* key) {
    if (!j.contains(key)) throw FormatError(std::string("report field missing: ") + key);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(std::string("report field has the wrong type: ") + key);
    }
}

VulnType type_field(const json& j, const char* key) {
    auto t = parse_vuln_type(field<std::string>(j, key));
    if (!t) throw FormatError("unknown vulnerability type in report");
    return *t;
}

}  // namespace

std::string report_to_json(const ScanReport& r) {
    json by_type = json::object();
    for (const auto& [t, n] : r.summary) by_type[std::string(to_string(t))] = n;
    json by_file = json::object();
    for (const auto& [path, n] : r.per_file) by_file[path] = n;
    json types = json::array();
    for (VulnType t : r.types) types.push_back(std::string(to_string(t)));
    json findings = json::array();
    for (const Finding& f : r.findings) findings.push_back(finding_json(f));

    json j = {{"engine", std::string(to_string(r.engine))},
              {"types", types},
              {"generated_at", r.generated_at},
              {"summary",
               {{"total", r.findings.size()},
                {"by_type", by_type},
                {"by_file", by_file},
                {"files_scanned", r.files_scanned},
                {"files_skipped", r.skipped_files.size()}}},
              {"findings", findings},
              {"skipped_files", r.skipped_files},
              {"degraded_files", r.degraded_files},
              {"warnings", r.warnings}};
    if (!r.id.empty()) j["id"] = r.id;
    if (!r.scan_id.empty()) j["scan_id"] = r.scan_id;
    return j.dump();
}

ScanReport report_from_json(std::string_view text) {
    const json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw FormatError("report is not a JSON object");
    ScanReport r;
    r.id = j.value("id", std::string{});
    r.scan_id = j.value("scan_id", std::string{});
    auto engine = parse_engine(field<std::string>(j, "engine"));
    if (!engine) throw FormatError("unknown engine in report");
    r.engine = *engine;
    for (const auto& t : field<std::vector<std::string>>(j, "types")) {
        auto vt = parse_vuln_type(t);
        if (!vt) throw FormatError("unknown vulnerability type in report");
        r.types.push_back(*vt);
    }
    r.generated_at = field<std::string>(j, "generated_at");
    const json summary = field<json>(j, "summary");
    for (const auto& [name, n] : field<std::map<std::string, std::size_t>>(summary, "by_type")) {
        auto vt = parse_vuln_type(name);
        if (!vt) throw FormatError("unknown vulnerability type in report");
        r.summary[*vt] = n;
    }
    r.per_file = field<std::map<std::string, std::size_t>>(summary, "by_file");
    r.files_scanned = field<std::size_t>(summary, "files_scanned");
    for (const json& fj : field<json>(j, "findings")) {
        Finding f;
        f.vuln_type = type_field(fj, "vuln_type");
        f.file_path = field<std::string>(fj, "file_path");
        f.byte_start = field<std::size_t>(fj, "byte_start");
        f.byte_end = field<std::size_t>(fj, "byte_end");
        f.line_start = field<int>(fj, "line_start");
        f.line_end = field<int>(fj, "line_end");
        f.score = field<double>(fj, "score");
        f.snippet = field<std::string>(fj, "snippet");
        const auto origin = field<std::string>(fj, "origin");
        if (origin != "bilstm" && origin != "llm") throw FormatError("unknown finding origin");
        f.origin = origin == "llm" ? FindingOrigin::llm : FindingOrigin::bilstm;
        f.explanation = field<std::string>(fj, "explanation");
        r.findings.push_back(std::move(f));
    }
    r.skipped_files = field<std::vector<std::string>>(j, "skipped_files");
    r.degraded_files = field<std::vector<std::string>>(j, "degraded_files");
    r.warnings = field<std::vector<std::string>>(j, "warnings");
    return r;
}

std::string html_escape(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&#39;"; break;
        default: out += c;
        }
    }
    return out;
}

namespace {

constexpr std::string_view kStyle = R"(
body{font-family:system-ui,sans-serif;margin:2em;color:#222}
h1{font-size:1.4em}h2{font-size:1.15em;border-bottom:1px solid #ccc;padding-bottom:.2em}
table.summary td,table.summary th{padding:.2em .8em;text-align:left}
.finding{margin:1em 0;border:1px solid #ddd;border-radius:4px}
.finding header{background:#f5f5f5;padding:.4em .6em;font-size:.9em}
.finding p{margin:.4em .6em}
pre{margin:0;padding:.4em 0;overflow-x:auto;font-size:.85em}
pre span.row{display:block;padding:0 .6em}
pre span.row:target{background:#fff3b0}
pre span.ln{display:inline-block;width:4em;color:#999;user-select:none}
)";

void render_snippet(std::ostringstream& out, const Finding& f, const std::string& id) {
    out << "<pre>";
    std::string_view rest = f.snippet;
    if (rest.ends_with('\n')) rest.remove_suffix(1);
    for (int line = f.line_start;; ++line) {
        const std::size_t nl = rest.find('\n');
        out << "<span class=\"row\" id=\"" << id << "-L" << line << "\"><span class=\"ln\">" << line
            << "</span>" << html_escape(rest.substr(0, nl)) << "</span>";
        if (nl == std::string_view::npos) break;
        rest.remove_prefix(nl + 1);
    }
    out << "</pre>";
}

}  // namespace

std::string report_to_html(const ScanReport& r) {
    std::ostringstream out;
    out << "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\">"
        << "<title>Scan report" << (r.id.empty() ? "" : " " + html_escape(r.id)) << "</title>"
        << "<style>" << kStyle << "</style></head><body>\n";
    out << "<h1>Vulnerability scan report</h1>\n<p>Engine: " << to_string(r.engine)
        << " &middot; generated " << html_escape(r.generated_at) << " &middot; " << r.files_scanned
        << " file(s) scanned, " << r.skipped_files.size() << " skipped, " << r.findings.size()
        << " finding(s)</p>\n";

    out << "<table class=\"summary\"><tr><th>Type</th><th>Findings</th></tr>";
    for (const auto& [t, n] : r.summary) {
        out << "<tr><td>" << display_name(t) << "</td><td>" << n << "</td></tr>";
    }
    out << "</table>\n";

    for (const auto& [t, n] : r.summary) {
        if (n == 0) continue;
        out << "<section id=\"" << to_string(t) << "\"><h2>" << display_name(t) << " (" << n << ")</h2>\n";
        for (const Finding& f : r.findings) {
            if (f.vuln_type != t) continue;
            const std::string id = finding_id(f);
            out << "<div class=\"finding\" id=\"" << id << "\"><header>" << html_escape(f.file_path)
                << " lines " << f.line_start << "&ndash;" << f.line_end << " &middot; score ";
            char score[32];
            std::snprintf(score, sizeof score, "%.3f", f.score);
            out << score << " &middot; " << to_string(f.origin) << "</header>";
            if (!f.explanation.empty()) out << "<p>" << html_escape(f.explanation) << "</p>";
            render_snippet(out, f, id);
            out << "</div>\n";
        }
        out << "</section>\n";
    }
    if (!r.skipped_files.empty()) {
        out << "<h2>Skipped files</h2><ul>";
        for (const auto& p : r.skipped_files) out << "<li>" << html_escape(p) << "</li>";
        out << "</ul>\n";
    }
    if (!r.warnings.empty()) {
        out << "<h2>Warnings</h2><ul>";
        for (const auto& w : r.warnings) out << "<li>" << html_escape(w) << "</li>";
        out << "</ul>\n";
    }
    out << "</body></html>\n";
    return out.str();
}

}  // namespace pyguard
