#include "json.hpp"
#include "pyguard/errors.hpp"
#include "pyguard/report.hpp"

#include <gtest/gtest.h>

namespace pyguard {
namespace {

Finding finding(VulnType t, std::string path, std::size_t start, std::size_t end, int line) {
    Finding f;
    f.vuln_type = t;
    f.file_path = std::move(path);
    f.byte_start = start;
    f.byte_end = end;
    f.line_start = line;
    f.line_end = line + 1;
    f.score = 0.875;
    f.snippet = "q = \"<b>\" + x\nrun(q)\n";
    return f;
}

ScanReport sample_report() {
    ScanResult r;
    r.findings = {finding(VulnType::xss, "a.py", 0, 10, 1), finding(VulnType::xss, "b.py", 5, 9, 3),
                  finding(VulnType::sql_injection, "b.py", 20, 30, 7)};
    r.per_file = {{"a.py", 0}, {"b.py", 0}, {"c.py", 0}};
    r.files_scanned = 3;
    r.skipped_files = {"notes.txt"};
    std::vector<VulnType> types{VulnType::sql_injection, VulnType::xss, VulnType::open_redirect};
    return make_report(r, Engine::bilstm, types, "2026-01-02T03:04:05Z");
}

TEST(Report, SummaryRecomputedFromFindings) {
    const ScanReport r = sample_report();
    EXPECT_EQ(r.summary.at(VulnType::xss), 2u);
    EXPECT_EQ(r.summary.at(VulnType::sql_injection), 1u);
    EXPECT_EQ(r.summary.at(VulnType::open_redirect), 0u);
    EXPECT_EQ(r.per_file.at("a.py"), 1u);
    EXPECT_EQ(r.per_file.at("b.py"), 2u);
    EXPECT_EQ(r.per_file.at("c.py"), 0u);
}

TEST(Report, JsonShape) {
    ScanReport r = sample_report();
    r.id = "12";
    r.scan_id = "12";
    const auto j = nlohmann::json::parse(report_to_json(r));
    EXPECT_EQ(j["engine"], "bilstm");
    EXPECT_EQ(j["summary"]["total"], 3);
    EXPECT_EQ(j["summary"]["by_type"]["xss"], 2);
    EXPECT_EQ(j["summary"]["by_type"]["open_redirect"], 0);
    EXPECT_EQ(j["summary"]["files_scanned"], 3);
    EXPECT_EQ(j["summary"]["files_skipped"], 1);
    EXPECT_EQ(j["findings"].size(), 3u);
    EXPECT_EQ(j["findings"][0]["id"], finding_id(r.findings[0]));
    EXPECT_EQ(j["findings"][0]["origin"], "bilstm");
    EXPECT_EQ(j["id"], "12");
}

TEST(Report, JsonRoundTrip) {
    ScanReport r = sample_report();
    r.warnings = {"a.py: something"};
    r.findings[1].explanation = "explained";
    r.findings[1].origin = FindingOrigin::llm;
    const std::string text = report_to_json(r);
    EXPECT_EQ(report_to_json(report_from_json(text)), text);
}

TEST(Report, ParseErrors) {
    EXPECT_THROW(report_from_json("nope"), FormatError);
    EXPECT_THROW(report_from_json("{}"), FormatError);
    auto j = nlohmann::json::parse(report_to_json(sample_report()));
    j["findings"][0]["vuln_type"] = "csrf";
    EXPECT_THROW(report_from_json(j.dump()), FormatError);
}

TEST(Report, FindingIdStableAndDistinct) {
    const Finding a = finding(VulnType::xss, "a.py", 0, 10, 1);
    Finding b = a;
    b.score = 0.1;
    EXPECT_EQ(finding_id(a), finding_id(b));
    EXPECT_EQ(finding_id(a).size(), 16u);
    b.byte_end = 11;
    EXPECT_NE(finding_id(a), finding_id(b));
    b = a;
    b.origin = FindingOrigin::llm;
    EXPECT_NE(finding_id(a), finding_id(b));
}

TEST(Report, HtmlEscapesAndAnchors) {
    const ScanReport r = sample_report();
    const std::string html = report_to_html(r);
    EXPECT_EQ(html.find("<b>"), std::string::npos);
    EXPECT_NE(html.find("&lt;b&gt;"), std::string::npos);
    EXPECT_NE(html.find(finding_id(r.findings[0]) + "-L1"), std::string::npos);
    EXPECT_NE(html.find("notes.txt"), std::string::npos);
    EXPECT_EQ(html_escape("<a href=\"x\">&'"), "&lt;a href=&quot;x&quot;&gt;&amp;&#39;");
}

TEST(Engine, Names) {
    EXPECT_EQ(parse_engine("bilstm"), Engine::bilstm);
    EXPECT_EQ(parse_engine("llm"), Engine::llm);
    EXPECT_EQ(parse_engine("BILSTM"), std::nullopt);
}

}  // namespace
}  // namespace pyguard
