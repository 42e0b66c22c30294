#pragma once

#include "pyguard/vuln_type.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pyguard {

enum class SampleSource { synthetic, external };

struct LabeledSample {
    std::string code;
    int label = 0;  // 1 = vulnerable
    VulnType vuln_type = VulnType::sql_injection;
    SampleSource source = SampleSource::synthetic;

    bool operator==(const LabeledSample&) const = default;
};

/**
 * Balanced synthetic corpus for one vulnerability type: n/2 snippets that
 * route request data into a type-specific sink and n/2 that use the safe
 * counterpart (parameterized query, list-form subprocess, escaped output,
 * ...). Identifiers, filler statements and template choice are drawn from
 * `seed`; output is a pure function of (type, n, seed). Positives and
 * negatives alternate.
 *
 * Throws InvalidCount unless n is even and >= 2.
 */
std::vector<LabeledSample> generate(VulnType type, std::size_t n, std::uint64_t seed);

/// One JSON object per line: {"code","label","type","source"}.
void save_jsonl(const std::vector<LabeledSample>& samples, const std::filesystem::path& path);

/// Blank lines are skipped and unknown fields ignored. Throws IoError, or
/// SchemaError carrying the 1-based number of the first invalid line.
std::vector<LabeledSample> load_jsonl(const std::filesystem::path& path);

std::string to_jsonl_line(const LabeledSample& sample);

}  // namespace pyguard
