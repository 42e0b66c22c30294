#pragma once

#include "pyguard/detector.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace pyguard::testing {

// Checks windows(n, spec) against the tiling rules; returns an empty string
// when everything holds, otherwise a description of the first violation.
inline std::string check_windows(std::size_t n, const WindowSpec& spec) {
    const std::vector<TokenRange> ws = windows(n, spec);
    if (n == 0) return ws.empty() ? "" : "windows for an empty stream";
    if (n <= spec.length) {
        return ws.size() == 1 && ws[0] == TokenRange{0, n} ? "" : "short stream not a single window";
    }
    std::vector<int> covered(n, 0);
    for (std::size_t i = 0; i < ws.size(); ++i) {
        const TokenRange& w = ws[i];
        if (w.end - w.start != spec.length) return "window of the wrong length";
        if (w.end > n) return "window past the end";
        const bool regular = w.start == i * spec.stride;
        const bool anchored = i + 1 == ws.size() && w.end == n;
        if (!regular && !anchored) return "window off the stride grid";
        if (i > 0 && w.start <= ws[i - 1].start) return "starts not increasing";
        for (std::size_t t = w.start; t < w.end; ++t) covered[t] = 1;
    }
    if (std::find(covered.begin(), covered.end(), 0) != covered.end()) return "token not covered";
    // Every grid start that fits must be present.
    const std::size_t regular = (n - spec.length) / spec.stride + 1;
    for (std::size_t i = 0; i < regular; ++i) {
        if (i >= ws.size() || ws[i].start != i * spec.stride) return "missing grid window";
    }
    const bool needs_anchor = (regular - 1) * spec.stride + spec.length < n;
    if (ws.size() != regular + (needs_anchor ? 1 : 0)) return "wrong window count";
    return "";
}

// Connected components of the "overlapping or touching" graph, by union-find.
inline std::vector<ScoredRange> components(const std::vector<ScoredRange>& in) {
    std::vector<std::size_t> parent(in.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < in.size(); ++i) {
        for (std::size_t j = i + 1; j < in.size(); ++j) {
            if (in[i].range.start <= in[j].range.end && in[j].range.start <= in[i].range.end) {
                parent[find(i)] = find(j);
            }
        }
    }
    std::vector<ScoredRange> out;
    std::vector<std::size_t> slot(in.size(), SIZE_MAX);
    for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t r = find(i);
        if (slot[r] == SIZE_MAX) {
            slot[r] = out.size();
            out.push_back(in[i]);
            continue;
        }
        ScoredRange& c = out[slot[r]];
        c.range.start = std::min(c.range.start, in[i].range.start);
        c.range.end = std::max(c.range.end, in[i].range.end);
        c.score = std::max(c.score, in[i].score);
    }
    std::sort(out.begin(), out.end(),
              [](const ScoredRange& a, const ScoredRange& b) { return a.range.start < b.range.start; });
    return out;
}

// Merges every subset of `ws` (scores drawn from `seed`) and compares with
// the component oracle. Returns the number of subsets checked, or -1 on the
// first mismatch.
inline long long check_all_subsets(const std::vector<TokenRange>& ws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> scores(ws.size());
    for (double& s : scores) s = 0.5 + static_cast<double>(rng() % 500) / 1000.0;
    const std::uint64_t subsets = std::uint64_t{1} << ws.size();
    std::vector<ScoredRange> chosen;
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        chosen.clear();
        for (std::size_t i = 0; i < ws.size(); ++i) {
            if (mask >> i & 1) chosen.push_back({ws[i], scores[i]});
        }
        const std::vector<ScoredRange> expected = components(chosen);
        const std::vector<ScoredRange> got = merge_ranges(chosen);
        if (got.size() != expected.size()) return -1;
        for (std::size_t k = 0; k < got.size(); ++k) {
            if (!(got[k].range == expected[k].range) || got[k].score != expected[k].score) return -1;
        }
    }
    return static_cast<long long>(subsets);
}

}  // namespace pyguard::testing
