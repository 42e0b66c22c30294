#include "pyguard/detector.hpp"

#include "pyguard/errors.hpp"
#include "json.hpp"
#include "model_file.hpp"

#include <algorithm>
#include <tuple>

namespace pyguard {

std::string_view to_string(FindingOrigin origin) noexcept {
    return origin == FindingOrigin::bilstm ? "bilstm" : "llm";
}

void validate(const WindowSpec& spec) {
    if (spec.length == 0) throw InvalidConfig("window length must be >= 1");
    if (spec.stride == 0 || spec.stride > spec.length) {
        throw InvalidConfig("window stride must be in [1, length]");
    }
    if (!(spec.threshold > 0.0 && spec.threshold < 1.0)) {
        throw InvalidConfig("threshold must be in (0, 1)");
    }
}

std::vector<TokenRange> windows(std::size_t n, const WindowSpec& spec) {
    validate(spec);
    std::vector<TokenRange> out;
    if (n == 0) return out;
    if (n <= spec.length) {
        out.push_back({0, n});
        return out;
    }
    std::size_t start = 0;
    for (; start + spec.length <= n; start += spec.stride) out.push_back({start, start + spec.length});
    if (out.back().end < n) out.push_back({n - spec.length, n});
    return out;
}

std::vector<ScoredRange> merge_ranges(std::vector<ScoredRange> positives) {
    std::sort(positives.begin(), positives.end(), [](const ScoredRange& a, const ScoredRange& b) {
        return std::tie(a.range.start, a.range.end) < std::tie(b.range.start, b.range.end);
    });
    std::vector<ScoredRange> merged;
    for (const ScoredRange& r : positives) {
        if (!merged.empty() && r.range.start <= merged.back().range.end) {
            merged.back().range.end = std::max(merged.back().range.end, r.range.end);
            merged.back().score = std::max(merged.back().score, r.score);
        } else {
            merged.push_back(r);
        }
    }
    return merged;
}

bool is_python_path(std::string_view path) { return path.ends_with(".py"); }

namespace {

int line_at(std::string_view source, std::size_t byte) {
    byte = std::min(byte, source.size());
    return 1 + static_cast<int>(std::count(source.begin(), source.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

// Largest prefix length <= limit that does not split a UTF-8 sequence.
std::size_t utf8_prefix(std::string_view s, std::size_t limit) {
    if (s.size() <= limit) return s.size();
    std::size_t n = limit;
    while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xc0) == 0x80) --n;
    return n;
}

}  // namespace

Finding make_finding(const TokenStream& stream, std::string_view source, TokenRange range,
                     VulnType type, double score, FindingOrigin origin) {
    const auto& toks = stream.tokens;
    std::size_t begin = toks[range.start].byte_start;
    std::size_t end = begin;
    for (std::size_t i = range.start; i < range.end; ++i) end = std::max(end, toks[i].byte_end);
    if (end <= begin) {
        // Only zero-width tokens (trailing dedents / synthetic newline): widen
        // to the nearest real lexeme before them.
        for (std::size_t i = range.start; i-- > 0;) {
            if (toks[i].byte_end > toks[i].byte_start) {
                begin = toks[i].byte_start;
                end = std::max(end, toks[i].byte_end);
                break;
            }
        }
        if (end <= begin && !source.empty()) {
            begin = std::min(begin, source.size() - 1);
            end = begin + 1;
        }
    }
    Finding f;
    f.vuln_type = type;
    f.file_path = stream.file_path;
    f.byte_start = begin;
    f.byte_end = end;
    f.line_start = line_at(source, begin);
    f.line_end = std::max(f.line_start, line_at(source, end > 0 ? end - 1 : 0));
    f.score = std::clamp(score, 0.0, 1.0);
    const std::string_view body = source.substr(begin, end - begin);
    f.snippet = std::string(body.substr(0, utf8_prefix(body, kMaxSnippetBytes)));
    f.origin = origin;
    return f;
}

std::vector<Finding> scan_stream(const ModelSet& models, const EmbeddingModel& emb,
                                 const TokenStream& stream, std::string_view source,
                                 const WindowSpec& spec, std::span<const VulnType> types) {
    validate(spec);
    for (VulnType t : types) {
        auto it = models.find(t);
        if (it == models.end() || !it->second) {
            throw ModelMissing("no model for " + std::string(to_string(t)));
        }
        if (it->second->config.embedding_dim != emb.dim()) {
            throw DimensionMismatch("model for " + std::string(to_string(t)) +
                                    " does not match the embedding dimension");
        }
    }
    std::vector<Finding> findings;
    if (stream.tokens.empty()) return findings;

    const FeatureSequence features = embed(emb, stream);
    const std::vector<TokenRange> ranges = windows(stream.tokens.size(), spec);
    std::vector<FeatureSequence> slices;
    slices.reserve(ranges.size());
    for (const TokenRange& r : ranges) slices.push_back(features.slice(r.start, r.end));

    for (VulnType t : types) {
        const BiLstmModel& model = *models.at(t);
        std::vector<ScoredRange> positives;
        for (std::size_t w = 0; w < ranges.size(); ++w) {
            const double score = forward(model, slices[w]);
            if (score >= spec.threshold) positives.push_back({ranges[w], score});
        }
        for (const ScoredRange& m : merge_ranges(std::move(positives))) {
            findings.push_back(make_finding(stream, source, m.range, t, m.score, FindingOrigin::bilstm));
        }
    }
    std::sort(findings.begin(), findings.end(), [](const Finding& a, const Finding& b) {
        return std::tie(a.file_path, a.byte_start, a.vuln_type) <
               std::tie(b.file_path, b.byte_start, b.vuln_type);
    });
    return findings;
}

std::vector<Finding> scan_stream(const ModelSet& models, const EmbeddingModel& emb,
                                 const TokenStream& stream, std::string_view source,
                                 const WindowSpec& spec) {
    std::vector<VulnType> types;
    for (const auto& [t, _] : models) types.push_back(t);
    return scan_stream(models, emb, stream, source, spec, types);
}

void summarize(ScanResult& result, std::span<const VulnType> types) {
    result.per_type.clear();
    for (VulnType t : types) result.per_type[t] = 0;
    for (auto& [_, count] : result.per_file) count = 0;
    for (const Finding& f : result.findings) {
        ++result.per_type[f.vuln_type];
        ++result.per_file[f.file_path];
    }
}

ScanResult scan_tree(const ModelSet& models, const EmbeddingModel& emb,
                     std::span<const SourceFile> files, const WindowSpec& spec,
                     std::span<const VulnType> types) {
    ScanResult result;
    std::vector<const SourceFile*> ordered;
    for (const SourceFile& f : files) ordered.push_back(&f);
    std::sort(ordered.begin(), ordered.end(),
              [](const SourceFile* a, const SourceFile* b) { return a->path < b->path; });
    for (const SourceFile* f : ordered) {
        if (!is_python_path(f->path)) {
            result.skipped_files.push_back(f->path);
            continue;
        }
        ++result.files_scanned;
        result.per_file[f->path] = 0;
        const TokenStream stream = tokenize(f->bytes, f->path);
        if (error_token_count(stream) > 0) result.degraded_files.push_back(f->path);
        auto found = scan_stream(models, emb, stream, f->bytes, spec, types);
        result.findings.insert(result.findings.end(), std::make_move_iterator(found.begin()),
                               std::make_move_iterator(found.end()));
    }
    std::stable_sort(result.findings.begin(), result.findings.end(), [](const Finding& a, const Finding& b) {
        return std::tie(a.file_path, a.byte_start, a.vuln_type) <
               std::tie(b.file_path, b.byte_start, b.vuln_type);
    });
    summarize(result, types);
    return result;
}

std::vector<LabeledWindow> make_labeled_windows(std::span<const LabeledSample> samples,
                                                const EmbeddingModel& emb, std::size_t max_tokens) {
    std::vector<LabeledWindow> out;
    out.reserve(samples.size());
    for (const LabeledSample& s : samples) {
        const TokenStream stream = tokenize(s.code, "");
        if (stream.tokens.empty()) continue;
        FeatureSequence seq = embed(emb, stream);
        if (seq.size() > max_tokens) seq = seq.slice(0, max_tokens);
        out.push_back({std::move(seq), static_cast<float>(s.label)});
    }
    return out;
}

ModelBundle load_model_bundle(const std::filesystem::path& models_dir,
                              const std::filesystem::path& embeddings) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(models_dir, ec)) throw IoError("not a directory: " + models_dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(models_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    ModelBundle bundle;
    std::vector<fs::path> embedding_files;
    for (const fs::path& p : files) {
        const std::string text = model_file::read_text(p);
        const auto doc = nlohmann::json::parse(text, nullptr, false);
        const std::string kind =
            doc.is_object() && doc.contains("kind") && doc["kind"].is_string() ? doc["kind"].get<std::string>() : "";
        if (kind == "word2vec") {
            embedding_files.push_back(p);
        } else if (kind == "bilstm") {
            auto model = std::make_shared<const BiLstmModel>(parse_model(text));
            if (!bundle.models.emplace(model->vuln_type, model).second) {
                throw InvalidConfig("two models for " + std::string(to_string(model->vuln_type)) + " in " +
                                    models_dir.string());
            }
        }
    }
    if (!embeddings.empty()) {
        bundle.embeddings = std::make_shared<const EmbeddingModel>(load_embeddings(embeddings));
    } else if (embedding_files.size() == 1) {
        bundle.embeddings = std::make_shared<const EmbeddingModel>(load_embeddings(embedding_files.front()));
    } else {
        throw InvalidConfig(embedding_files.empty() ? "no embedding file found in " + models_dir.string()
                                                    : "several embedding files in " + models_dir.string() +
                                                          "; name one explicitly");
    }
    for (const auto& [t, m] : bundle.models) {
        if (m->config.embedding_dim != bundle.embeddings->dim()) {
            throw DimensionMismatch("model for " + std::string(to_string(t)) +
                                    " does not match the embedding dimension");
        }
    }
    return bundle;
}

}  // namespace pyguard
