#pragma once

#include "pyguard/corpus.hpp"
#include "pyguard/embedding.hpp"
#include "pyguard/neuralnet.hpp"
#include "pyguard/tokenizer.hpp"
#include "pyguard/vuln_type.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pyguard {

enum class FindingOrigin { bilstm, llm };

std::string_view to_string(FindingOrigin origin) noexcept;

inline constexpr std::size_t kMaxSnippetBytes = 2000;

struct Finding {
    VulnType vuln_type = VulnType::sql_injection;
    std::string file_path;
    std::size_t byte_start = 0;
    std::size_t byte_end = 0;
    int line_start = 1;
    int line_end = 1;
    double score = 0.0;
    std::string snippet;
    FindingOrigin origin = FindingOrigin::bilstm;
    std::string explanation;  // filled by the LLM engine only

    bool operator==(const Finding&) const = default;
};

struct WindowSpec {
    std::size_t length = 40;
    std::size_t stride = 5;
    double threshold = 0.5;
};

/// Throws InvalidConfig if length == 0, stride outside [1, length] or the
/// threshold outside (0, 1).
void validate(const WindowSpec& spec);

/// Half-open token range [start, end).
struct TokenRange {
    std::size_t start = 0;
    std::size_t end = 0;
    bool operator==(const TokenRange&) const = default;
};

/**
 * Windows of `length` tokens starting at 0, stride, 2*stride, ... A stream
 * shorter than `length` gets one window covering everything; when the stride
 * pattern leaves trailing tokens uncovered a final window anchored at the end
 * is appended.
 */
std::vector<TokenRange> windows(std::size_t token_count, const WindowSpec& spec);

struct ScoredRange {
    TokenRange range;
    double score = 0.0;
};

/// Union of overlapping or adjacent ranges; each merged range keeps the
/// maximum member score. Output is sorted by start.
std::vector<ScoredRange> merge_ranges(std::vector<ScoredRange> positives);

using ModelSet = std::map<VulnType, std::shared_ptr<const BiLstmModel>>;

/**
 * Scores every window of the stream with each requested type's model and
 * turns merged positive windows (score >= threshold) into findings sorted by
 * (file_path, byte_start, vuln_type). `source` must be the text the stream was
 * tokenized from.
 *
 * Throws ModelMissing when a requested type has no model, DimensionMismatch
 * when a model's input width differs from the embedding dim.
 */
std::vector<Finding> scan_stream(const ModelSet& models, const EmbeddingModel& emb,
                                 const TokenStream& stream, std::string_view source,
                                 const WindowSpec& spec, std::span<const VulnType> types);

/// Convenience overload scanning every type present in `models`.
std::vector<Finding> scan_stream(const ModelSet& models, const EmbeddingModel& emb,
                                 const TokenStream& stream, std::string_view source,
                                 const WindowSpec& spec);

struct SourceFile {
    std::string path;
    std::string bytes;
};

struct ScanResult {
    std::vector<Finding> findings;
    std::map<VulnType, std::size_t> per_type;     // every requested type, zero included
    std::map<std::string, std::size_t> per_file;  // every scanned file, zero included
    std::vector<std::string> skipped_files;       // non-.py paths
    std::vector<std::string> degraded_files;      // .py files that produced ERR tokens
    std::size_t files_scanned = 0;
};

/// Scans the ".py" files of a tree; other paths are skipped and listed.
ScanResult scan_tree(const ModelSet& models, const EmbeddingModel& emb,
                     std::span<const SourceFile> files, const WindowSpec& spec,
                     std::span<const VulnType> types);

/// Recomputes per-type and per-file counts from the finding list.
void summarize(ScanResult& result, std::span<const VulnType> types);

bool is_python_path(std::string_view path);

/// Finding spanning the byte range of tokens [range.start, range.end).
Finding make_finding(const TokenStream& stream, std::string_view source, TokenRange range,
                     VulnType type, double score, FindingOrigin origin);

/**
 * Tokenizes and embeds labeled samples for training or evaluation, keeping at
 * most `max_tokens` leading tokens of each sample. Samples that produce no
 * tokens are dropped.
 */
std::vector<LabeledWindow> make_labeled_windows(std::span<const LabeledSample> samples,
                                                const EmbeddingModel& emb,
                                                std::size_t max_tokens = WindowSpec{}.length);

/// Embeddings plus one BiLSTM per vulnerability type, loaded once and shared
/// read-only between scans.
struct ModelBundle {
    std::shared_ptr<const EmbeddingModel> embeddings;
    ModelSet models;
};

/**
 * Loads every "bilstm" model file (*.json) in `models_dir`. The embeddings
 * come from `embeddings` when given, otherwise from the single "word2vec"
 * file in the directory.
 *
 * Throws IoError, FormatError, InvalidConfig (two models for one type, no or
 * several embedding files) and DimensionMismatch.
 */
ModelBundle load_model_bundle(const std::filesystem::path& models_dir,
                              const std::filesystem::path& embeddings = {});

}  // namespace pyguard
