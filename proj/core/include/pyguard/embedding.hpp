#pragma once

#include "pyguard/sequence.hpp"
#include "pyguard/tokenizer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pyguard {

struct SkipGramConfig {
    std::size_t dim = 50;
    std::size_t window_radius = 5;
    std::size_t negatives = 5;
    std::size_t epochs = 5;
    double learning_rate = 0.025;
    double min_learning_rate = 0.0001;
    std::size_t min_count = 2;
    std::uint64_t seed = 1;

    bool operator==(const SkipGramConfig&) const = default;
};

/// Throws InvalidConfig when a count is zero or a rate is not positive.
/// `epochs` may be zero (the model then keeps its initialization).
void validate(const SkipGramConfig& config);

/// Vocabulary plus a |vocab| x dim float32 vector table. Row 0 is "UNK",
/// row 1 is "PAD" and always zero.
class EmbeddingModel {
public:
    EmbeddingModel() = default;
    /// Throws FormatError if the table shape disagrees with vocab/dim or the
    /// reserved entries are missing.
    EmbeddingModel(SkipGramConfig config, std::vector<std::string> vocab,
                   std::vector<float> vectors);

    const SkipGramConfig& config() const noexcept { return config_; }
    std::size_t dim() const noexcept { return config_.dim; }
    std::size_t vocab_size() const noexcept { return vocab_.size(); }
    const std::vector<std::string>& vocab() const noexcept { return vocab_; }
    const std::vector<float>& vectors() const noexcept { return vectors_; }

    /// Index of `text`, or 0 ("UNK") when absent.
    std::size_t index_of(std::string_view text) const;
    bool contains(std::string_view text) const;
    std::span<const float> row(std::size_t index) const {
        return {vectors_.data() + index * dim(), dim()};
    }
    std::span<const float> vector_of(std::string_view text) const { return row(index_of(text)); }

    /// Bitwise equality of config, vocabulary and every float.
    bool operator==(const EmbeddingModel& other) const;

private:
    SkipGramConfig config_;
    std::vector<std::string> vocab_;
    std::vector<float> vectors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/**
 * Skip-gram with negative sampling over the token streams. Each stream is one
 * sentence; tokens below min_count are trained as "UNK". Negatives are drawn
 * from the unigram distribution raised to 0.75. Single-threaded and bitwise
 * deterministic for a fixed seed.
 *
 * Throws EmptyCorpus when no token survives min_count filtering.
 */
EmbeddingModel train_skipgram(std::span<const TokenStream> corpus, const SkipGramConfig& config);

/// One row per token; unknown texts map to the "UNK" vector.
FeatureSequence embed(const EmbeddingModel& model, const TokenStream& stream);

/// Cosine similarity of two token vectors; 0 when either has zero norm.
double cosine(const EmbeddingModel& model, std::string_view a, std::string_view b);

void save_embeddings(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel load_embeddings(const std::filesystem::path& path);

// In-memory forms of the model file, used by save/load and by tests that
// corrupt documents deliberately.
std::string serialize_embeddings(const EmbeddingModel& model);
EmbeddingModel parse_embeddings(std::string_view text);

}  // namespace pyguard
