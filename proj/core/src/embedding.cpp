#include "pyguard/embedding.hpp"

#include "model_file.hpp"
#include "pyguard/errors.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace pyguard {

void validate(const SkipGramConfig& c) {
    if (c.dim == 0 || c.window_radius == 0 || c.negatives == 0 || c.min_count == 0) {
        throw InvalidConfig("skip-gram counts must be >= 1");
    }
    if (!(c.learning_rate > 0.0) || !(c.min_learning_rate > 0.0)) {
        throw InvalidConfig("skip-gram learning rates must be > 0");
    }
}

EmbeddingModel::EmbeddingModel(SkipGramConfig config, std::vector<std::string> vocab,
                               std::vector<float> vectors)
    : config_(config), vocab_(std::move(vocab)), vectors_(std::move(vectors)) {
    if (config_.dim == 0) throw FormatError("embedding dim must be positive");
    if (vocab_.size() < 2 || vocab_[0] != kUnknownEntry || vocab_[1] != kPaddingEntry) {
        throw FormatError("vocabulary must start with UNK, PAD");
    }
    if (vectors_.size() != vocab_.size() * config_.dim) {
        throw FormatError("vector table rows do not match vocabulary size");
    }
    index_.reserve(vocab_.size());
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        if (!index_.emplace(vocab_[i], i).second) {
            throw FormatError("duplicate vocabulary entry '" + vocab_[i] + "'");
        }
    }
}

std::size_t EmbeddingModel::index_of(std::string_view text) const {
    auto it = index_.find(std::string(text));
    return it == index_.end() ? 0 : it->second;
}

bool EmbeddingModel::contains(std::string_view text) const {
    return index_.contains(std::string(text));
}

bool EmbeddingModel::operator==(const EmbeddingModel& other) const {
    return config_ == other.config_ && vocab_ == other.vocab_ &&
           vectors_.size() == other.vectors_.size() &&
           (vectors_.empty() ||
            std::memcmp(vectors_.data(), other.vectors_.data(), vectors_.size() * sizeof(float)) == 0);
}

namespace {

float sigmoid(float x) {
    if (x > 30.0f) return 1.0f;
    if (x < -30.0f) return 0.0f;
    return 1.0f / (1.0f + std::exp(-x));
}

// Cumulative unigram^0.75 distribution for negative sampling.
class NegativeSampler {
public:
    explicit NegativeSampler(const std::vector<std::uint64_t>& counts) {
        cumulative_.reserve(counts.size());
        double total = 0.0;
        for (std::uint64_t c : counts) {
            total += std::pow(static_cast<double>(c), 0.75);
            cumulative_.push_back(total);
        }
    }

    std::size_t draw(detail::Rng& rng) const {
        const double u = rng.uniform() * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        return static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                                     static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
    }

private:
    std::vector<double> cumulative_;
};

}  // namespace

EmbeddingModel train_skipgram(std::span<const TokenStream> corpus, const SkipGramConfig& config) {
    validate(config);
    std::vector<std::string> vocab = vocabulary_of(corpus, config.min_count);
    if (vocab.size() <= 2) throw EmptyCorpus("no token reaches min_count");

    const std::size_t dim = config.dim;
    const std::size_t v = vocab.size();
    std::unordered_map<std::string_view, std::size_t> index;
    for (std::size_t i = 0; i < v; ++i) index.emplace(vocab[i], i);

    std::vector<std::vector<std::uint32_t>> sentences;
    sentences.reserve(corpus.size());
    std::vector<std::uint64_t> counts(v, 0);
    std::uint64_t total_tokens = 0;
    for (const TokenStream& s : corpus) {
        std::vector<std::uint32_t> ids;
        ids.reserve(s.tokens.size());
        for (const Token& t : s.tokens) {
            auto it = index.find(t.text);
            std::size_t id = it == index.end() ? 0 : it->second;
            if (id == 1) id = 0;  // a literal "PAD" token never trains the padding row
            ids.push_back(static_cast<std::uint32_t>(id));
            ++counts[id];
        }
        total_tokens += ids.size();
        sentences.push_back(std::move(ids));
    }

    detail::Rng rng(config.seed);
    std::vector<float> input(v * dim);
    for (std::size_t r = 0; r < v; ++r) {
        for (std::size_t k = 0; k < dim; ++k) {
            input[r * dim + k] =
                r == 1 ? 0.0f : static_cast<float>((rng.uniform() - 0.5) / static_cast<double>(dim));
        }
    }
    std::vector<float> output(v * dim, 0.0f);
    const NegativeSampler sampler(counts);

    const double total_work = static_cast<double>(config.epochs) * static_cast<double>(total_tokens);
    std::uint64_t processed = 0;
    std::vector<float> grad(dim);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& ids : sentences) {
            const std::size_t n = ids.size();
            for (std::size_t i = 0; i < n; ++i, ++processed) {
                const double progress = total_work > 0 ? static_cast<double>(processed) / total_work : 0.0;
                const float lr = static_cast<float>(std::max(
                    config.min_learning_rate,
                    config.learning_rate - (config.learning_rate - config.min_learning_rate) * progress));
                const std::size_t lo = i >= config.window_radius ? i - config.window_radius : 0;
                const std::size_t hi = std::min(n, i + config.window_radius + 1);
                float* center = &input[ids[i] * dim];
                for (std::size_t j = lo; j < hi; ++j) {
                    if (j == i) continue;
                    std::fill(grad.begin(), grad.end(), 0.0f);
                    for (std::size_t d = 0; d <= config.negatives; ++d) {
                        std::size_t target;
                        float label;
                        if (d == 0) {
                            target = ids[j];
                            label = 1.0f;
                        } else {
                            target = sampler.draw(rng);
                            if (target == ids[j]) continue;
                            label = 0.0f;
                        }
                        float* out = &output[target * dim];
                        float dot = 0.0f;
                        for (std::size_t k = 0; k < dim; ++k) dot += center[k] * out[k];
                        const float g = (label - sigmoid(dot)) * lr;
                        for (std::size_t k = 0; k < dim; ++k) grad[k] += g * out[k];
                        for (std::size_t k = 0; k < dim; ++k) out[k] += g * center[k];
                    }
                    for (std::size_t k = 0; k < dim; ++k) center[k] += grad[k];
                }
            }
        }
    }
    std::fill(input.begin() + static_cast<std::ptrdiff_t>(dim),
              input.begin() + static_cast<std::ptrdiff_t>(2 * dim), 0.0f);
    return EmbeddingModel(config, std::move(vocab), std::move(input));
}

FeatureSequence embed(const EmbeddingModel& model, const TokenStream& stream) {
    std::vector<float> data;
    data.reserve(stream.tokens.size() * model.dim());
    for (const Token& t : stream.tokens) {
        auto row = model.vector_of(t.text);
        data.insert(data.end(), row.begin(), row.end());
    }
    return FeatureSequence(model.dim(), std::move(data));
}

double cosine(const EmbeddingModel& model, std::string_view a, std::string_view b) {
    auto va = model.vector_of(a);
    auto vb = model.vector_of(b);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < va.size(); ++k) {
        dot += static_cast<double>(va[k]) * vb[k];
        na += static_cast<double>(va[k]) * va[k];
        nb += static_cast<double>(vb[k]) * vb[k];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::string serialize_embeddings(const EmbeddingModel& model) {
    const SkipGramConfig& c = model.config();
    model_file::Document doc;
    doc.kind = "word2vec";
    doc.config = {{"dim", c.dim},
                  {"window_radius", c.window_radius},
                  {"negatives", c.negatives},
                  {"epochs", c.epochs},
                  {"learning_rate", c.learning_rate},
                  {"min_learning_rate", c.min_learning_rate},
                  {"min_count", c.min_count},
                  {"seed", c.seed}};
    doc.vocab = model.vocab();
    doc.tensors["vectors"] = {{model.vocab_size(), model.dim()}, model.vectors()};
    return model_file::serialize(doc);
}

EmbeddingModel parse_embeddings(std::string_view text) {
    model_file::Document doc = model_file::parse(text, "word2vec");
    SkipGramConfig c;
    try {
        const auto& j = doc.config;
        c.dim = j.at("dim").get<std::size_t>();
        c.window_radius = j.at("window_radius").get<std::size_t>();
        c.negatives = j.at("negatives").get<std::size_t>();
        c.epochs = j.at("epochs").get<std::size_t>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.min_learning_rate = j.at("min_learning_rate").get<double>();
        c.min_count = j.at("min_count").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad word2vec config: ") + e.what());
    }
    auto& t = model_file::require_tensor(doc, "vectors", {doc.vocab.size(), c.dim});
    for (float x : t.values) {
        if (!std::isfinite(x)) throw FormatError("non-finite embedding component");
    }
    return EmbeddingModel(c, std::move(doc.vocab), t.values);
}

void save_embeddings(const EmbeddingModel& model, const std::filesystem::path& path) {
    model_file::write_text(path, serialize_embeddings(model));
}

EmbeddingModel load_embeddings(const std::filesystem::path& path) {
    return parse_embeddings(model_file::read_text(path));
}

}  // namespace pyguard
