#include "pyguard/corpus.hpp"
#include "pyguard/detector.hpp"
#include "pyguard/embedding.hpp"
#include "pyguard/neuralnet.hpp"
#include "pyguard/tokenizer.hpp"

#include <benchmark/benchmark.h>

#include <memory>
#include <string>
#include <vector>

using namespace pyguard;

namespace {

std::string sample_source(std::size_t n) {
    std::string code;
    for (const auto& s : generate(VulnType::sql_injection, n, 1)) code += s.code + "\n";
    return code;
}

std::vector<TokenStream> sample_corpus() {
    std::vector<TokenStream> corpus;
    for (VulnType t : kAllVulnTypes) {
        for (const auto& s : generate(t, 40, 2)) corpus.push_back(tokenize(s.code, ""));
    }
    return corpus;
}

void BM_Tokenize(benchmark::State& state) {
    const std::string code = sample_source(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(tokenize(code, "bench.py"));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * code.size()));
}
BENCHMARK(BM_Tokenize)->Arg(10)->Arg(100);

void BM_SkipGram(benchmark::State& state) {
    const auto corpus = sample_corpus();
    SkipGramConfig cfg;
    cfg.epochs = 1;
    for (auto _ : state) benchmark::DoNotOptimize(train_skipgram(corpus, cfg));
}
BENCHMARK(BM_SkipGram)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
    const BiLstmModel m = init_model(TrainingConfig{}, VulnType::xss);
    const FeatureSequence w(50, std::vector<float>(static_cast<std::size_t>(state.range(0)) * 50, 0.1f));
    for (auto _ : state) benchmark::DoNotOptimize(forward(m, w));
}
BENCHMARK(BM_Forward)->Arg(10)->Arg(40);

void BM_TrainEpoch(benchmark::State& state) {
    const EmbeddingModel emb = train_skipgram(sample_corpus(), SkipGramConfig{});
    const auto data = make_labeled_windows(generate(VulnType::xss, 128, 3), emb);
    TrainingConfig cfg;
    cfg.epochs = 1;
    const BiLstmModel m = init_model(cfg, VulnType::xss);
    for (auto _ : state) benchmark::DoNotOptimize(train(m, data, cfg));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_ScanTree(benchmark::State& state) {
    const EmbeddingModel emb = train_skipgram(sample_corpus(), SkipGramConfig{});
    ModelSet models;
    models.emplace(VulnType::xss, std::make_shared<const BiLstmModel>(init_model(TrainingConfig{}, VulnType::xss)));
    const std::vector<SourceFile> files{{"bench.py", sample_source(20)}};
    const VulnType types[] = {VulnType::xss};
    for (auto _ : state) benchmark::DoNotOptimize(scan_tree(models, emb, files, WindowSpec{}, types));
}
BENCHMARK(BM_ScanTree)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
