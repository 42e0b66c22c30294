#include "detector_oracles.hpp"
#include "fixtures.hpp"
#include "pyguard/detector.hpp"
#include "pyguard/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace pyguard {
namespace {

TEST(Windows, Examples) {
    const WindowSpec spec;
    EXPECT_TRUE(windows(0, spec).empty());
    EXPECT_EQ(windows(10, spec), (std::vector<TokenRange>{{0, 10}}));
    const auto w = windows(100, spec);
    ASSERT_EQ(w.size(), 13u);
    for (std::size_t i = 0; i < 13; ++i) EXPECT_EQ(w[i], (TokenRange{i * 5, i * 5 + 40}));
    EXPECT_EQ(w.back(), (TokenRange{60, 100}));
}

TEST(Windows, AnchoredTail) {
    WindowSpec spec{10, 4, 0.5};
    EXPECT_EQ(windows(17, spec), (std::vector<TokenRange>{{0, 10}, {4, 14}, {7, 17}}));
    EXPECT_EQ(windows(18, spec), (std::vector<TokenRange>{{0, 10}, {4, 14}, {8, 18}}));
}

TEST(WindowsProperty, CoverageSmallStreams) {
    for (std::size_t n = 0; n <= 60; ++n) {
        for (std::size_t len = 1; len <= 12; ++len) {
            for (std::size_t stride = 1; stride <= len; ++stride) {
                EXPECT_EQ(testing::check_windows(n, WindowSpec{len, stride, 0.5}), "")
                    << "n=" << n << " len=" << len << " stride=" << stride;
            }
        }
    }
}

TEST(WindowSpec, Validation) {
    EXPECT_NO_THROW(validate(WindowSpec{}));
    EXPECT_THROW(validate(WindowSpec{0, 1, 0.5}), InvalidConfig);
    EXPECT_THROW(validate(WindowSpec{4, 0, 0.5}), InvalidConfig);
    EXPECT_THROW(validate(WindowSpec{4, 5, 0.5}), InvalidConfig);
    EXPECT_THROW(validate(WindowSpec{4, 2, 0.0}), InvalidConfig);
    EXPECT_THROW(validate(WindowSpec{4, 2, 1.0}), InvalidConfig);
}

TEST(MergeRanges, Examples) {
    EXPECT_TRUE(merge_ranges({}).empty());
    const auto one = merge_ranges({{{3, 9}, 0.6}});
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].range, (TokenRange{3, 9}));
    EXPECT_EQ(one[0].score, 0.6);

    const auto two = merge_ranges({{{0, 40}, 0.7}, {{5, 45}, 0.9}});
    ASSERT_EQ(two.size(), 1u);
    EXPECT_EQ(two[0].range, (TokenRange{0, 45}));
    EXPECT_EQ(two[0].score, 0.9);

    const auto touching = merge_ranges({{{4, 8}, 0.6}, {{0, 4}, 0.8}});
    ASSERT_EQ(touching.size(), 1u);
    EXPECT_EQ(touching[0].range, (TokenRange{0, 8}));

    const auto apart = merge_ranges({{{10, 12}, 0.6}, {{0, 4}, 0.8}});
    ASSERT_EQ(apart.size(), 2u);
    EXPECT_EQ(apart[0].range, (TokenRange{0, 4}));
}

TEST(MergeRangesProperty, SubsetsMatchComponents) {
    for (std::size_t n : {7u, 13u, 22u, 31u}) {
        const auto ws = windows(n, WindowSpec{6, 2, 0.5});
        ASSERT_LE(ws.size(), 14u);
        EXPECT_GT(testing::check_all_subsets(ws, n), 0) << n;
    }
}

// Fixture: a small vocabulary and zero-weight models, whose every window
// scores exactly 0.5.
struct ZeroModels {
    EmbeddingModel emb;
    ModelSet models;

    ZeroModels() {
        SkipGramConfig sg;
        sg.min_count = 1;
        emb = train_skipgram(std::vector<TokenStream>{tokenize("x = 1\ncursor.execute(q)\n", "a.py")}, sg);
        for (VulnType t : {VulnType::sql_injection, VulnType::xss}) {
            BiLstmModel m = init_model(TrainingConfig{}, t);
            std::fill(m.params.begin(), m.params.end(), 0.0f);
            models[t] = std::make_shared<const BiLstmModel>(m);
        }
    }
};

TEST(ScanStream, EmptyStreamHasNoFindings) {
    ZeroModels z;
    EXPECT_TRUE(scan_stream(z.models, z.emb, tokenize("", "a.py"), "", WindowSpec{}).empty());
}

TEST(ScanStream, AllPositiveWindowsMergeIntoOneFinding) {
    ZeroModels z;
    std::string src;
    for (int i = 0; i < 30; ++i) src += "x = " + std::to_string(i) + "\n";
    const TokenStream s = tokenize(src, "a.py");
    const std::vector<VulnType> types{VulnType::xss};
    const auto f = scan_stream(z.models, z.emb, s, src, WindowSpec{}, types);
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].vuln_type, VulnType::xss);
    EXPECT_EQ(f[0].byte_start, 0u);
    EXPECT_EQ(f[0].byte_end, src.size());
    EXPECT_EQ(f[0].line_start, 1);
    EXPECT_EQ(f[0].line_end, 30);
    EXPECT_EQ(f[0].score, 0.5);
    EXPECT_EQ(f[0].snippet, src);
    EXPECT_EQ(f[0].origin, FindingOrigin::bilstm);
}

TEST(ScanStream, RaisingThresholdNeverAddsFindings) {
    ZeroModels z;
    const std::string src = "x = 1\ncursor.execute(q)\n";
    const TokenStream s = tokenize(src, "a.py");
    std::size_t prev = SIZE_MAX;
    for (double th : {0.1, 0.5, 0.50001, 0.9}) {
        const auto f = scan_stream(z.models, z.emb, s, src, WindowSpec{40, 5, th});
        EXPECT_LE(f.size(), prev);
        prev = f.size();
    }
    EXPECT_EQ(prev, 0u);
}

TEST(ScanStream, SortedByPathStartType) {
    ZeroModels z;
    const std::string src = "x = 1\n";
    const auto f = scan_stream(z.models, z.emb, tokenize(src, "a.py"), src, WindowSpec{});
    ASSERT_EQ(f.size(), 2u);
    EXPECT_EQ(f[0].vuln_type, VulnType::sql_injection);
    EXPECT_EQ(f[1].vuln_type, VulnType::xss);
}

TEST(ScanStream, MissingModelThrows) {
    ZeroModels z;
    const std::vector<VulnType> types{VulnType::open_redirect};
    EXPECT_THROW(scan_stream(z.models, z.emb, tokenize("x\n", "a.py"), "x\n", WindowSpec{}, types),
                 ModelMissing);
}

TEST(ScanStream, DimensionMismatchThrows) {
    ZeroModels z;
    TrainingConfig cfg;
    cfg.embedding_dim = 10;
    ModelSet bad{{VulnType::xss, std::make_shared<const BiLstmModel>(init_model(cfg, VulnType::xss))}};
    EXPECT_THROW(scan_stream(bad, z.emb, tokenize("x\n", "a.py"), "x\n", WindowSpec{}), DimensionMismatch);
}

TEST(ScanStream, SnippetTruncated) {
    ZeroModels z;
    std::string src;
    for (int i = 0; i < 400; ++i) src += "value = " + std::to_string(i) + "\n";
    const std::vector<VulnType> types{VulnType::xss};
    const auto f = scan_stream(z.models, z.emb, tokenize(src, "a.py"), src, WindowSpec{}, types);
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].snippet.size(), kMaxSnippetBytes);
    EXPECT_EQ(f[0].snippet, src.substr(0, kMaxSnippetBytes));
}

TEST(ScanTree, NoPythonFiles) {
    ZeroModels z;
    const std::vector<SourceFile> files{{"README.md", "hi"}, {"x.txt", "y"}};
    const std::vector<VulnType> types{VulnType::xss};
    const ScanResult r = scan_tree(z.models, z.emb, files, WindowSpec{}, types);
    EXPECT_TRUE(r.findings.empty());
    EXPECT_EQ(r.skipped_files.size(), 2u);
    EXPECT_EQ(r.files_scanned, 0u);
    EXPECT_EQ(r.per_type.at(VulnType::xss), 0u);
}

TEST(ScanTree, FindingsSortedByPathAndCountsAgree) {
    ZeroModels z;
    const std::vector<SourceFile> files{{"b.py", "x = 1\n"}, {"a.py", "y = 2\n"}, {"c.py", "# only\n"},
                                        {"bad.py", "s = 'open\n"}};
    const std::vector<VulnType> types{VulnType::sql_injection, VulnType::xss};
    const ScanResult r = scan_tree(z.models, z.emb, files, WindowSpec{}, types);
    ASSERT_EQ(r.findings.size(), 6u);
    EXPECT_TRUE(std::is_sorted(r.findings.begin(), r.findings.end(), [](const Finding& a, const Finding& b) {
        return a.file_path < b.file_path;
    }));
    EXPECT_EQ(r.files_scanned, 4u);
    EXPECT_EQ(r.per_file.at("c.py"), 0u);
    EXPECT_EQ(r.degraded_files, (std::vector<std::string>{"bad.py"}));
    std::map<VulnType, std::size_t> by_type;
    std::map<std::string, std::size_t> by_file;
    for (const Finding& f : r.findings) ++by_type[f.vuln_type], ++by_file[f.file_path];
    for (VulnType t : types) EXPECT_EQ(r.per_type.at(t), by_type[t]);
    for (const auto& [path, n] : r.per_file) EXPECT_EQ(n, by_file[path]);
}

TEST(IsPythonPath, Suffix) {
    EXPECT_TRUE(is_python_path("a/b.py"));
    EXPECT_FALSE(is_python_path("a/b.pyc"));
    EXPECT_FALSE(is_python_path("py"));
}

TEST(LabeledWindows, TruncatesAndDropsEmpty) {
    ZeroModels z;
    const std::vector<LabeledSample> samples{{"# nothing\n", 1}, {"a = 1\nb = 2\nc = 3\n", 0}};
    const auto w = make_labeled_windows(samples, z.emb, 5);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].window.size(), 5u);
    EXPECT_EQ(w[0].label, 0.0f);
}

TEST(ModelBundle, LoadsDirectory) {
    testing::TempDir dir;
    ZeroModels z;
    save_embeddings(z.emb, dir.path() / "emb.json");
    for (const auto& [t, m] : z.models) save_model(*m, dir.path() / (std::string(to_string(t)) + ".json"));
    const ModelBundle b = load_model_bundle(dir.path());
    EXPECT_EQ(*b.embeddings, z.emb);
    ASSERT_EQ(b.models.size(), 2u);
    EXPECT_EQ(*b.models.at(VulnType::xss), *z.models.at(VulnType::xss));
}

TEST(ModelBundle, Errors) {
    testing::TempDir dir;
    ZeroModels z;
    save_model(*z.models.at(VulnType::xss), dir.path() / "a.json");
    EXPECT_THROW(load_model_bundle(dir.path()), InvalidConfig);  // no embeddings
    save_embeddings(z.emb, dir.path() / "emb.json");
    save_embeddings(z.emb, dir.path() / "emb2.json");
    EXPECT_THROW(load_model_bundle(dir.path()), InvalidConfig);  // two embeddings
    EXPECT_NO_THROW(load_model_bundle(dir.path(), dir.path() / "emb.json"));
    save_model(*z.models.at(VulnType::xss), dir.path() / "b.json");
    EXPECT_THROW(load_model_bundle(dir.path(), dir.path() / "emb.json"), InvalidConfig);  // duplicate type
    EXPECT_THROW(load_model_bundle(dir.path() / "nope"), IoError);
}

}  // namespace
}  // namespace pyguard
