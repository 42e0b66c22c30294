#include "CLI11.hpp"
#include "json.hpp"

#include "pyguard/corpus.hpp"
#include "pyguard/detector.hpp"
#include "pyguard/embedding.hpp"
#include "pyguard/errors.hpp"
#include "pyguard/metrics.hpp"
#include "pyguard/neuralnet.hpp"
#include "pyguard/report.hpp"
#include "pyguard/service.hpp"
#include "pyguard/store.hpp"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace pyguard;

namespace {

constexpr int kExitError = 2;

VulnType require_type(const std::string& name) {
    auto t = parse_vuln_type(name);
    if (!t) throw InvalidConfig("unknown vulnerability type: " + name);
    return *t;
}

std::vector<VulnType> parse_types(const std::vector<std::string>& names) {
    std::vector<VulnType> out;
    for (const std::string& n : names) out.push_back(require_type(n));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<SourceFile> collect_sources(const fs::path& root) {
    std::vector<SourceFile> files;
    if (fs::is_regular_file(root)) {
        files.push_back({root.filename().string(), read_file(root)});
        return files;
    }
    if (!fs::is_directory(root)) throw IoError("no such file or directory: " + root.string());
    for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
        if (it->path().filename() == ".git") {
            if (it->is_directory()) it.disable_recursion_pending();
            continue;
        }
        if (it->is_symlink() || !it->is_regular_file()) continue;
        files.push_back({fs::relative(it->path(), root).generic_string(), read_file(it->path())});
    }
    return files;
}

struct GenCorpus {
    std::vector<std::string> types;
    std::size_t count = 200;
    std::uint64_t seed = 1;
    std::string out;

    int run() const {
        std::vector<LabeledSample> all;
        for (VulnType t : types.empty() ? std::vector<VulnType>(kAllVulnTypes.begin(), kAllVulnTypes.end())
                                        : parse_types(types)) {
            auto part = generate(t, count, seed);
            all.insert(all.end(), part.begin(), part.end());
        }
        save_jsonl(all, out);
        std::cerr << "wrote " << all.size() << " samples to " << out << "\n";
        return 0;
    }
};

struct TrainEmbeddings {
    std::vector<std::string> data;
    std::string out;
    SkipGramConfig config;

    int run() const {
        std::vector<TokenStream> corpus;
        for (const std::string& path : data) {
            for (const LabeledSample& s : load_jsonl(path)) corpus.push_back(tokenize(s.code, ""));
        }
        const EmbeddingModel emb = train_skipgram(corpus, config);
        save_embeddings(emb, out);
        std::cerr << "vocabulary " << emb.vocab_size() << ", dim " << emb.dim() << ", wrote " << out << "\n";
        return 0;
    }
};

struct TrainModel {
    std::string type;
    std::string data;
    std::string emb;
    std::string out;
    std::size_t max_tokens = WindowSpec{}.length;
    TrainingConfig config;

    int run() {
        const VulnType t = require_type(type);
        const EmbeddingModel e = load_embeddings(emb);
        config.embedding_dim = e.dim();
        validate(config);
        std::vector<LabeledSample> samples;
        for (LabeledSample& s : load_jsonl(data)) {
            if (s.vuln_type == t) samples.push_back(std::move(s));
        }
        if (samples.empty()) throw EmptyDataset("no samples of type " + type + " in " + data);
        const auto windows = make_labeled_windows(samples, e, max_tokens);
        const auto result = train(init_model(config, t), windows, config, [&](std::size_t epoch, double loss) {
            std::cerr << "epoch " << epoch + 1 << "/" << config.epochs << " loss " << loss << "\n";
        });
        save_model(result.model, out);
        return 0;
    }
};

struct Eval {
    std::string model;
    std::string emb;
    std::string data;
    std::string scores;
    double threshold = 0.5;
    std::size_t max_tokens = WindowSpec{}.length;

    int run() const {
        EvalMetrics m;
        if (!scores.empty()) {
            std::vector<double> s;
            std::vector<int> labels;
            std::ifstream in(scores);
            if (!in) throw IoError("cannot read " + scores);
            std::string line;
            std::size_t n = 0;
            while (std::getline(in, line)) {
                ++n;
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                const auto j = nlohmann::json::parse(line, nullptr, false);
                if (j.is_discarded() || !j.is_object() || !j.contains("score") || !j.contains("label") ||
                    !j["score"].is_number() || !j["label"].is_number_integer()) {
                    throw SchemaError(n, "expected {\"score\": number, \"label\": 0|1}");
                }
                s.push_back(j["score"].get<double>());
                labels.push_back(j["label"].get<int>());
            }
            m = metrics_from_scores(s, labels, threshold);
        } else {
            if (model.empty() || emb.empty() || data.empty()) {
                throw InvalidConfig("eval needs --scores, or --model, --emb and --data");
            }
            const BiLstmModel mdl = load_model(model);
            const EmbeddingModel e = load_embeddings(emb);
            std::vector<LabeledSample> samples;
            for (LabeledSample& s : load_jsonl(data)) {
                if (s.vuln_type == mdl.vuln_type) samples.push_back(std::move(s));
            }
            m = evaluate(mdl, make_labeled_windows(samples, e, max_tokens), threshold);
        }
        std::cout << metrics_to_json(m) << "\n";
        return 0;
    }
};

struct Scan {
    std::string models;
    std::string emb;
    std::string path;
    std::vector<std::string> types;
    WindowSpec window;

    int run() const {
        const ModelBundle bundle = load_model_bundle(models, emb);
        std::vector<VulnType> selected;
        if (types.empty()) {
            for (const auto& [t, _] : bundle.models) selected.push_back(t);
        } else {
            selected = parse_types(types);
        }
        const auto files = collect_sources(path);
        ScanResult result = scan_tree(bundle.models, *bundle.embeddings, files, window, selected);
        const ScanReport report =
            make_report(std::move(result), Engine::bilstm, selected, iso8601_utc(system_now()));
        std::cout << report_to_json(report) << "\n";
        return report.findings.empty() ? 0 : 1;
    }
};

struct Serve {
    std::string config;

    int run() const {
        // Block termination signals before any thread starts so sigwait sees them.
        sigset_t signals;
        sigemptyset(&signals);
        sigaddset(&signals, SIGINT);
        sigaddset(&signals, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &signals, nullptr);

        const ServiceConfig cfg = load_service_config(config);
        ModelBundle bundle;
        if (fs::is_directory(cfg.models_dir)) {
            bundle = load_model_bundle(cfg.models_dir, cfg.embeddings_path);
        } else {
            std::cerr << "models directory " << cfg.models_dir << " not found; BiLSTM scans are disabled\n";
        }
        auto store = std::make_shared<Store>(cfg.store_path);
        auto llm = std::make_shared<ChatCompletionsProvider>(with_env_api_key(cfg.llm), make_http_transport());
        Service service(cfg, store, std::move(bundle), llm);
        const int port = service.start_background();
        std::cerr << "listening on " << cfg.host << ":" << port << "\n";
        int sig = 0;
        sigwait(&signals, &sig);
        std::cerr << "shutting down\n";
        service.stop();
        return 0;
    }
};

void add_window_flags(CLI::App& cmd, WindowSpec& w) {
    cmd.add_option("--window", w.length, "Window length in tokens")->capture_default_str();
    cmd.add_option("--stride", w.stride, "Window stride in tokens")->capture_default_str();
    cmd.add_option("--threshold", w.threshold, "Score at or above which a window is positive")
        ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pyguard: Python vulnerability detection with BiLSTM models"};
    app.set_version_flag("--version", std::string(library_version()));
    app.require_subcommand(1);

    GenCorpus gen;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "Write a synthetic labeled corpus as JSONL");
    gen_cmd->add_option("--type", gen.types, "Vulnerability type (repeatable; default all)");
    gen_cmd->add_option("--count", gen.count, "Samples per type (even, >= 2)")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output JSONL file")->required();

    TrainEmbeddings te;
    auto* te_cmd = app.add_subcommand("train-embeddings", "Train skip-gram token embeddings");
    te_cmd->add_option("--data", te.data, "JSONL corpus (repeatable)")->required();
    te_cmd->add_option("--out", te.out, "Output embedding file")->required();
    te_cmd->add_option("--dim", te.config.dim, "Vector size")->capture_default_str();
    te_cmd->add_option("--window-radius", te.config.window_radius, "Context radius")->capture_default_str();
    te_cmd->add_option("--negatives", te.config.negatives, "Negative samples per pair")->capture_default_str();
    te_cmd->add_option("--epochs", te.config.epochs, "Passes over the corpus")->capture_default_str();
    te_cmd->add_option("--learning-rate", te.config.learning_rate, "Initial learning rate")->capture_default_str();
    te_cmd->add_option("--min-count", te.config.min_count, "Minimum token frequency")->capture_default_str();
    te_cmd->add_option("--seed", te.config.seed, "Seed")->capture_default_str();

    TrainModel tm;
    auto* tm_cmd = app.add_subcommand("train-model", "Train the BiLSTM classifier for one type");
    tm_cmd->add_option("--type", tm.type, "Vulnerability type")->required();
    tm_cmd->add_option("--data", tm.data, "JSONL corpus")->required();
    tm_cmd->add_option("--emb", tm.emb, "Embedding file")->required();
    tm_cmd->add_option("--out", tm.out, "Output model file")->required();
    tm_cmd->add_option("--max-tokens", tm.max_tokens, "Leading tokens kept per sample")->capture_default_str();
    tm_cmd->add_option("--input-layer-units", tm.config.input_layer_units, "Units of the first BiLSTM layer")
        ->capture_default_str();
    tm_cmd->add_option("--hidden-layers", tm.config.hidden_layers, "Hidden BiLSTM layers")->capture_default_str();
    tm_cmd->add_option("--hidden-units", tm.config.hidden_units, "Units per hidden layer")->capture_default_str();
    tm_cmd->add_option("--learning-rate", tm.config.learning_rate, "Adam learning rate")->capture_default_str();
    tm_cmd->add_option("--epochs", tm.config.epochs, "Training epochs")->capture_default_str();
    tm_cmd->add_option("--batch-size", tm.config.batch_size, "Mini-batch size")->capture_default_str();
    tm_cmd->add_option("--dropout", tm.config.dropout_rate, "Dropout rate")->capture_default_str();
    tm_cmd->add_option("--seed", tm.config.seed, "Seed")->capture_default_str();

    Eval ev;
    auto* ev_cmd = app.add_subcommand("eval", "Print accuracy, F-score, precision, recall and ROC AUC as JSON");
    ev_cmd->add_option("--model", ev.model, "Model file");
    ev_cmd->add_option("--emb", ev.emb, "Embedding file");
    ev_cmd->add_option("--data", ev.data, "JSONL corpus");
    ev_cmd->add_option("--scores", ev.scores, "JSONL of {\"score\",\"label\"} instead of a model");
    ev_cmd->add_option("--threshold", ev.threshold, "Decision threshold")->capture_default_str();
    ev_cmd->add_option("--max-tokens", ev.max_tokens, "Leading tokens kept per sample")->capture_default_str();

    Scan sc;
    auto* sc_cmd = app.add_subcommand("scan", "Scan a file or directory; prints the report JSON");
    sc_cmd->add_option("--models", sc.models, "Directory of model files")->required();
    sc_cmd->add_option("--emb", sc.emb, "Embedding file (default: the one in --models)");
    sc_cmd->add_option("--type", sc.types, "Vulnerability type (repeatable; default every loaded model)");
    add_window_flags(*sc_cmd, sc.window);
    sc_cmd->add_option("path", sc.path, "File or directory")->required();

    Serve sv;
    auto* sv_cmd = app.add_subcommand("serve", "Run the HTTP API");
    sv_cmd->add_option("--config", sv.config, "Service config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }

    try {
        if (*gen_cmd) return gen.run();
        if (*te_cmd) return te.run();
        if (*tm_cmd) return tm.run();
        if (*ev_cmd) return ev.run();
        if (*sc_cmd) return sc.run();
        if (*sv_cmd) return sv.run();
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "error: " << msg << "\n";
        return kExitError;
    }
    return kExitError;
}
