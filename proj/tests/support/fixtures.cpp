#include "fixtures.hpp"

#include "httplib.h"
#include "pyguard/corpus.hpp"
#include "pyguard/store.hpp"

#include <chrono>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace pyguard::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "pyguard-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

EmbeddingModel corpus_embeddings(std::size_t per_type, std::uint64_t seed) {
    std::vector<TokenStream> corpus;
    for (VulnType t : kAllVulnTypes) {
        for (const LabeledSample& s : generate(t, per_type, seed)) corpus.push_back(tokenize(s.code, ""));
    }
    return train_skipgram(corpus, SkipGramConfig{});
}

ModelBundle train_bundle(std::span<const VulnType> types, std::size_t epochs, std::uint64_t seed) {
    ModelBundle bundle;
    bundle.embeddings = std::make_shared<const EmbeddingModel>(corpus_embeddings(200, seed));
    for (VulnType t : types) {
        TrainingConfig cfg;
        cfg.epochs = epochs;
        const auto windows = make_labeled_windows(generate(t, 200, seed), *bundle.embeddings);
        bundle.models[t] = std::make_shared<const BiLstmModel>(train(init_model(cfg, t), windows, cfg).model);
    }
    return bundle;
}

ModelBundle zero_bundle(std::span<const VulnType> types) {
    SkipGramConfig sg;
    sg.min_count = 1;
    std::vector<TokenStream> corpus;
    for (VulnType t : kAllVulnTypes) {
        for (const LabeledSample& s : generate(t, 4, 1)) corpus.push_back(tokenize(s.code, ""));
    }
    ModelBundle bundle;
    bundle.embeddings = std::make_shared<const EmbeddingModel>(train_skipgram(corpus, sg));
    for (VulnType t : types) {
        BiLstmModel m = init_model(TrainingConfig{}, t);
        std::fill(m.params.begin(), m.params.end(), 0.0f);
        bundle.models[t] = std::make_shared<const BiLstmModel>(std::move(m));
    }
    return bundle;
}

RunningService::RunningService(ModelBundle models, std::shared_ptr<ChatProvider> llm, ServiceConfig config) {
    config.host = "127.0.0.1";
    config.port = 0;
    store = std::make_shared<Store>(":memory:");
    service = std::make_unique<Service>(config, store, std::move(models), std::move(llm));
    port = service->start_background();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port);
    client_->set_read_timeout(30, 0);
}

RunningService::~RunningService() {
    client_.reset();
    service->stop();
}

httplib::Client& RunningService::client() { return *client_; }

ApiResponse call(httplib::Client& client, const std::string& method, const std::string& path,
                 const std::string& token, const std::string& body, const std::string& content_type) {
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    httplib::Result r;
    if (method == "GET") {
        r = client.Get(path, headers);
    } else if (method == "POST") {
        r = client.Post(path, headers, body, content_type);
    } else if (method == "DELETE") {
        r = client.Delete(path, headers);
    } else {
        throw std::invalid_argument("unsupported method " + method);
    }
    ApiResponse out;
    if (!r) return out;
    out.status = r->status;
    out.raw = r->body;
    out.content_type = r->get_header_value("Content-Type");
    out.body = nlohmann::json::parse(r->body, nullptr, false);
    if (out.body.is_discarded()) out.body = nullptr;
    return out;
}

std::string sign_up(httplib::Client& client, const std::string& username, const std::string& password) {
    const nlohmann::json creds = {{"username", username}, {"password", password}};
    const ApiResponse reg = call(client, "POST", "/api/register", "", creds.dump());
    if (reg.status != 201) throw std::runtime_error("register failed: " + reg.raw);
    const ApiResponse login = call(client, "POST", "/api/login", "", creds.dump());
    if (login.status != 200) throw std::runtime_error("login failed: " + login.raw);
    return login.body.at("token").get<std::string>();
}

nlohmann::json wait_for_scan(httplib::Client& client, const std::string& token, long long scan_id,
                             double seconds) {
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(static_cast<long long>(seconds * 1000));
    nlohmann::json job;
    for (;;) {
        const ApiResponse r = call(client, "GET", "/api/scans/" + std::to_string(scan_id), token);
        job = r.body;
        if (r.status != 200) return job;
        const std::string status = job.value("status", "");
        if (status == "done" || status == "failed") return job;
        if (std::chrono::steady_clock::now() > deadline) return job;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

}  // namespace pyguard::testing
