#pragma once

#include "pyguard/detector.hpp"
#include "pyguard/vuln_type.hpp"

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pyguard {

/// Version tag of the prompt templates below; part of every request so
/// prompts stay byte-stable for fixed inputs within one version.
inline constexpr std::string_view kPromptVersion = "pyguard-prompts/1";

inline constexpr std::string_view kDefaultChatModel = "gpt-3.5-turbo";

struct LlmRequest {
    std::string system_prompt;
    std::string user_prompt;
    std::string model_name = std::string(kDefaultChatModel);
    double temperature = 0.0;
    int max_tokens = 1024;

    bool operator==(const LlmRequest&) const = default;
};

struct LlmFinding {
    std::optional<VulnType> vuln_type;  // nullopt for "other"
    int line_start = 1;
    int line_end = 1;
    std::string explanation;
};

struct LlmAnalysis {
    std::vector<LlmFinding> findings;
    std::string raw_response;         // replies joined in chunk order
    std::vector<std::string> warnings;
};

struct RewriteResult {
    std::string secure_code;
    std::string change_summary;
    std::string raw_response;
};

/// A chat-completion backend. Implementations must be safe to call from
/// several threads at once.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;

    /// Assistant reply text for one request.
    virtual std::string complete(const LlmRequest& request) = 0;

    /// Largest code chunk, in bytes, sent in one analysis request.
    virtual std::size_t context_budget() const { return 12000; }
};

struct HttpReply {
    int status = 0;
    std::string body;
};

/// Outbound HTTP seam; tests inject a recording implementation.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;

    /// Throws Timeout when the deadline passes and ProviderError(0, detail)
    /// for connection-level failures.
    virtual HttpReply post_json(const std::string& url, const std::string& body,
                                const std::vector<std::pair<std::string, std::string>>& headers,
                                std::chrono::milliseconds timeout) = 0;
};

/// cpp-httplib transport supporting http:// and https:// URLs.
std::shared_ptr<HttpTransport> make_http_transport();

struct LlmConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = std::string(kDefaultChatModel);
    std::string api_key;  // usually taken from LLM_API_KEY
    double timeout_seconds = 60.0;
    std::size_t max_in_flight = 4;
    std::size_t context_budget = 12000;
    int max_tokens = 1024;
};

/// Reads LLM_API_KEY into config.api_key when the variable is set.
LlmConfig with_env_api_key(LlmConfig config);

/// Counting semaphore bounding concurrent requests of one provider.
class InFlightLimit {
public:
    explicit InFlightLimit(std::size_t limit) : free_(limit == 0 ? 1 : limit) {}
    void acquire();
    void release();

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::size_t free_;
};

/// Speaks the chat-completions JSON protocol over an HttpTransport.
class ChatCompletionsProvider final : public ChatProvider {
public:
    ChatCompletionsProvider(LlmConfig config, std::shared_ptr<HttpTransport> transport);

    /// Throws MissingCredentials (before touching the transport) when no API
    /// key is configured, Timeout, or ProviderError for non-200 replies and
    /// replies without a message.
    std::string complete(const LlmRequest& request) override;
    std::size_t context_budget() const override { return config_.context_budget; }

    /// JSON request body for `request`; exposed for tests.
    std::string request_body(const LlmRequest& request) const;

private:
    LlmConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    InFlightLimit limit_;
};

/// Offline provider: replies come from a callback (or a fixed list, cycled)
/// and every request is recorded.
class MockProvider final : public ChatProvider {
public:
    using Responder = std::function<std::string(const LlmRequest&)>;

    explicit MockProvider(Responder responder, std::size_t context_budget = 12000);
    explicit MockProvider(std::vector<std::string> replies, std::size_t context_budget = 12000);

    std::string complete(const LlmRequest& request) override;
    std::size_t context_budget() const override { return budget_; }

    std::vector<LlmRequest> requests() const;

private:
    Responder responder_;
    std::size_t budget_;
    mutable std::mutex mu_;
    std::vector<LlmRequest> requests_;
};

/// A contiguous run of source lines sent in one request.
struct CodeChunk {
    std::string text;
    int first_line = 1;  // 1-based line of text[0] in the original code
};

/**
 * Splits code into chunks no larger than `budget` bytes, cutting only before
 * top-level `def`, `class` or decorator lines when possible. A single
 * top-level block larger than the budget is cut at line boundaries. The
 * concatenation of the chunk texts is always the input.
 */
std::vector<CodeChunk> chunk_code(std::string_view code, std::size_t budget);

LlmRequest analysis_request(std::string_view code, std::span<const VulnType> types,
                            std::string_view model_name = kDefaultChatModel);

LlmRequest rewrite_request(std::string_view code, std::span<const Finding> findings,
                           std::string_view model_name = kDefaultChatModel);

/**
 * Tolerant parse of an analysis reply. Accepts a bare JSON object or array,
 * or one inside a fenced block or surrounding prose. Unknown type names map
 * to "other"; findings whose lines fall outside [1, line_count] are dropped
 * with a warning. Never throws.
 */
LlmAnalysis parse_analysis(std::string_view reply, int line_count);

/// Body of the first ``` fenced block (language tag stripped), if any. A
/// closing fence glued to the last line ends the body right there.
std::optional<std::string> first_fenced_block(std::string_view text);

/// One request per chunk; line numbers are reported against the full code.
LlmAnalysis analyze_code(ChatProvider& provider, std::string_view code,
                         std::span<const VulnType> types,
                         std::string_view model_name = kDefaultChatModel);

/// Throws ValidationError for empty code and NoCodeInResponse when the reply
/// has no fenced block (or an empty one).
RewriteResult secure_rewrite(ChatProvider& provider, std::string_view code,
                             std::span<const Finding> findings,
                             std::string_view model_name = kDefaultChatModel);

}  // namespace pyguard
