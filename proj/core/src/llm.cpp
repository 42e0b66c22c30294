#include "pyguard/llm.hpp"

#include "httplib.h"
#include "json.hpp"
#include "pyguard/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

namespace pyguard {

using nlohmann::json;

LlmConfig with_env_api_key(LlmConfig config) {
    if (const char* key = std::getenv("LLM_API_KEY"); key && *key) config.api_key = key;
    return config;
}

void InFlightLimit::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
}

void InFlightLimit::release() {
    {
        std::lock_guard lock(mu_);
        ++free_;
    }
    cv_.notify_one();
}

namespace {

class HttplibTransport final : public HttpTransport {
public:
    HttpReply post_json(const std::string& url, const std::string& body,
                        const std::vector<std::pair<std::string, std::string>>& headers,
                        std::chrono::milliseconds timeout) override {
        const std::size_t scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw ProviderError(0, "malformed endpoint url");
        const std::size_t path_start = url.find('/', scheme_end + 3);
        const std::string origin = url.substr(0, path_start);
        const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

        httplib::Client client(origin);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());

        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = client.Post(path, h, body, "application/json");
        if (!res) {
            const auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
                throw Timeout("no reply from " + origin + " within the deadline");
            }
            throw ProviderError(0, httplib::to_string(err));
        }
        return {res->status, res->body};
    }
};

class Permit {
public:
    explicit Permit(InFlightLimit& limit) : limit_(limit) { limit_.acquire(); }
    ~Permit() { limit_.release(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

private:
    InFlightLimit& limit_;
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

ChatCompletionsProvider::ChatCompletionsProvider(LlmConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)), limit_(config_.max_in_flight) {
    if (!transport_) throw InvalidConfig("chat provider needs a transport");
}

std::string ChatCompletionsProvider::request_body(const LlmRequest& request) const {
    json body = {{"model", request.model_name.empty() ? config_.model : request.model_name},
                 {"messages",
                  {{{"role", "system"}, {"content", request.system_prompt}},
                   {{"role", "user"}, {"content", request.user_prompt}}}},
                 {"temperature", request.temperature},
                 {"max_tokens", request.max_tokens}};
    return body.dump();
}

std::string ChatCompletionsProvider::complete(const LlmRequest& request) {
    if (config_.api_key.empty()) throw MissingCredentials("LLM_API_KEY is not set");
    const std::string body = request_body(request);
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(config_.timeout_seconds * 1000.0));
    HttpReply reply;
    {
        Permit permit(limit_);
        reply = transport_->post_json(config_.endpoint, body,
                                      {{"Authorization", "Bearer " + config_.api_key}}, timeout);
    }
    if (reply.status != 200) throw ProviderError(reply.status, reply.body);
    const json j = json::parse(reply.body, nullptr, false);
    try {
        if (!j.is_discarded()) return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
    }
    throw ProviderError(reply.status, reply.body);
}

MockProvider::MockProvider(Responder responder, std::size_t context_budget)
    : responder_(std::move(responder)), budget_(context_budget) {}

MockProvider::MockProvider(std::vector<std::string> replies, std::size_t context_budget)
    : budget_(context_budget) {
    if (replies.empty()) replies.emplace_back();
    auto shared = std::make_shared<std::vector<std::string>>(std::move(replies));
    auto next = std::make_shared<std::size_t>(0);
    responder_ = [shared, next](const LlmRequest&) { return (*shared)[(*next)++ % shared->size()]; };
}

std::string MockProvider::complete(const LlmRequest& request) {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    return responder_(request);
}

std::vector<LlmRequest> MockProvider::requests() const {
    std::lock_guard lock(mu_);
    return requests_;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view code) {
    std::vector<std::string_view> lines;
    while (!code.empty()) {
        const std::size_t nl = code.find('\n');
        const std::size_t len = nl == std::string_view::npos ? code.size() : nl + 1;
        lines.push_back(code.substr(0, len));
        code.remove_prefix(len);
    }
    return lines;
}

int count_lines(std::string_view code) { return static_cast<int>(split_lines(code).size()); }

bool starts_top_level_block(std::string_view line) {
    return line.starts_with("def ") || line.starts_with("async def ") || line.starts_with("class ") ||
           line.starts_with("@");
}

// Backtick fence longer than any backtick run inside the code.
std::string fence_for(std::string_view code) {
    std::size_t longest = 0, run = 0;
    for (char c : code) {
        run = c == '`' ? run + 1 : 0;
        longest = std::max(longest, run);
    }
    return std::string(std::max<std::size_t>(3, longest + 1), '`');
}

std::string fenced(std::string_view code) {
    const std::string fence = fence_for(code);
    std::string out = fence + "python\n";
    out += code;
    if (!code.ends_with('\n')) out += '\n';
    out += fence;
    return out;
}

std::string type_list(std::span<const VulnType> types) {
    std::string out;
    for (VulnType t : (types.empty() ? std::span<const VulnType>(kAllVulnTypes) : types)) {
        if (!out.empty()) out += ", ";
        out += to_string(t);
    }
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

std::vector<CodeChunk> chunk_code(std::string_view code, std::size_t budget) {
    std::vector<CodeChunk> chunks;
    if (code.empty()) return chunks;
    if (budget == 0) budget = 1;
    const auto lines = split_lines(code);

    // Top-level blocks: a decorator run and the def/class it decorates stay
    // together.
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (starts_top_level_block(lines[i]) && !lines[i - 1].starts_with("@")) starts.push_back(i);
    }
    starts.push_back(lines.size());

    CodeChunk current;
    auto flush = [&] {
        if (!current.text.empty()) chunks.push_back(std::move(current));
        current = {};
    };
    auto append_line = [&](std::size_t i) {
        if (current.text.empty()) current.first_line = static_cast<int>(i) + 1;
        current.text += lines[i];
    };

    for (std::size_t b = 0; b + 1 < starts.size(); ++b) {
        std::size_t size = 0;
        for (std::size_t i = starts[b]; i < starts[b + 1]; ++i) size += lines[i].size();
        if (current.text.size() + size > budget) flush();
        if (size <= budget) {
            for (std::size_t i = starts[b]; i < starts[b + 1]; ++i) append_line(i);
            continue;
        }
        for (std::size_t i = starts[b]; i < starts[b + 1]; ++i) {
            if (!current.text.empty() && current.text.size() + lines[i].size() > budget) flush();
            append_line(i);
        }
        flush();
    }
    flush();
    return chunks;
}

LlmRequest analysis_request(std::string_view code, std::span<const VulnType> types,
                            std::string_view model_name) {
    LlmRequest r;
    r.model_name = std::string(model_name);
    r.system_prompt = std::string("[") + std::string(kPromptVersion) +
                      " analysis]\n"
                      "You are a security reviewer for Python code. You report only concrete, "
                      "exploitable weaknesses and you answer with strict JSON and nothing else.";
    std::ostringstream u;
    u << "Review the Python code below for these vulnerability types: " << type_list(types) << ".\n"
      << "Reply with a single JSON object of the form\n"
      << R"({"findings":[{"vuln_type":"<type>","line_start":<int>,"line_end":<int>,"explanation":"<text>"}]})"
      << "\n"
      << "where vuln_type is one of the type names listed above, or \"other\" for a weakness outside "
         "that list. Line numbers are 1-based and refer to the code exactly as given. Reply with "
         "{\"findings\":[]} when nothing applies. Do not wrap the JSON in prose.\n\n"
      << fenced(code) << "\n";
    r.user_prompt = u.str();
    return r;
}

LlmRequest rewrite_request(std::string_view code, std::span<const Finding> findings,
                           std::string_view model_name) {
    LlmRequest r;
    r.model_name = std::string(model_name);
    r.system_prompt = std::string("[") + std::string(kPromptVersion) +
                      " rewrite]\n"
                      "You are a security engineer. You rewrite Python code so that reported "
                      "weaknesses are removed while behaviour is otherwise preserved.";
    std::ostringstream u;
    u << "Rewrite the Python code below to fix the following reported issues:\n";
    if (findings.empty()) u << "- any vulnerability you can identify\n";
    for (const Finding& f : findings) {
        u << "- " << to_string(f.vuln_type) << " at lines " << f.line_start << "-" << f.line_end;
        if (!f.explanation.empty()) u << ": " << f.explanation;
        u << "\n";
    }
    u << "Return the complete corrected file in one fenced ```python code block, followed by a short "
         "summary of the changes.\n\n"
      << fenced(code) << "\n";
    r.user_prompt = u.str();
    return r;
}

std::optional<std::string> first_fenced_block(std::string_view text) {
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string open = trim(lines[i]);
        std::size_t ticks = 0;
        while (ticks < open.size() && open[ticks] == '`') ++ticks;
        if (ticks < 3) continue;
        std::string body;
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
            const std::string close = trim(lines[j]);
            if (close.size() >= ticks && close.find_first_not_of('`') == std::string::npos) return body;
            // Closing fence glued to the last code line.
            const std::string fence(ticks, '`');
            if (close.ends_with(fence) && close.size() > ticks) {
                std::string_view line = lines[j];
                body += line.substr(0, line.rfind(fence));
                return body;
            }
            body += lines[j];
        }
        return std::nullopt;
    }
    return std::nullopt;
}

namespace {

std::optional<VulnType> normalize_type(std::string name) {
    std::string key;
    for (char c : name) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) key += static_cast<char>(std::tolower(u));
        else if (!key.empty() && key.back() != '_') key += '_';
    }
    while (!key.empty() && key.back() == '_') key.pop_back();
    if (auto t = parse_vuln_type(key)) return t;
    static const std::pair<std::string_view, VulnType> aliases[] = {
        {"sqli", VulnType::sql_injection},
        {"sql", VulnType::sql_injection},
        {"cross_site_scripting", VulnType::xss},
        {"os_command_injection", VulnType::command_injection},
        {"shell_injection", VulnType::command_injection},
        {"csrf", VulnType::xsrf},
        {"cross_site_request_forgery", VulnType::xsrf},
        {"path_traversal", VulnType::path_disclosure},
        {"information_disclosure", VulnType::path_disclosure},
        {"rce", VulnType::remote_code_execution},
        {"code_injection", VulnType::remote_code_execution},
        {"unvalidated_redirect", VulnType::open_redirect},
    };
    for (const auto& [alias, t] : aliases) {
        if (key == alias) return t;
    }
    return std::nullopt;
}

std::optional<int> as_line(const json& j) {
    if (j.is_number_integer()) return j.get<int>();
    if (j.is_number()) return static_cast<int>(j.get<double>());
    if (j.is_string()) {
        try {
            return std::stoi(j.get<std::string>());
        } catch (...) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

const json* findings_array(const json& j) {
    if (j.is_array()) return &j;
    if (j.is_object()) {
        for (const char* key : {"findings", "vulnerabilities", "issues"}) {
            if (auto it = j.find(key); it != j.end() && it->is_array()) return &*it;
        }
    }
    return nullptr;
}

std::optional<json> locate_json(std::string_view reply) {
    std::vector<std::string> candidates{trim(reply)};
    if (auto block = first_fenced_block(reply)) candidates.push_back(trim(*block));
    for (auto [open, close] : {std::pair{'{', '}'}, std::pair{'[', ']'}}) {
        const std::size_t b = reply.find(open);
        const std::size_t e = reply.rfind(close);
        if (b != std::string_view::npos && e != std::string_view::npos && e > b) {
            candidates.emplace_back(reply.substr(b, e - b + 1));
        }
    }
    for (const std::string& c : candidates) {
        json j = json::parse(c, nullptr, false);
        if (!j.is_discarded() && findings_array(j)) return j;
    }
    return std::nullopt;
}

}  // namespace

LlmAnalysis parse_analysis(std::string_view reply, int line_count) {
    LlmAnalysis out;
    out.raw_response = std::string(reply);
    try {
        const auto doc = locate_json(reply);
        if (!doc) {
            out.warnings.push_back("reply is not the requested JSON; no findings parsed");
            return out;
        }
        for (const json& item : *findings_array(*doc)) {
            if (!item.is_object()) {
                out.warnings.push_back("skipped a finding that is not an object");
                continue;
            }
            LlmFinding f;
            std::string type_name;
            for (const char* key : {"vuln_type", "type", "vulnerability"}) {
                if (auto it = item.find(key); it != item.end() && it->is_string()) {
                    type_name = it->get<std::string>();
                    break;
                }
            }
            f.vuln_type = normalize_type(type_name);

            std::optional<int> start, end;
            if (auto it = item.find("line_start"); it != item.end()) start = as_line(*it);
            if (auto it = item.find("line_end"); it != item.end()) end = as_line(*it);
            if (!start) {
                if (auto it = item.find("line"); it != item.end()) start = as_line(*it);
            }
            if (!start) {
                out.warnings.push_back("skipped a finding without line numbers");
                continue;
            }
            if (!end) end = start;
            if (*end < *start) std::swap(start, end);
            if (*start < 1 || *end > line_count) {
                out.warnings.push_back("skipped a finding at lines " + std::to_string(*start) + "-" +
                                       std::to_string(*end) + " outside the submitted code");
                continue;
            }
            f.line_start = *start;
            f.line_end = *end;
            for (const char* key : {"explanation", "description", "reason"}) {
                if (auto it = item.find(key); it != item.end() && it->is_string()) {
                    f.explanation = it->get<std::string>();
                    break;
                }
            }
            out.findings.push_back(std::move(f));
        }
    } catch (const std::exception& e) {
        out.findings.clear();
        out.warnings.push_back(std::string("reply could not be parsed: ") + e.what());
    }
    return out;
}

LlmAnalysis analyze_code(ChatProvider& provider, std::string_view code, std::span<const VulnType> types,
                         std::string_view model_name) {
    LlmAnalysis total;
    for (const CodeChunk& chunk : chunk_code(code, provider.context_budget())) {
        const std::string reply = provider.complete(analysis_request(chunk.text, types, model_name));
        LlmAnalysis part = parse_analysis(reply, count_lines(chunk.text));
        for (LlmFinding& f : part.findings) {
            f.line_start += chunk.first_line - 1;
            f.line_end += chunk.first_line - 1;
            total.findings.push_back(std::move(f));
        }
        if (!total.raw_response.empty()) total.raw_response += '\n';
        total.raw_response += part.raw_response;
        for (std::string& w : part.warnings) total.warnings.push_back(std::move(w));
    }
    return total;
}

RewriteResult secure_rewrite(ChatProvider& provider, std::string_view code, std::span<const Finding> findings,
                             std::string_view model_name) {
    if (code.empty()) throw ValidationError("nothing to rewrite: code is empty");
    RewriteResult r;
    r.raw_response = provider.complete(rewrite_request(code, findings, model_name));
    auto block = first_fenced_block(r.raw_response);
    if (!block || trim(*block).empty()) throw NoCodeInResponse("reply contains no fenced code block");
    r.secure_code = std::move(*block);

    // Everything outside the fence is the change summary.
    const std::size_t open = r.raw_response.find("```");
    const std::size_t body = r.raw_response.find(r.secure_code, open);
    std::string summary = trim(std::string_view(r.raw_response).substr(0, open));
    if (body != std::string::npos) {
        std::string_view after = std::string_view(r.raw_response).substr(body + r.secure_code.size());
        const std::size_t nl = after.find('\n');
        after = nl == std::string_view::npos ? std::string_view{} : after.substr(nl + 1);
        const std::string tail = trim(after);
        if (!tail.empty()) summary += summary.empty() ? tail : "\n" + tail;
    }
    r.change_summary = std::move(summary);
    return r;
}

}  // namespace pyguard
