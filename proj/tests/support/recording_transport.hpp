#pragma once

#include "pyguard/llm.hpp"

#include <mutex>
#include <string>
#include <vector>

namespace pyguard::testing {

/// HttpTransport that never touches the network: it records every call and
/// answers with a fixed reply.
class RecordingTransport final : public HttpTransport {
public:
    struct Call {
        std::string url;
        std::string body;
        std::vector<std::pair<std::string, std::string>> headers;
    };

    explicit RecordingTransport(HttpReply reply = {200, ""}) : reply_(std::move(reply)) {}

    HttpReply post_json(const std::string& url, const std::string& body,
                        const std::vector<std::pair<std::string, std::string>>& headers,
                        std::chrono::milliseconds) override {
        std::lock_guard lock(mu_);
        calls_.push_back({url, body, headers});
        return reply_;
    }

    std::vector<Call> calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

private:
    HttpReply reply_;
    mutable std::mutex mu_;
    std::vector<Call> calls_;
};

}  // namespace pyguard::testing
