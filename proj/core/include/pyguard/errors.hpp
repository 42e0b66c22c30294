#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pyguard {

// Base for every error the library raises. Callers that only need a message
// catch this; callers that map errors to exit codes or HTTP statuses catch the
// concrete types below.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PYGUARD_DEFINE_ERROR(Name)                  \
    class Name : public Error {                     \
    public:                                         \
        using Error::Error;                         \
    }

// model files / datasets
PYGUARD_DEFINE_ERROR(IoError);
PYGUARD_DEFINE_ERROR(FormatError);

// training and inference
PYGUARD_DEFINE_ERROR(EmptyCorpus);
PYGUARD_DEFINE_ERROR(EmptyWindow);
PYGUARD_DEFINE_ERROR(DimensionMismatch);
PYGUARD_DEFINE_ERROR(EmptyDataset);
PYGUARD_DEFINE_ERROR(NonFiniteLoss);
PYGUARD_DEFINE_ERROR(InvalidConfig);
PYGUARD_DEFINE_ERROR(InvalidCount);
PYGUARD_DEFINE_ERROR(ModelMissing);

// chat-completion adapter
PYGUARD_DEFINE_ERROR(MissingCredentials);
PYGUARD_DEFINE_ERROR(Timeout);
PYGUARD_DEFINE_ERROR(NoCodeInResponse);

// persistence
PYGUARD_DEFINE_ERROR(DuplicateUsername);
PYGUARD_DEFINE_ERROR(NotFound);
PYGUARD_DEFINE_ERROR(IllegalTransition);
PYGUARD_DEFINE_ERROR(AuthFailed);
PYGUARD_DEFINE_ERROR(ValidationError);

// source ingestion
PYGUARD_DEFINE_ERROR(ArchiveTooLarge);
PYGUARD_DEFINE_ERROR(UnsafePath);
PYGUARD_DEFINE_ERROR(BadArchive);
PYGUARD_DEFINE_ERROR(FetchFailed);
PYGUARD_DEFINE_ERROR(UrlNotAllowed);

#undef PYGUARD_DEFINE_ERROR

// A dataset line that does not match the expected schema.
class SchemaError : public Error {
public:
    SchemaError(std::size_t line, const std::string& detail)
        : Error("line " + std::to_string(line) + ": " + detail), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Non-success reply from a chat-completion endpoint.
class ProviderError : public Error {
public:
    ProviderError(int status, std::string body)
        : Error("provider returned status " + std::to_string(status)),
          status_(status), body_(std::move(body)) {}

    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

}  // namespace pyguard
