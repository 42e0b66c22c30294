#pragma once

// Shared on-disk container for word2vec and BiLSTM models: one UTF-8 JSON
// document whose tensors are base64 blobs of little-endian float32, row-major.

#include "json.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pyguard::model_file {

inline constexpr int kFormatVersion = 1;

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> values;
};

struct Document {
    std::string kind;  // "word2vec" | "bilstm"
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::string> vocab;
    std::map<std::string, Tensor> tensors;
    nlohmann::json extra = nlohmann::json::object();  // additional top-level fields
};

std::string serialize(const Document& doc);

/// Throws FormatError on any structural problem, including a kind other than
/// `expected_kind` and tensors whose data length disagrees with their shape.
Document parse(std::string_view text, std::string_view expected_kind);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

void write(const Document& doc, const std::filesystem::path& path);
Document read(const std::filesystem::path& path, std::string_view expected_kind);

/// Fetches a tensor and checks its shape; throws FormatError on mismatch.
const Tensor& require_tensor(const Document& doc, const std::string& name,
                             const std::vector<std::size_t>& shape);

}  // namespace pyguard::model_file
