#include "model_file.hpp"

#include "pyguard/digest.hpp"
#include "pyguard/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pyguard::model_file {

static_assert(std::endian::native == std::endian::little,
              "model files store little-endian float32; big-endian hosts need byte swapping");

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string encode_floats(const std::vector<float>& values) {
    std::vector<std::uint8_t> bytes(values.size() * sizeof(float));
    if (!bytes.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
    return crypto::base64_encode(bytes);
}

}  // namespace

std::string serialize(const Document& doc) {
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, t] : doc.tensors) {
        tensors[name] = {{"shape", t.shape}, {"dtype", "f32"}, {"data", encode_floats(t.values)}};
    }
    nlohmann::json j = doc.extra.is_object() ? doc.extra : nlohmann::json::object();
    j["format_version"] = kFormatVersion;
    j["kind"] = doc.kind;
    j["config"] = doc.config;
    j["vocab"] = doc.vocab;
    j["tensors"] = std::move(tensors);
    return j.dump();
}

Document parse(std::string_view text, std::string_view expected_kind) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) throw FormatError("model file is not a JSON object");

    Document doc;
    try {
        if (j.at("format_version").get<int>() != kFormatVersion) {
            throw FormatError("unsupported format_version");
        }
        doc.kind = j.at("kind").get<std::string>();
        if (doc.kind != expected_kind) {
            throw FormatError("expected model kind '" + std::string(expected_kind) + "', found '" +
                              doc.kind + "'");
        }
        doc.config = j.at("config");
        if (!doc.config.is_object()) throw FormatError("config must be an object");
        doc.vocab = j.at("vocab").get<std::vector<std::string>>();
        const nlohmann::json& tensors = j.at("tensors");
        if (!tensors.is_object()) throw FormatError("tensors must be an object");
        for (const auto& [name, tj] : tensors.items()) {
            if (tj.at("dtype").get<std::string>() != "f32") {
                throw FormatError("tensor '" + name + "' has unsupported dtype");
            }
            Tensor t;
            t.shape = tj.at("shape").get<std::vector<std::size_t>>();
            const std::vector<std::uint8_t> bytes =
                crypto::base64_decode(tj.at("data").get<std::string>());
            if (bytes.size() != element_count(t.shape) * sizeof(float)) {
                throw FormatError("tensor '" + name + "' data length does not match its shape");
            }
            t.values.resize(bytes.size() / sizeof(float));
            if (!bytes.empty()) std::memcpy(t.values.data(), bytes.data(), bytes.size());
            doc.tensors.emplace(name, std::move(t));
        }
        for (const auto& [key, value] : j.items()) {
            if (key != "format_version" && key != "kind" && key != "config" && key != "vocab" &&
                key != "tensors") {
                doc.extra[key] = value;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model file: ") + e.what());
    }
    return doc;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write(const Document& doc, const std::filesystem::path& path) {
    write_text(path, serialize(doc));
}

Document read(const std::filesystem::path& path, std::string_view expected_kind) {
    return parse(read_text(path), expected_kind);
}

const Tensor& require_tensor(const Document& doc, const std::string& name,
                             const std::vector<std::size_t>& shape) {
    auto it = doc.tensors.find(name);
    if (it == doc.tensors.end()) throw FormatError("missing tensor '" + name + "'");
    if (it->second.shape != shape) throw FormatError("tensor '" + name + "' has wrong shape");
    return it->second;
}

}  // namespace pyguard::model_file
