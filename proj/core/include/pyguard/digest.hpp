#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Thin wrappers over the OpenSSL primitives the project needs.
namespace pyguard::crypto {

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

std::string to_hex(std::span<const std::uint8_t> bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);

/// Strict decoder: throws FormatError on characters outside the alphabet or a
/// length that is not a multiple of four.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Cryptographically secure random bytes.
std::vector<std::uint8_t> random_bytes(std::size_t count);

std::vector<std::uint8_t> pbkdf2_sha256(std::string_view password,
                                        std::span<const std::uint8_t> salt,
                                        int iterations, std::size_t key_length);

bool constant_time_equal(std::span<const std::uint8_t> a,
                         std::span<const std::uint8_t> b);

}  // namespace pyguard::crypto
