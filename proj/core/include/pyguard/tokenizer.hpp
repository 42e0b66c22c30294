#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pyguard {

enum class TokenKind {
    keyword,
    identifier,
    op,          // wire name "operator"
    delimiter,
    string_lit,
    number_lit,
    indent,
    dedent,
    newline,
};

std::string_view to_string(TokenKind kind) noexcept;

inline constexpr std::string_view kStringToken = "STR";
inline constexpr std::string_view kNumberToken = "NUM";
inline constexpr std::string_view kErrorToken = "ERR";
inline constexpr std::string_view kIndentToken = "INDENT";
inline constexpr std::string_view kDedentToken = "DEDENT";
inline constexpr std::string_view kNewlineToken = "NEWLINE";

struct Token {
    std::string text;
    TokenKind kind = TokenKind::identifier;
    std::size_t byte_start = 0;
    std::size_t byte_end = 0;  // exclusive
    int line = 1;

    bool operator==(const Token&) const = default;
};

struct TokenStream {
    std::string file_path;
    std::vector<Token> tokens;
    std::string source_hash;  // sha256 of the raw bytes, lowercase hex

    bool operator==(const TokenStream&) const = default;
};

/**
 * Lexes Python source into normalized tokens.
 *
 * Never fails. Comments and blank lines produce nothing; string literals
 * become "STR", numeric literals "NUM". Logical-line structure is kept through
 * newline / indent / dedent tokens, where indent and dedent carry zero-width
 * spans. A final newline is synthesized (zero-width, at end of input) when the
 * last logical line has no line terminator. Unterminated strings and bytes
 * that start no Python token become identifier tokens with text "ERR".
 */
TokenStream tokenize(std::string_view source, std::string file_path);

/// Number of "ERR" tokens produced while lexing.
std::size_t error_token_count(const TokenStream& stream) noexcept;

/**
 * Renders a normalized stream back to lexable text: strings as "STR",
 * numbers as 0, indentation as four spaces per level. Re-tokenizing the
 * result reproduces the token texts of the input stream.
 */
std::string detokenize(const TokenStream& stream);

/**
 * Distinct token texts with corpus frequency >= min_count, ordered by
 * descending frequency then ascending text, preceded by the reserved
 * entries "UNK" (index 0) and "PAD" (index 1).
 */
std::vector<std::string> vocabulary_of(std::span<const TokenStream> corpus,
                                       std::size_t min_count);

inline constexpr std::string_view kUnknownEntry = "UNK";
inline constexpr std::string_view kPaddingEntry = "PAD";

}  // namespace pyguard
