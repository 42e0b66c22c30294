#include "pyguard/tokenizer.hpp"

#include "pyguard/digest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_map>

namespace pyguard {

std::string_view to_string(TokenKind kind) noexcept {
    switch (kind) {
        case TokenKind::keyword: return "keyword";
        case TokenKind::identifier: return "identifier";
        case TokenKind::op: return "operator";
        case TokenKind::delimiter: return "delimiter";
        case TokenKind::string_lit: return "string_lit";
        case TokenKind::number_lit: return "number_lit";
        case TokenKind::indent: return "indent";
        case TokenKind::dedent: return "dedent";
        case TokenKind::newline: return "newline";
    }
    return "unknown";
}

namespace {

constexpr std::array<std::string_view, 35> kKeywords = {
    "False", "None",   "True",    "and",      "as",       "assert", "async",
    "await", "break",  "class",   "continue", "def",      "del",    "elif",
    "else",  "except", "finally", "for",      "from",     "global", "if",
    "import", "in",    "is",      "lambda",   "nonlocal", "not",    "or",
    "pass",  "raise",  "return",  "try",      "while",    "with",   "yield",
};

// Longest first so a linear scan yields maximal munch.
constexpr std::array<std::string_view, 47> kOperators = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=",
    ">=",  "==",  "!=",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=", "^=", "@=",
    "+",   "-",   "*",   "/",   "%",   "@",  "&",  "|",  "^",  "~",  "<",  ">",
    "=",   ".",   "!",   "(",   ")",   "[",  "]",  "{",  "}",  ",",  ":",
};

bool is_keyword(std::string_view word) {
    return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

bool is_delimiter(std::string_view op) {
    return op == "(" || op == ")" || op == "[" || op == "]" || op == "{" || op == "}" ||
           op == "," || op == ":" || op == ";";
}

bool is_ident_start(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c >= 0x80;
}

bool is_ident_char(unsigned char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_string_prefix(std::string_view word) {
    if (word.size() > 2) return false;
    std::string lower(word);
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return lower == "r" || lower == "u" || lower == "f" || lower == "b" || lower == "br" ||
           lower == "rb" || lower == "fr" || lower == "rf";
}

std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1;
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        const std::size_t n = src_.size();
        while (pos_ < n) {
            if (at_line_start_ && depth_ == 0) {
                if (!begin_line()) break;
                continue;
            }
            const char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\f') {
                ++pos_;
            } else if (c == '#') {
                skip_comment();
            } else if (c == '\n' || c == '\r') {
                end_physical_line();
            } else if (c == '\\') {
                continuation();
            } else if (is_ident_start(static_cast<unsigned char>(c))) {
                word();
            } else if (is_digit(c) || (c == '.' && pos_ + 1 < n && is_digit(src_[pos_ + 1]))) {
                number();
            } else if (c == '"' || c == '\'') {
                string(pos_, pos_);
            } else {
                op_or_error();
            }
        }
        if (line_open_) emit(std::string(kNewlineToken), TokenKind::newline, n, n);
        while (indents_.size() > 1) {
            indents_.pop_back();
            emit(std::string(kDedentToken), TokenKind::dedent, n, n);
        }
        return std::move(out_);
    }

private:
    void emit(std::string text, TokenKind kind, std::size_t start, std::size_t end) {
        out_.push_back(Token{std::move(text), kind, start, end, line_});
        line_open_ = kind != TokenKind::newline;
    }

    std::size_t newline_width(std::size_t at) const {
        if (src_[at] == '\r' && at + 1 < src_.size() && src_[at + 1] == '\n') return 2;
        return 1;
    }

    // Handles indentation at the start of a physical line. Returns false at EOF.
    bool begin_line() {
        const std::size_t n = src_.size();
        int col = 0;
        std::size_t p = pos_;
        for (; p < n; ++p) {
            const char c = src_[p];
            if (c == ' ') ++col;
            else if (c == '\t') col = (col / 8 + 1) * 8;
            else if (c == '\f') col = 0;
            else break;
        }
        if (p >= n) {
            pos_ = p;
            return false;
        }
        const char c = src_[p];
        if (c == '#' || c == '\n' || c == '\r') {
            pos_ = p;
            if (c == '#') skip_comment();
            if (pos_ < n) {
                pos_ += newline_width(pos_);
                ++line_;
            }
            return true;
        }
        if (col > indents_.back()) {
            indents_.push_back(col);
            emit(std::string(kIndentToken), TokenKind::indent, p, p);
        } else {
            while (col < indents_.back()) {
                // Inconsistent dedent: the column takes over the level it
                // falls inside, without a token, so indents stay balanced.
                if (col > indents_[indents_.size() - 2]) {
                    indents_.back() = col;
                    break;
                }
                indents_.pop_back();
                emit(std::string(kDedentToken), TokenKind::dedent, p, p);
            }
        }
        line_open_ = true;
        pos_ = p;
        at_line_start_ = false;
        return true;
    }

    void skip_comment() {
        while (pos_ < src_.size() && src_[pos_] != '\n' && src_[pos_] != '\r') ++pos_;
    }

    void end_physical_line() {
        const std::size_t width = newline_width(pos_);
        if (depth_ == 0 && line_open_) {
            emit(std::string(kNewlineToken), TokenKind::newline, pos_, pos_ + width);
        }
        pos_ += width;
        ++line_;
        if (depth_ == 0) at_line_start_ = true;
    }

    void continuation() {
        const std::size_t next = pos_ + 1;
        if (next < src_.size() && (src_[next] == '\n' || src_[next] == '\r')) {
            pos_ = next + newline_width(next);
            ++line_;
            return;
        }
        emit(std::string(kErrorToken), TokenKind::identifier, pos_, pos_ + 1);
        ++pos_;
    }

    void word() {
        const std::size_t start = pos_;
        std::size_t p = pos_;
        while (p < src_.size() && is_ident_char(static_cast<unsigned char>(src_[p]))) ++p;
        const std::string_view text = src_.substr(start, p - start);
        if (p < src_.size() && (src_[p] == '"' || src_[p] == '\'') && is_string_prefix(text)) {
            string(start, p);
            return;
        }
        emit(std::string(text), is_keyword(text) ? TokenKind::keyword : TokenKind::identifier,
             start, p);
        pos_ = p;
    }

    void number() {
        const std::size_t n = src_.size();
        const std::size_t start = pos_;
        std::size_t p = pos_;
        auto digits = [&] {
            while (p < n && (is_digit(src_[p]) || src_[p] == '_')) ++p;
        };
        if (src_[p] == '0' && p + 1 < n && std::string_view("xXoObB").find(src_[p + 1]) != std::string_view::npos) {
            p += 2;
            while (p < n && (std::isalnum(static_cast<unsigned char>(src_[p])) || src_[p] == '_')) ++p;
        } else {
            digits();
            if (p < n && src_[p] == '.') {
                ++p;
                digits();
            }
            if (p < n && (src_[p] == 'e' || src_[p] == 'E')) {
                std::size_t q = p + 1;
                if (q < n && (src_[q] == '+' || src_[q] == '-')) ++q;
                if (q < n && is_digit(src_[q])) {
                    p = q;
                    digits();
                }
            }
            if (p < n && (src_[p] == 'j' || src_[p] == 'J')) ++p;
        }
        emit(std::string(kNumberToken), TokenKind::number_lit, start, p);
        pos_ = p;
    }

    // `start` is the first byte of the literal (prefix included); `quote_at`
    // the opening quote.
    void string(std::size_t start, std::size_t quote_at) {
        const std::size_t n = src_.size();
        const char q = src_[quote_at];
        const bool triple = quote_at + 2 < n && src_[quote_at + 1] == q && src_[quote_at + 2] == q;
        std::size_t p = quote_at + (triple ? 3 : 1);
        const int start_line = line_;
        int lines = 0;
        bool closed = false;
        while (p < n) {
            const char c = src_[p];
            if (c == '\\') {
                if (p + 1 < n && (src_[p + 1] == '\n' || src_[p + 1] == '\r')) {
                    ++lines;
                    p += 1 + newline_width(p + 1);
                } else {
                    p = std::min(p + 2, n);
                }
                continue;
            }
            if (c == '\n' || c == '\r') {
                if (!triple) break;
                p += newline_width(p);
                ++lines;
                continue;
            }
            if (c == q) {
                if (!triple) {
                    ++p;
                    closed = true;
                    break;
                }
                if (p + 2 < n && src_[p + 1] == q && src_[p + 2] == q) {
                    p += 3;
                    closed = true;
                    break;
                }
            }
            ++p;
        }
        line_ = start_line;
        if (closed) {
            emit(std::string(kStringToken), TokenKind::string_lit, start, p);
        } else {
            emit(std::string(kErrorToken), TokenKind::identifier, start, p);
        }
        line_ = start_line + lines;
        pos_ = p;
    }

    void op_or_error() {
        const std::string_view rest = src_.substr(pos_);
        if (rest.front() == ';') {
            emit(";", TokenKind::delimiter, pos_, pos_ + 1);
            ++pos_;
            return;
        }
        for (std::string_view op : kOperators) {
            if (rest.starts_with(op)) {
                if (op == "(" || op == "[" || op == "{") ++depth_;
                if ((op == ")" || op == "]" || op == "}") && depth_ > 0) --depth_;
                emit(std::string(op), is_delimiter(op) ? TokenKind::delimiter : TokenKind::op, pos_,
                     pos_ + op.size());
                pos_ += op.size();
                return;
            }
        }
        const std::size_t width =
            std::min(utf8_length(static_cast<unsigned char>(rest.front())), rest.size());
        emit(std::string(kErrorToken), TokenKind::identifier, pos_, pos_ + width);
        pos_ += width;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int depth_ = 0;
    bool at_line_start_ = true;
    bool line_open_ = false;
    std::vector<int> indents_{0};
    std::vector<Token> out_;
};

}  // namespace

TokenStream tokenize(std::string_view source, std::string file_path) {
    TokenStream stream;
    stream.file_path = std::move(file_path);
    stream.tokens = Lexer(source).run();
    stream.source_hash = crypto::sha256_hex(source);
    return stream;
}

std::size_t error_token_count(const TokenStream& stream) noexcept {
    return static_cast<std::size_t>(std::count_if(
        stream.tokens.begin(), stream.tokens.end(), [](const Token& t) {
            return t.kind == TokenKind::identifier && t.text == kErrorToken;
        }));
}

std::string detokenize(const TokenStream& stream) {
    std::string out;
    int level = 0;
    bool line_start = true;
    for (const Token& tok : stream.tokens) {
        switch (tok.kind) {
            case TokenKind::indent: ++level; continue;
            case TokenKind::dedent: level = std::max(0, level - 1); continue;
            case TokenKind::newline:
                out += '\n';
                line_start = true;
                continue;
            default: break;
        }
        if (line_start) {
            out.append(static_cast<std::size_t>(level) * 4, ' ');
            line_start = false;
        } else {
            out += ' ';
        }
        if (tok.kind == TokenKind::string_lit) out += "\"STR\"";
        else if (tok.kind == TokenKind::number_lit) out += '0';
        else out += tok.text;
    }
    return out;
}

std::vector<std::string> vocabulary_of(std::span<const TokenStream> corpus, std::size_t min_count) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const TokenStream& s : corpus) {
        for (const Token& t : s.tokens) ++counts[t.text];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [text, count] : counts) {
        if (count >= std::max<std::size_t>(min_count, 1) && text != kUnknownEntry &&
            text != kPaddingEntry) {
            kept.emplace_back(text, count);
        }
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> vocab{std::string(kUnknownEntry), std::string(kPaddingEntry)};
    vocab.reserve(kept.size() + 2);
    for (auto& [text, _] : kept) vocab.push_back(std::move(text));
    return vocab;
}

}  // namespace pyguard
