#pragma once

// Tokenizer for the Python subject language.
//
// Produces the same token stream shape as CPython's `tokenize` module for the
// token kinds the metrics care about (NAME, NUMBER, STRING, OP), plus the
// structural NEWLINE / INDENT / DEDENT tokens the parser needs. Lexing never
// throws: malformed input yields ERRORTOKEN entries and a recorded error so that
// n-gram metrics can still run on broken candidates.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace eqrl::python {

enum class TokenKind : std::uint8_t {
  Name,
  Number,
  String,
  Op,
  Newline,
  Indent,
  Dedent,
  EndMarker,
  Error,
};

struct Token {
  TokenKind kind;
  std::string_view text;  // view into the lexed source
  std::uint32_t begin;    // byte offset
  std::uint32_t end;      // byte offset, exclusive
  std::uint32_t line;     // 1-based
};

struct LexResult {
  std::vector<Token> tokens;
  bool ok = true;
  std::string error;
  std::uint32_t error_line = 0;
};

namespace detail {

inline bool is_ident_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c >= 0x80;
}

inline bool is_ident_char(unsigned char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9');
}

inline bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

inline bool is_hex(unsigned char c) {
  return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

// Operators ordered longest-first so a linear scan gives maximal munch.
inline constexpr std::string_view kOperators[] = {
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==",
    "!=",  "+=",  "-=",  "*=",  "/=",  "%=", "&=", "|=", "^=", "@=", "+",  "-",  "*",  "/",
    "%",   "@",   "&",   "|",   "^",   "~",  "<",  ">",  "(",  ")",  "[",  "]",  "{",  "}",
    ",",   ":",   ".",   ";",   "=",
};

inline bool valid_string_prefix(std::string_view p) {
  std::string lower;
  for (char c : p) lower.push_back(static_cast<char>(c | 0x20));
  return lower.empty() || lower == "r" || lower == "u" || lower == "b" || lower == "f" ||
         lower == "br" || lower == "rb" || lower == "fr" || lower == "rf";
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  LexResult run() {
    indents_.push_back(0);
    at_line_start_ = true;
    while (pos_ < src_.size()) {
      if (at_line_start_ && depth_ == 0) {
        if (!handle_indentation()) continue;
      }
      if (pos_ >= src_.size()) break;
      const unsigned char c = static_cast<unsigned char>(src_[pos_]);
      if (c == ' ' || c == '\t' || c == '\f' || c == '\r') {
        ++pos_;
        continue;
      }
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
        continue;
      }
      if (c == '\\') {
        std::size_t p = pos_ + 1;
        while (p < src_.size() && src_[p] == '\r') ++p;
        if (p < src_.size() && src_[p] == '\n') {
          pos_ = p + 1;
          ++line_;
          continue;
        }
        fail("unexpected character after line continuation");
        emit(TokenKind::Error, pos_, pos_ + 1);
        ++pos_;
        continue;
      }
      if (c == '\n') {
        if (depth_ == 0) {
          emit(TokenKind::Newline, pos_, pos_ + 1);
          at_line_start_ = true;
        }
        ++pos_;
        ++line_;
        continue;
      }
      if (is_ident_start(c)) {
        lex_name_or_string();
        continue;
      }
      if (c == '"' || c == '\'') {
        lex_string(pos_, pos_);
        continue;
      }
      if (is_digit(c) || (c == '.' && pos_ + 1 < src_.size() &&
                          is_digit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        lex_number();
        continue;
      }
      if (!lex_operator()) {
        fail(std::string("invalid character '") + static_cast<char>(c) + "'");
        emit(TokenKind::Error, pos_, pos_ + 1);
        ++pos_;
      }
    }
    finish();
    return std::move(out_);
  }

 private:
  void emit(TokenKind kind, std::size_t b, std::size_t e) {
    out_.tokens.push_back(Token{kind, src_.substr(b, e - b), static_cast<std::uint32_t>(b),
                                static_cast<std::uint32_t>(e), line_});
  }

  void fail(std::string msg) {
    if (out_.ok) {
      out_.ok = false;
      out_.error = std::move(msg);
      out_.error_line = line_;
    }
  }

  // Returns false when the line was blank/comment-only and has been consumed.
  bool handle_indentation() {
    std::size_t col = 0;
    std::size_t p = pos_;
    while (p < src_.size()) {
      const char c = src_[p];
      if (c == ' ') {
        ++col;
      } else if (c == '\t') {
        col = (col / 8 + 1) * 8;
      } else if (c == '\f' || c == '\r') {
        // ignored for indentation purposes
      } else {
        break;
      }
      ++p;
    }
    if (p >= src_.size()) {
      pos_ = p;
      return false;
    }
    if (src_[p] == '\n' || src_[p] == '#') {
      while (p < src_.size() && src_[p] != '\n') ++p;
      if (p < src_.size()) {
        ++p;
        ++line_;
      }
      pos_ = p;
      return false;
    }
    if (src_[p] == '\\') {
      // A continuation at line start does not establish indentation.
      pos_ = p;
      at_line_start_ = false;
      return true;
    }
    at_line_start_ = false;
    if (col > indents_.back()) {
      indents_.push_back(col);
      emit(TokenKind::Indent, p, p);
    } else {
      while (col < indents_.back()) {
        indents_.pop_back();
        emit(TokenKind::Dedent, p, p);
      }
      if (col != indents_.back()) {
        fail("unindent does not match any outer indentation level");
        emit(TokenKind::Error, p, p);
      }
    }
    pos_ = p;
    return true;
  }

  void lex_name_or_string() {
    const std::size_t start = pos_;
    std::size_t p = pos_;
    while (p < src_.size() && is_ident_char(static_cast<unsigned char>(src_[p]))) ++p;
    if (p < src_.size() && (src_[p] == '"' || src_[p] == '\'') && p - start <= 2 &&
        valid_string_prefix(src_.substr(start, p - start))) {
      lex_string(start, p);
      return;
    }
    emit(TokenKind::Name, start, p);
    pos_ = p;
  }

  void lex_string(std::size_t start, std::size_t quote_pos) {
    const char q = src_[quote_pos];
    const bool triple = quote_pos + 2 < src_.size() && src_[quote_pos + 1] == q &&
                        src_[quote_pos + 2] == q;
    std::size_t p = quote_pos + (triple ? 3 : 1);
    const std::uint32_t start_line = line_;
    while (true) {
      if (p >= src_.size()) {
        fail(triple ? "unterminated triple-quoted string literal"
                    : "unterminated string literal");
        line_ = start_line;
        emit(TokenKind::Error, start, src_.size());
        pos_ = src_.size();
        return;
      }
      const char c = src_[p];
      if (c == '\\') {
        if (p + 1 < src_.size() && src_[p + 1] == '\n') ++line_;
        p += 2;
        continue;
      }
      if (c == '\n') {
        if (!triple) {
          fail("unterminated string literal");
          emit(TokenKind::Error, start, p);
          pos_ = p;
          return;
        }
        ++line_;
        ++p;
        continue;
      }
      if (c == q) {
        if (!triple) {
          ++p;
          break;
        }
        if (p + 2 < src_.size() && src_[p + 1] == q && src_[p + 2] == q) {
          p += 3;
          break;
        }
      }
      ++p;
    }
    const std::uint32_t end_line = line_;
    line_ = start_line;
    emit(TokenKind::String, start, p);
    line_ = end_line;
    pos_ = p;
  }

  void lex_number() {
    const std::size_t start = pos_;
    std::size_t p = pos_;
    auto digits = [&](auto pred) {
      while (p < src_.size() &&
             (pred(static_cast<unsigned char>(src_[p])) || src_[p] == '_'))
        ++p;
    };
    if (src_[p] == '0' && p + 1 < src_.size() &&
        (src_[p + 1] == 'x' || src_[p + 1] == 'X' || src_[p + 1] == 'o' ||
         src_[p + 1] == 'O' || src_[p + 1] == 'b' || src_[p + 1] == 'B')) {
      p += 2;
      digits(is_hex);
    } else {
      digits(is_digit);
      if (p < src_.size() && src_[p] == '.') {
        ++p;
        digits(is_digit);
      }
      if (p < src_.size() && (src_[p] == 'e' || src_[p] == 'E')) {
        std::size_t q = p + 1;
        if (q < src_.size() && (src_[q] == '+' || src_[q] == '-')) ++q;
        if (q < src_.size() && is_digit(static_cast<unsigned char>(src_[q]))) {
          p = q;
          digits(is_digit);
        }
      }
      if (p < src_.size() && (src_[p] == 'j' || src_[p] == 'J')) ++p;
      const std::string_view lit = src_.substr(start, p - start);
      if (lit.size() > 1 && lit[0] == '0' &&
          lit.find_first_of(".eEjJ") == std::string_view::npos &&
          lit.find_first_not_of("0_") != std::string_view::npos) {
        fail("leading zeros in decimal integer literals are not permitted");
      }
    }
    emit(TokenKind::Number, start, p);
    pos_ = p;
  }

  bool lex_operator() {
    const std::string_view rest = src_.substr(pos_);
    for (std::string_view op : kOperators) {
      if (rest.substr(0, op.size()) == op) {
        const char c = op[0];
        if (op.size() == 1 && (c == '(' || c == '[' || c == '{')) {
          ++depth_;
        } else if (op.size() == 1 && (c == ')' || c == ']' || c == '}')) {
          if (depth_ == 0) {
            fail(std::string("unmatched '") + c + "'");
          } else {
            --depth_;
          }
        }
        emit(TokenKind::Op, pos_, pos_ + op.size());
        pos_ += op.size();
        return true;
      }
    }
    return false;
  }

  void finish() {
    if (depth_ > 0) fail("unexpected EOF in multi-line statement");
    if (!out_.tokens.empty() && out_.tokens.back().kind != TokenKind::Newline &&
        out_.tokens.back().kind != TokenKind::Dedent) {
      emit(TokenKind::Newline, src_.size(), src_.size());
    }
    while (indents_.size() > 1) {
      indents_.pop_back();
      emit(TokenKind::Dedent, src_.size(), src_.size());
    }
    emit(TokenKind::EndMarker, src_.size(), src_.size());
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::uint32_t line_ = 1;
  int depth_ = 0;
  bool at_line_start_ = true;
  std::vector<std::size_t> indents_;
  LexResult out_;
};

}  // namespace detail

inline LexResult tokenize(std::string_view source) { return detail::Lexer(source).run(); }

// The lexical tokens used by the n-gram metrics: NAME, NUMBER, STRING and OP texts,
// in source order. Broken input still yields a best-effort stream.
inline std::vector<std::string> lexical_tokens(std::string_view source) {
  std::vector<std::string> out;
  for (const Token& t : tokenize(source).tokens) {
    switch (t.kind) {
      case TokenKind::Name:
      case TokenKind::Number:
      case TokenKind::String:
      case TokenKind::Op:
        out.emplace_back(t.text);
        break;
      case TokenKind::Error:
        if (!t.text.empty()) out.emplace_back(t.text);
        break;
      default:
        break;
    }
  }
  return out;
}

}  // namespace eqrl::python
