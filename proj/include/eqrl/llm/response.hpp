#pragma once

// Extracting programs and verdicts from free-form model output.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eqrl/core.hpp"
#include "eqrl/metrics/syntax.hpp"

namespace eqrl::llm {

// Bodies of all fenced code blocks in reading order. A block opens with a
// line of >= 3 backticks (optionally followed by an info string) and closes
// with a line holding at least as many backticks. An unclosed block runs to
// the end of the text.
inline std::vector<std::string> fenced_blocks(std::string_view text) {
  const std::string norm = normalize_newlines(text);
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= norm.size();) {
    const auto nl = norm.find('\n', pos);
    const auto end = nl == std::string::npos ? norm.size() : nl;
    lines.emplace_back(norm.data() + pos, end - pos);
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  auto fence_len = [](std::string_view l) {
    std::size_t i = 0;
    while (i < l.size() && (l[i] == ' ' || l[i] == '\t')) ++i;
    std::size_t n = 0;
    while (i + n < l.size() && l[i + n] == '`') ++n;
    return n >= 3 ? n : 0;
  };
  std::vector<std::string> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t open = fence_len(lines[i]);
    if (!open) continue;
    std::string body;
    std::size_t j = i + 1;
    for (; j < lines.size(); ++j) {
      const std::size_t close = fence_len(lines[j]);
      if (close >= open && trim(lines[j]).size() == close) break;
      body.append(lines[j]);
      body.push_back('\n');
    }
    out.push_back(std::move(body));
    i = j;
  }
  return out;
}

inline std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  return s;
}

// First fenced block if any; otherwise the whole response with leading prose
// lines dropped up to the first line from which the rest parses.
inline std::string parse_code_response(std::string_view response) {
  const auto blocks = fenced_blocks(response);
  if (!blocks.empty()) return strip_trailing_newlines(blocks.front());
  const std::string text = normalize_newlines(response);
  const std::string trimmed = trim(text);
  if (trimmed.empty() || metrics::check_syntax(trimmed)) return trimmed;
  for (std::size_t pos = text.find('\n'); pos != std::string::npos; pos = text.find('\n', pos + 1)) {
    const std::string rest = trim(text.substr(pos + 1));
    if (!rest.empty() && metrics::check_syntax(rest)) return rest;
  }
  return trimmed;
}

enum class Verdict { Equivalent, NotEquivalent, Unparseable };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Equivalent: return "equivalent";
    case Verdict::NotEquivalent: return "not equivalent";
    case Verdict::Unparseable: return "unparseable";
  }
  return "?";
}

inline Verdict extract_verdict(std::string_view answer) {
  std::string lower(answer);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  // collapse whitespace runs so "not\n equivalent" still matches
  std::string flat;
  for (char c : lower) {
    const bool ws = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (ws) {
      if (!flat.empty() && flat.back() != ' ') flat.push_back(' ');
    } else {
      flat.push_back(c);
    }
  }
  if (flat.find("not equivalent") != std::string::npos) return Verdict::NotEquivalent;
  if (flat.find("equivalent") != std::string::npos) return Verdict::Equivalent;
  return Verdict::Unparseable;
}

}  // namespace eqrl::llm
