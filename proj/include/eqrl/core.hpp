#pragma once

// Value types shared by every module.

#include <string>
#include <string_view>
#include <vector>

namespace eqrl {

struct SubjectProgram {
  std::string id;
  std::string source;
  std::string problem_id;

  friend bool operator==(const SubjectProgram&, const SubjectProgram&) = default;
};

struct TestCase {
  std::string input;
  std::string expected_output;

  friend bool operator==(const TestCase&, const TestCase&) = default;
};

// Converts CRLF / CR line endings to LF.
inline std::string normalize_newlines(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
    } else {
      out.push_back(text[i]);
    }
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\f\v");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace eqrl
