#pragma once

// Prompt templates. Programs are embedded as fenced code blocks so that the
// boundaries survive any program text.

#include <string>
#include <string_view>
#include <vector>

#include "eqrl/errors.hpp"

namespace eqrl::llm {

enum class PromptKind { Transform, Cot, Tot, DownstreamAgent, DownstreamPlain };

inline const char* to_string(PromptKind k) {
  switch (k) {
    case PromptKind::Transform: return "transform";
    case PromptKind::Cot: return "cot";
    case PromptKind::Tot: return "tot";
    case PromptKind::DownstreamAgent: return "downstream_agent";
    case PromptKind::DownstreamPlain: return "downstream_plain";
  }
  return "?";
}

inline constexpr std::string_view kTransformTemplate =
    "Given programs {A} and {B}, transform the first program so that it becomes syntactically more similar "
    "to the second program while retaining its semantics. Apply only one atomic transformation. Provide only "
    "the source code without your comments.";

inline constexpr std::string_view kEquivalenceQuestion =
    "Are these two programs semantically equivalent? Answer 'equivalent' or 'not equivalent'.";

inline constexpr std::string_view kCotTrigger = "Let's think step by step.";

inline constexpr std::string_view kTotPreamble =
    "Imagine {n} different experts are answering this question.\n"
    "All experts will write down 1 step of their thinking,\n"
    "then share it with the group.\n"
    "Then all experts will go on to the next step, etc.\n"
    "If any expert realizes they're wrong at any point, then they leave.\n"
    "The question is ";

// A fence longer than any backtick run inside the text.
inline std::string fence_for(std::string_view text) {
  std::size_t longest = 0, run = 0;
  for (char c : text) {
    run = c == '`' ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  return std::string(std::max<std::size_t>(3, longest + 1), '`');
}

inline std::string fenced(std::string_view program) {
  std::string body(program);
  while (!body.empty() && body.back() == '\n') body.pop_back();
  const std::string f = fence_for(body);
  return "\n" + f + "python\n" + body + "\n" + f + "\n";
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
  return s;
}

inline std::string render_transform_prompt(std::string_view a_i, std::string_view b) {
  if (b.empty()) throw ArgumentError("target program is empty");
  const std::string t(kTransformTemplate);
  const auto pa = t.find("{A}");
  const auto pb = t.find("{B}");
  return t.substr(0, pa) + fenced(a_i) + t.substr(pa + 3, pb - pa - 3) + fenced(b) + t.substr(pb + 3);
}

inline std::string equivalence_question(std::string_view a, std::string_view b) {
  return std::string(kEquivalenceQuestion) + "\n\nProgram A:" + fenced(a) + "\nProgram B:" + fenced(b);
}

inline std::string render_cot_prompt(std::string_view a, std::string_view b) {
  return equivalence_question(a, b) + "\n" + std::string(kCotTrigger);
}

inline std::string render_tot_prompt(std::string_view a, std::string_view b, int experts = 3) {
  if (experts < 1) throw ArgumentError("experts must be >= 1");
  return replace_all(std::string(kTotPreamble), "{n}", std::to_string(experts)) + equivalence_question(a, b);
}

inline std::string render_downstream_prompt(std::string_view a, std::string_view b,
                                            const std::vector<std::string>& steps) {
  std::string p = equivalence_question(a, b);
  if (!steps.empty()) {
    p += "\nThe first program was transformed step by step towards the second program:\n";
    for (std::size_t i = 0; i < steps.size(); ++i) p += "\nStep " + std::to_string(i + 1) + ":" + fenced(steps[i]);
  }
  return p;
}

inline PromptKind classify_prompt(std::string_view prompt) {
  if (prompt.starts_with("Given programs ")) return PromptKind::Transform;
  if (prompt.starts_with("Imagine ")) return PromptKind::Tot;
  if (prompt.ends_with(kCotTrigger)) return PromptKind::Cot;
  if (prompt.find("\nStep 1:") != std::string_view::npos) return PromptKind::DownstreamAgent;
  return PromptKind::DownstreamPlain;
}

}  // namespace eqrl::llm
