#pragma once

// Offline stand-in for the LLM. It reads the programs out of the prompt and
// answers with a mix of edits:
//   improving  semantics-preserving edits that move A_i towards B (consistent
//              renames to B's names, then line-diff hunks), best first
//   lateral    semantics-preserving edits that do not (fresh renames, `pass`)
//   corrupt    syntax breakage or a literal/comparison change
// When the pair's tests are registered with the oracle, improving edits must
// pass them all and literal mutants must fail at least one.
// Everything is a pure function of (seed, prompt).

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "eqrl/core.hpp"
#include "eqrl/corpus.hpp"
#include "eqrl/hash.hpp"
#include "eqrl/llm/client.hpp"
#include "eqrl/llm/prompts.hpp"
#include "eqrl/llm/response.hpp"
#include "eqrl/metrics/codebleu.hpp"
#include "eqrl/metrics/test_runner.hpp"
#include "eqrl/python/lexer.hpp"
#include "eqrl/python/parser.hpp"
#include "eqrl/random.hpp"

namespace eqrl::llm {

struct SyntheticMutatorConfig {
  int valid_per_step = 3;
  int corrupt_per_step = 7;
  int improving_per_step = 1;
  std::uint64_t seed = 0;
  int max_verify = 6;             // improving options tried against the tests per step
  double cot_step_quality = 0.6;  // chance a CoT step is an improving edit
  double tot_step_quality = 0.5;

  void validate() const {
    if (valid_per_step < 0 || corrupt_per_step < 0 || improving_per_step < 0)
      throw ArgumentError("synthetic counts must be >= 0");
    if (improving_per_step > valid_per_step) throw ArgumentError("improving_per_step exceeds valid_per_step");
    if (valid_per_step + corrupt_per_step < 1) throw ArgumentError("synthetic step must emit something");
  }

  nlohmann::json to_json() const {
    return {{"valid_per_step", valid_per_step},       {"corrupt_per_step", corrupt_per_step},
            {"improving_per_step", improving_per_step}, {"seed", seed},
            {"max_verify", max_verify},               {"cot_step_quality", cot_step_quality},
            {"tot_step_quality", tot_step_quality}};
  }
};

// Tests of the pairs under study, looked up by target program text.
class TestOracle {
 public:
  explicit TestOracle(metrics::TestRunConfig exec = {}) : exec_(std::move(exec)) {}

  void add(std::string_view target, std::shared_ptr<const std::vector<TestCase>> tests) {
    std::lock_guard lock(mu_);
    by_target_[fnv1a(target)] = std::move(tests);
  }

  std::shared_ptr<const std::vector<TestCase>> find(std::string_view target) const {
    std::lock_guard lock(mu_);
    auto it = by_target_.find(fnv1a(target));
    return it == by_target_.end() ? nullptr : it->second;
  }

  double rho(std::string_view program, const std::vector<TestCase>& tests) const {
    return metrics::run_tests(program, tests, exec_);
  }

  const metrics::TestRunConfig& exec() const { return exec_; }

 private:
  metrics::TestRunConfig exec_;
  mutable std::mutex mu_;
  std::unordered_map<std::uint64_t, std::shared_ptr<const std::vector<TestCase>>> by_target_;
};

namespace synth {

using python::TokenKind;

inline std::string with_newline(std::string s) {
  if (!s.empty() && s.back() != '\n') s.push_back('\n');
  return s;
}

inline bool has_fstring(const python::LexResult& lex) {
  for (const auto& t : lex.tokens) {
    if (t.kind != TokenKind::String) continue;
    for (char c : t.text) {
      if (c == '\'' || c == '"') break;
      if (c == 'f' || c == 'F') return true;
    }
  }
  return false;
}

struct NameInfo {
  std::vector<std::string> assigned;  // first-appearance order
  std::set<std::string> identifiers;  // every NAME token
  std::set<std::string> keywords;     // call keyword-argument names
};

inline NameInfo name_info(std::string_view src) {
  NameInfo info;
  const auto lex = python::tokenize(src);
  for (const auto& t : lex.tokens)
    if (t.kind == TokenKind::Name) info.identifiers.emplace(t.text);
  const auto parsed = python::parse(src);
  if (!parsed.ok()) return info;
  std::set<std::string> stored;
  for (const auto& n : parsed.ast->nodes) {
    if ((n.kind == "Name" && n.ctx == python::Ctx::Store) || n.kind == "arg" || n.kind == "FunctionDef")
      stored.insert(n.text);
    if (n.kind == "keyword" && !n.text.empty()) info.keywords.insert(n.text);
  }
  std::set<std::string> seen;
  for (const auto& t : lex.tokens) {
    const std::string s(t.text);
    if (t.kind == TokenKind::Name && stored.count(s) && seen.insert(s).second) info.assigned.push_back(s);
  }
  return info;
}

// Consistent token-level rename; refuses when the result could change meaning.
inline std::optional<std::string> rename(std::string_view src, const std::string& from, const std::string& to,
                                         const NameInfo& info) {
  if (from == to || info.identifiers.count(to) || metrics::python_keywords().count(to)) return std::nullopt;
  if (info.keywords.count(from) || info.keywords.count(to)) return std::nullopt;
  const auto lex = python::tokenize(src);
  if (!lex.ok || has_fstring(lex)) return std::nullopt;
  std::string out;
  std::size_t pos = 0;
  bool changed = false;
  for (std::size_t i = 0; i < lex.tokens.size(); ++i) {
    const auto& t = lex.tokens[i];
    if (t.kind != TokenKind::Name || t.text != from) continue;
    if (i > 0 && lex.tokens[i - 1].kind == TokenKind::Op && lex.tokens[i - 1].text == ".") continue;
    out.append(src.substr(pos, t.begin - pos));
    out += to;
    pos = t.end;
    changed = true;
  }
  if (!changed) return std::nullopt;
  out.append(src.substr(pos));
  return out;
}

inline std::vector<std::string> split_lines(std::string_view src) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < src.size()) {
    const auto nl = src.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.emplace_back(src.substr(pos));
      break;
    }
    lines.emplace_back(src.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

// Lines compare by indentation and token sequence, so spacing and quotes
// inside tokens matter but layout around them does not.
inline std::string line_key(const std::string& line) {
  std::size_t indent = 0;
  while (indent < line.size() && (line[indent] == ' ' || line[indent] == '\t')) ++indent;
  std::string key = std::to_string(indent) + ":";
  for (const auto& t : python::lexical_tokens(line)) key += t + "\x1f";
  return key;
}

struct Hunk {
  std::size_t a_begin, a_end, b_begin, b_end;
};

inline std::vector<Hunk> line_hunks(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::string> ka, kb;
  for (const auto& l : a) ka.push_back(line_key(l));
  for (const auto& l : b) kb.push_back(line_key(l));
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = n; i-- > 0;)
    for (std::size_t j = m; j-- > 0;)
      lcs[i][j] = ka[i] == kb[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
  std::vector<Hunk> hunks;
  std::size_t i = 0, j = 0;
  std::optional<Hunk> open;
  auto close = [&] {
    if (open) {
      open->a_end = i;
      open->b_end = j;
      hunks.push_back(*open);
      open.reset();
    }
  };
  while (i < n || j < m) {
    if (i < n && j < m && ka[i] == kb[j]) {
      close();
      ++i;
      ++j;
      continue;
    }
    if (!open) open = Hunk{i, i, j, j};
    if (j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j]))
      ++j;
    else
      ++i;
  }
  close();
  return hunks;
}

// Whole-hunk replacements plus single-line deletions, insertions and swaps.
inline std::vector<std::string> hunk_edits(std::string_view a_src, std::string_view b_src) {
  const auto a = split_lines(a_src);
  const auto b = split_lines(b_src);
  std::vector<std::string> out;
  for (const auto& h : line_hunks(a, b)) {
    auto splice = [&](std::size_t a0, std::size_t a1, std::size_t b0, std::size_t b1) {
      std::vector<std::string> lines(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(a0));
      lines.insert(lines.end(), b.begin() + static_cast<std::ptrdiff_t>(b0), b.begin() + static_cast<std::ptrdiff_t>(b1));
      lines.insert(lines.end(), a.begin() + static_cast<std::ptrdiff_t>(a1), a.end());
      out.push_back(join_lines(lines));
    };
    splice(h.a_begin, h.a_end, h.b_begin, h.b_end);
    const std::size_t na = h.a_end - h.a_begin, nb = h.b_end - h.b_begin;
    if (na + nb <= 2) continue;
    for (std::size_t k = h.a_begin; k < h.a_end; ++k) splice(k, k + 1, 0, 0);
    for (std::size_t k = h.b_begin; k < h.b_end; ++k) {
      const std::size_t at = std::min(h.a_begin + (k - h.b_begin), h.a_end);
      splice(at, at, k, k + 1);
    }
    for (std::size_t t = 0; t < std::min(na, nb); ++t) splice(h.a_begin + t, h.a_begin + t + 1, h.b_begin + t, h.b_begin + t + 1);
  }
  return out;
}

inline const std::vector<std::string>& fresh_names() {
  static const std::vector<std::string> names = {"tmp", "val", "res", "cnt", "cur", "acc", "aux", "item", "num", "buf"};
  return names;
}

}  // namespace synth

class SyntheticMutator {
 public:
  SyntheticMutator(SyntheticMutatorConfig cfg, std::shared_ptr<const TestOracle> oracle = nullptr)
      : cfg_(cfg), oracle_(std::move(oracle)) {
    cfg_.validate();
  }

  const SyntheticMutatorConfig& config() const { return cfg_; }

  // Improving edits ranked by similarity to B, best first; B itself comes last.
  std::vector<std::string> improving_options(std::string_view a_i, std::string_view b) const {
    const auto target = cache_.get(b);
    const double base = metrics::codebleu_breakdown(*cache_.get(a_i), *target).score;
    std::vector<std::pair<double, std::string>> scored;
    std::set<std::string> seen{std::string(a_i)};
    auto consider = [&](std::string src) {
      if (!seen.insert(src).second || !metrics::check_syntax(src)) return;
      const double s = metrics::codebleu_breakdown(*cache_.get(src), *target).score;
      if (s > base + 1e-9) scored.emplace_back(s, std::move(src));
    };
    const auto ia = synth::name_info(a_i);
    const auto ib = synth::name_info(b);
    for (const auto& x : ia.assigned) {
      if (ib.identifiers.count(x)) continue;
      for (const auto& y : ib.assigned)
        if (!ia.identifiers.count(y))
          if (auto r = synth::rename(a_i, x, y, ia)) consider(*r);
    }
    for (auto& e : synth::hunk_edits(a_i, b)) consider(std::move(e));
    std::stable_sort(scored.begin(), scored.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
    std::vector<std::string> out;
    for (auto& [s, src] : scored) out.push_back(std::move(src));
    const std::string target_text = synth::with_newline(std::string(b));
    if (!seen.count(target_text) && std::find(out.begin(), out.end(), target_text) == out.end()) out.push_back(target_text);
    return out;
  }

  std::vector<std::string> step(std::string_view a_i, std::string_view b, int n, Rng& rng) const {
    if (n < 1) throw ArgumentError("n must be >= 1");
    const int valid = std::min(cfg_.valid_per_step, n);
    const int improving = std::min(cfg_.improving_per_step, valid);
    const int corrupt = n - valid;
    const auto tests = oracle_ ? oracle_->find(b) : nullptr;
    auto passes = [&](const std::string& src) { return !tests || oracle_->rho(src, *tests) == 1.0; };

    std::vector<std::string> out;
    if (a_i == b || synth::with_newline(std::string(a_i)) == synth::with_newline(std::string(b))) {
      for (int k = 0; k < improving; ++k) out.push_back(synth::with_newline(std::string(b)));
    } else {
      const auto options = improving_options(a_i, b);
      const std::string target = synth::with_newline(std::string(b));
      int tried = 0;
      for (const auto& o : options) {
        if (static_cast<int>(out.size()) >= improving) break;
        if (o == target) {
          out.push_back(o);
        } else if (tried < cfg_.max_verify) {
          ++tried;
          if (passes(o)) out.push_back(o);
        }
      }
      while (static_cast<int>(out.size()) < improving) out.push_back(target);
    }
    while (static_cast<int>(out.size()) < valid) out.push_back(lateral(a_i, b, rng, out));
    for (int k = 0; k < corrupt; ++k) out.push_back(k % 2 == 0 ? syntax_break(a_i, rng) : semantic_break(a_i, rng, tests));
    rng.shuffle(out);
    return out;
  }

  std::string lateral(std::string_view a_i, std::string_view b, Rng& rng, const std::vector<std::string>& taken) const {
    const auto ia = synth::name_info(a_i);
    const auto ib = synth::name_info(b);
    for (int attempt = 0; attempt < 8; ++attempt) {
      std::optional<std::string> c;
      if (!ia.assigned.empty() && rng.below(3) != 0) {
        const auto& x = ia.assigned[rng.below(ia.assigned.size())];
        const auto& names = synth::fresh_names();
        std::string y = names[rng.below(names.size())];
        if (ib.identifiers.count(y)) y += std::to_string(rng.below(10));
        c = synth::rename(a_i, x, y, ia);
      } else {
        c = insert_pass(a_i, rng);
      }
      if (c && metrics::check_syntax(*c) && std::find(taken.begin(), taken.end(), *c) == taken.end()) return *c;
    }
    return synth::with_newline(std::string(a_i)) + "pass\n";
  }

  std::optional<std::string> insert_pass(std::string_view src, Rng& rng) const {
    const auto lines = synth::split_lines(src);
    std::vector<std::size_t> spots;
    for (std::size_t i = 0; i <= lines.size(); ++i) {
      if (i < lines.size() && (lines[i].empty() || lines[i][0] == ' ' || lines[i][0] == '\t')) continue;
      spots.push_back(i);
    }
    if (spots.empty()) return std::nullopt;
    auto lines2 = lines;
    lines2.insert(lines2.begin() + static_cast<std::ptrdiff_t>(spots[rng.below(spots.size())]), "pass");
    std::string c = synth::join_lines(lines2);
    if (!metrics::check_syntax(c)) return std::nullopt;
    return c;
  }

  std::string syntax_break(std::string_view src, Rng& rng) const {
    const auto lex = python::tokenize(src);
    std::vector<const python::Token*> closers, colons;
    for (const auto& t : lex.tokens) {
      if (t.kind != python::TokenKind::Op) continue;
      if (t.text == ")" || t.text == "]") closers.push_back(&t);
      if (t.text == ":") colons.push_back(&t);
    }
    for (int attempt = 0; attempt < 6; ++attempt) {
      std::string c(src);
      switch (rng.below(3)) {
        case 0:
          if (closers.empty()) continue;
          {
            const auto* t = closers[rng.below(closers.size())];
            c.erase(t->begin, t->end - t->begin);
          }
          break;
        case 1:
          if (colons.empty()) continue;
          {
            const auto* t = colons[rng.below(colons.size())];
            c.erase(t->begin, t->end - t->begin);
          }
          break;
        default: {
          const auto lines = synth::split_lines(src);
          if (lines.empty()) continue;
          auto l2 = lines;
          l2[rng.below(l2.size())] += " (";
          c = synth::join_lines(l2);
        }
      }
      if (!metrics::check_syntax(c)) return c;
    }
    return synth::with_newline(std::string(src)) + ")(\n";
  }

  std::string semantic_break(std::string_view src, Rng& rng, const std::shared_ptr<const std::vector<TestCase>>& tests) const {
    auto sites = corpus::mutation_sites(src);
    rng.shuffle(sites);
    for (std::size_t k = 0; k < std::min<std::size_t>(sites.size(), 3); ++k) {
      std::string c = corpus::apply_site(src, sites[k]);
      if (!metrics::check_syntax(c)) continue;
      if (!tests || oracle_->rho(c, *tests) < 1.0) return c;
    }
    return syntax_break(src, rng);
  }

  // A chain of edits standing in for a CoT/ToT answer.
  std::vector<std::string> chain(std::string_view a, std::string_view b, double quality, Rng& rng) const {
    std::vector<std::string> out;
    std::string cur(a);
    const std::size_t len = 3 + rng.below(3);
    const auto tests = oracle_ ? oracle_->find(b) : nullptr;
    for (std::size_t k = 0; k < len; ++k) {
      const double u = rng.uniform();
      std::string next;
      if (u < quality) {
        const auto opts = improving_options(cur, b);
        next = opts.empty() ? std::string(b) : opts.front();
      } else if (u < quality + (1 - quality) / 2) {
        next = lateral(cur, b, rng, {});
      } else {
        next = rng.below(2) ? syntax_break(cur, rng) : semantic_break(cur, rng, tests);
      }
      out.push_back(next);
      cur = next;
      if (synth::with_newline(cur) == synth::with_newline(std::string(b))) break;
    }
    return out;
  }

 private:
  SyntheticMutatorConfig cfg_;
  std::shared_ptr<const TestOracle> oracle_;
  mutable metrics::AnalysisCache cache_{8192};
};

class SyntheticClient : public LlmClient {
 public:
  explicit SyntheticClient(SyntheticMutatorConfig cfg, std::shared_ptr<const TestOracle> oracle = nullptr)
      : mutator_(cfg, std::move(oracle)) {}

  const SyntheticMutator& mutator() const { return mutator_; }

  std::vector<std::string> complete(const std::string& prompt, int n, const GenerationParams&) override {
    if (n < 1) throw ArgumentError("num_samples must be >= 1");
    const auto blocks = fenced_blocks(prompt);
    if (blocks.size() < 2) throw ArgumentError("synthetic client needs two fenced programs in the prompt");
    const auto kind = classify_prompt(prompt);
    const std::uint64_t base = hash_combine(mutator_.config().seed, fnv1a(prompt));
    std::vector<std::string> out;
    if (kind == PromptKind::Transform) {
      Rng rng(base);
      for (const auto& c : mutator_.step(blocks[0], blocks[1], n, rng)) out.push_back(fenced(c));
      return out;
    }
    for (int s = 0; s < n; ++s) {
      Rng rng(hash_combine(base, static_cast<std::uint64_t>(s)));
      switch (kind) {
        case PromptKind::Cot:
        case PromptKind::Tot: out.push_back(reasoning_answer(blocks[0], blocks[1], kind, rng)); break;
        default: out.push_back(verdict_answer(blocks, rng));
      }
    }
    return out;
  }

  std::string name() const override { return "synthetic"; }

 private:
  std::string reasoning_answer(const std::string& a, const std::string& b, PromptKind kind, Rng& rng) const {
    const bool tot = kind == PromptKind::Tot;
    const auto steps = mutator_.chain(a, b, tot ? mutator_.config().tot_step_quality : mutator_.config().cot_step_quality, rng);
    std::string text = tot ? "Expert 1 starts by comparing the two programs.\n" : "First, compare the programs.\n";
    for (std::size_t k = 0; k < steps.size(); ++k) {
      text += tot ? "Expert " + std::to_string(k % 3 + 1) + ":" : "Step " + std::to_string(k + 1) + ":";
      text += fenced(steps[k]);
    }
    const double s = metrics::codebleu(steps.empty() ? a : steps.back(), b) / 100.0;
    text += s >= 0.9 ? "So the programs are equivalent.\n" : "So the programs are not equivalent.\n";
    return text;
  }

  // Says "equivalent" with probability equal to the similarity between the
  // last program shown and B.
  std::string verdict_answer(const std::vector<std::string>& blocks, Rng& rng) const {
    const std::string& last = blocks.size() > 2 ? blocks.back() : blocks[0];
    const double s = metrics::codebleu(last, blocks[1]) / 100.0;
    return rng.uniform() < s ? "The programs are equivalent." : "The programs are not equivalent.";
  }

  SyntheticMutator mutator_;
};

}  // namespace eqrl::llm
