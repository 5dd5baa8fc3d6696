#pragma once

// Programming-challenge corpus: loading, equivalent pairs, verified
// non-equivalent mutants, and seeded train/validation/evaluation splits.
//
// On-disk layout, one directory per problem:
//   problem.json          {"problem_id": ..., "statement": ...}
//   solutions/<id>.txt    one accepted solution per file
//   tests.json            [{"input": ..., "output": ...}, ...]

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eqrl/core.hpp"
#include "eqrl/errors.hpp"
#include "eqrl/metrics/test_runner.hpp"
#include "eqrl/python/lexer.hpp"
#include "eqrl/random.hpp"
#include "json.hpp"

namespace eqrl::corpus {

using TestList = std::shared_ptr<const std::vector<TestCase>>;

struct Problem {
  std::string problem_id;
  std::string statement;
  std::vector<SubjectProgram> solutions;
  TestList tests;
};

enum class PairLabel { Equivalent, NonEquivalent };

inline const char* to_string(PairLabel l) {
  return l == PairLabel::Equivalent ? "equivalent" : "non_equivalent";
}

struct ProgramPair {
  std::string id;
  SubjectProgram source;  // A
  SubjectProgram target;  // B
  TestList tests;
  PairLabel label = PairLabel::Equivalent;
  std::set<std::string> tags;
};

struct DatasetSplit {
  std::vector<Problem> train;
  std::vector<Problem> validation;
  std::vector<Problem> evaluation;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw EnvironmentError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return normalize_newlines(ss.str());
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) throw FormatError(p.string() + ": missing");
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

inline Problem load_problem(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  Problem p;
  const auto meta_path = dir / "problem.json";
  const auto meta = read_json(meta_path);
  try {
    p.problem_id = meta.at("problem_id").get<std::string>();
    if (meta.contains("statement") && meta["statement"].is_string())
      p.statement = meta["statement"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }

  const auto tests_path = dir / "tests.json";
  const auto tj = read_json(tests_path);
  auto tests = std::make_shared<std::vector<TestCase>>();
  try {
    if (!tj.is_array()) throw FormatError(tests_path.string() + ": expected an array");
    for (const auto& t : tj)
      tests->push_back({normalize_newlines(t.at("input").get<std::string>()),
                        normalize_newlines(t.at("output").get<std::string>())});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(tests_path.string() + ": " + e.what());
  }
  if (tests->empty()) throw FormatError(tests_path.string() + ": no tests");
  p.tests = std::move(tests);

  const auto sol_dir = dir / "solutions";
  if (fs::is_directory(sol_dir)) {
    for (const auto& e : fs::directory_iterator(sol_dir)) {
      if (e.path().extension() != ".txt") continue;
      SubjectProgram s{e.path().stem().string(), read_file(e.path()), p.problem_id};
      if (trim(s.source).empty()) throw FormatError(e.path().string() + ": empty solution");
      p.solutions.push_back(std::move(s));
    }
  }
  std::sort(p.solutions.begin(), p.solutions.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return p;
}

}  // namespace detail

// Problems with at least `min_tests` tests and two solutions, ordered by id.
inline std::vector<Problem> load_corpus(const std::filesystem::path& root, std::size_t min_tests = 50) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw EnvironmentError("not a corpus directory: " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root, ec))
    if (e.is_directory()) dirs.push_back(e.path());
  if (ec) throw EnvironmentError("cannot list " + root.string() + ": " + ec.message());
  std::vector<Problem> out;
  for (const auto& d : dirs) {
    Problem p = detail::load_problem(d);
    if (p.tests->size() >= min_tests && p.solutions.size() >= 2) out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.problem_id < b.problem_id; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i].problem_id == out[i - 1].problem_id)
      throw FormatError("duplicate problem_id " + out[i].problem_id);
  return out;
}

// All unordered solution pairs (i < j by solution id); with a cap, a seeded
// uniform subsample kept in canonical order.
inline std::vector<ProgramPair> make_equivalent_pairs(const Problem& problem,
                                                      std::optional<std::size_t> cap = std::nullopt,
                                                      std::uint64_t seed = 0) {
  std::vector<SubjectProgram> sols = problem.solutions;
  std::sort(sols.begin(), sols.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::vector<ProgramPair> all;
  for (std::size_t i = 0; i < sols.size(); ++i)
    for (std::size_t j = i + 1; j < sols.size(); ++j) {
      ProgramPair p;
      p.id = problem.problem_id + ":" + sols[i].id + "~" + sols[j].id;
      p.source = sols[i];
      p.target = sols[j];
      p.tests = problem.tests;
      all.push_back(std::move(p));
    }
  if (!cap || all.size() <= *cap) return all;
  Rng rng(hash_combine(seed, fnv1a(problem.problem_id)));
  std::vector<ProgramPair> out;
  for (auto i : rng.sample_indices(all.size(), *cap)) out.push_back(std::move(all[i]));
  return out;
}

struct MutationSite {
  std::uint32_t begin;
  std::uint32_t end;
  std::string replacement;
};

namespace detail {

inline std::optional<std::string> mutate_number(std::string_view t) {
  const bool decimal_int = !t.empty() && std::all_of(t.begin(), t.end(), [](char c) {
    return (c >= '0' && c <= '9') || c == '_';
  });
  if (decimal_int) {
    std::string digits;
    for (char c : t)
      if (c != '_') digits.push_back(c);
    if (digits.size() > 17) return std::nullopt;
    return std::to_string(std::stoll(digits) + 1);
  }
  if (t.back() == 'j' || t.back() == 'J') return std::nullopt;
  return "(" + std::string(t) + "+1)";
}

inline std::optional<std::string> mutate_string(std::string_view t) {
  std::size_t q = 0;
  while (q < t.size() && t[q] != '\'' && t[q] != '"') ++q;
  const std::string prefix(t.substr(0, q));
  if (prefix.find_first_of("fF") != std::string::npos) return std::nullopt;
  const bool triple = t.size() >= q + 6 && t.substr(q, 3) == std::string(3, t[q]);
  const std::size_t ql = triple ? 3 : 1;
  std::string body(t.substr(q + ql, t.size() - q - 2 * ql));
  std::string reversed(body.rbegin(), body.rend());
  if (body.find('\\') == std::string::npos && reversed != body)
    body = reversed;
  else
    body += "x";
  return std::string(t.substr(0, q + ql)) + body + std::string(t.substr(t.size() - ql));
}

inline std::optional<std::string> flip_comparison(std::string_view t) {
  if (t == "<") return "<=";
  if (t == "<=") return "<";
  if (t == ">") return ">=";
  if (t == ">=") return ">";
  if (t == "==") return "!=";
  if (t == "!=") return "==";
  return std::nullopt;
}

}  // namespace detail

// Candidate single-token mutation sites in source order: numeric literals,
// comparison operators, string literals.
inline std::vector<MutationSite> mutation_sites(std::string_view source) {
  std::vector<MutationSite> out;
  const auto lex = python::tokenize(source);
  if (!lex.ok) return out;
  for (const auto& t : lex.tokens) {
    std::optional<std::string> r;
    if (t.kind == python::TokenKind::Number)
      r = detail::mutate_number(t.text);
    else if (t.kind == python::TokenKind::String)
      r = detail::mutate_string(t.text);
    else if (t.kind == python::TokenKind::Op)
      r = detail::flip_comparison(t.text);
    if (r && *r != t.text) out.push_back({t.begin, t.end, *r});
  }
  return out;
}

inline std::string apply_site(std::string_view source, const MutationSite& s) {
  std::string out(source.substr(0, s.begin));
  out += s.replacement;
  out += source.substr(s.end);
  return out;
}

// Turns an equivalent pair into a non-equivalent one by a single-site mutation
// of the target that still parses and fails at least one of the pair's tests.
inline ProgramPair mutate_nonequivalent(const ProgramPair& pair, std::uint64_t rng_seed,
                                        const metrics::TestRunConfig& exec = {},
                                        std::size_t max_attempts = 20) {
  if (pair.label != PairLabel::Equivalent) throw ArgumentError("pair is already non-equivalent");
  if (!pair.tests || pair.tests->empty()) throw ArgumentError("pair has no tests");
  if (metrics::run_tests(pair.target.source, *pair.tests, exec) == 0.0)
    throw ArgumentError("target of " + pair.id + " passes no tests");
  auto sites = mutation_sites(pair.target.source);
  Rng rng(hash_combine(rng_seed, fnv1a(pair.id)));
  rng.shuffle(sites);
  if (sites.size() > max_attempts) sites.resize(max_attempts);
  for (std::size_t k = 0; k < sites.size(); ++k) {
    std::string mutant = apply_site(pair.target.source, sites[k]);
    if (!metrics::check_syntax(mutant)) continue;
    if (metrics::run_tests(mutant, *pair.tests, exec) >= 1.0) continue;
    ProgramPair out = pair;
    out.id = pair.id + "#mut";
    out.target.id = pair.target.id + "-mut" + std::to_string(k);
    out.target.source = std::move(mutant);
    out.label = PairLabel::NonEquivalent;
    return out;
  }
  throw MutationExhausted("no verified failing mutant for " + pair.id);
}

// Seeded shuffle then contiguous partition. Sizes are floor(ratio * N); the
// leftover items go one each to train, then validation (skipping empty parts).
inline DatasetSplit split_dataset(std::vector<Problem> problems, std::array<double, 3> ratios,
                                  std::uint64_t seed) {
  double sum = 0;
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw ArgumentError("split ratio out of [0,1]");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("split ratios must sum to 1");
  const std::size_t n = problems.size();
  std::array<std::size_t, 3> sizes{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    sizes[i] = static_cast<std::size_t>(std::floor(ratios[i] * static_cast<double>(n) + 1e-9));
    used += sizes[i];
  }
  std::size_t left = n - std::min(n, used);
  for (int i = 0; left > 0; i = (i + 1) % 3)
    if (ratios[i] > 0) {
      ++sizes[i];
      --left;
    }

  Rng rng(seed);
  rng.shuffle(problems);
  DatasetSplit s;
  s.seed = seed;
  auto it = problems.begin();
  s.train.assign(std::make_move_iterator(it), std::make_move_iterator(it + sizes[0]));
  it += sizes[0];
  s.validation.assign(std::make_move_iterator(it), std::make_move_iterator(it + sizes[1]));
  it += sizes[1];
  s.evaluation.assign(std::make_move_iterator(it), std::make_move_iterator(problems.end()));
  return s;
}

// Equivalent pairs of every problem, capped per problem.
inline std::vector<ProgramPair> equivalent_pairs(const std::vector<Problem>& problems,
                                                 std::optional<std::size_t> cap, std::uint64_t seed) {
  std::vector<ProgramPair> out;
  for (const auto& p : problems) {
    auto v = make_equivalent_pairs(p, cap, seed);
    out.insert(out.end(), std::make_move_iterator(v.begin()), std::make_move_iterator(v.end()));
  }
  return out;
}

// Each equivalent pair plus, where one exists, its verified mutant.
inline std::vector<ProgramPair> labelled_pairs(const std::vector<ProgramPair>& equivalent,
                                               std::uint64_t seed,
                                               const metrics::TestRunConfig& exec = {}) {
  std::vector<ProgramPair> out;
  for (const auto& p : equivalent) {
    out.push_back(p);
    try {
      out.push_back(mutate_nonequivalent(p, seed, exec));
    } catch (const MutationExhausted&) {
    }
  }
  return out;
}

}  // namespace eqrl::corpus
