#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "eqrl/errors.hpp"
#include "eqrl/hash.hpp"
#include "eqrl/metrics/analysis.hpp"

namespace eqrl::metrics {

inline const std::set<std::string>& python_keywords() {
  static const std::set<std::string> kw = {
      "False", "None",   "True",    "and",      "as",       "assert", "async",
      "await", "break",  "class",   "continue", "def",      "del",    "elif",
      "else",  "except", "finally", "for",      "from",     "global", "if",
      "import", "in",    "is",      "lambda",   "nonlocal", "not",    "or",
      "pass",  "raise",  "return",  "try",      "while",    "with",   "yield"};
  return kw;
}

struct CodeBleuConfig {
  double alpha = 0.25;  // n-gram
  double beta = 0.25;   // keyword-weighted n-gram
  double gamma = 0.25;  // AST subtree match
  double delta = 0.25;  // dataflow match
  int max_ngram = 4;
  double keyword_weight = 5.0;
  std::set<std::string> keyword_list = python_keywords();

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || delta < 0)
      throw ArgumentError("codebleu weights must be non-negative");
    if (std::abs(alpha + beta + gamma + delta - 1.0) > 1e-9)
      throw ArgumentError("codebleu weights must sum to 1");
    if (max_ngram < 1) throw ArgumentError("max_ngram must be >= 1");
    if (!(keyword_weight > 0)) throw ArgumentError("keyword_weight must be positive");
  }
};

struct CodeBleuBreakdown {
  double ngram = 0;
  double weighted_ngram = 0;
  double ast_match = 0;
  double dataflow_match = 0;
  double score = 0;  // 0..100
};

namespace detail {

using NgramCounts = std::unordered_map<std::uint64_t, int>;

inline NgramCounts ngram_counts(const std::vector<std::uint64_t>& ids, int n) {
  NgramCounts out;
  const auto len = static_cast<int>(ids.size());
  for (int i = 0; i + n <= len; ++i) {
    std::uint64_t h = static_cast<std::uint64_t>(n);
    for (int k = 0; k < n; ++k) h = hash_combine(h, ids[static_cast<std::size_t>(i + k)]);
    ++out[h];
  }
  return out;
}

inline double brevity_penalty(std::size_t c, std::size_t r) {
  if (c == 0) return r == 0 ? 1.0 : 0.0;
  if (c > r) return 1.0;
  return std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
}

template <class Map>
int clipped_overlap(const Map& a, const Map& b) {
  int m = 0;
  for (const auto& [k, c] : a) {
    auto it = b.find(k);
    if (it != b.end()) m += std::min(c, it->second);
  }
  return m;
}

}  // namespace detail

// Corpus-style BLEU over one pair: clipped precision, uniform weights, no
// smoothing. An order with no n-grams on either side counts as matched.
inline double ngram_match(const ProgramAnalysis& cand, const ProgramAnalysis& ref, int max_n) {
  double logs = 0;
  for (int n = 1; n <= max_n; ++n) {
    const auto cc = detail::ngram_counts(cand.token_ids, n);
    const auto rc = detail::ngram_counts(ref.token_ids, n);
    int total = 0;
    for (const auto& kv : cc) total += kv.second;
    if (total == 0 && rc.empty()) continue;
    const int matched = detail::clipped_overlap(cc, rc);
    if (matched == 0) return 0.0;
    logs += std::log(static_cast<double>(matched) / total) / max_n;
  }
  return detail::brevity_penalty(cand.tokens.size(), ref.tokens.size()) * std::exp(logs);
}

// Reference-denominated n-gram match with keyword unigrams up-weighted.
inline double weighted_ngram_match(const ProgramAnalysis& cand, const ProgramAnalysis& ref,
                                   const CodeBleuConfig& cfg) {
  std::set<std::uint64_t> kw_ids;
  for (const auto& k : cfg.keyword_list)
    kw_ids.insert(hash_combine(1, fnv1a(k)));
  double logs = 0;
  for (int n = 1; n <= cfg.max_ngram; ++n) {
    const auto cc = detail::ngram_counts(cand.token_ids, n);
    const auto rc = detail::ngram_counts(ref.token_ids, n);
    if (rc.empty()) continue;
    double num = 0, den = 0;
    for (const auto& [g, c] : rc) {
      const double w = (n == 1 && kw_ids.count(g)) ? cfg.keyword_weight : 1.0;
      auto it = cc.find(g);
      if (it != cc.end()) num += std::min(c, it->second) * w;
      den += c * w;
    }
    den = std::max(1.0, den);
    if (num == 0) return 0.0;
    logs += std::log(num / den) / cfg.max_ngram;
  }
  return detail::brevity_penalty(cand.tokens.size(), ref.tokens.size()) * std::exp(logs);
}

inline double ast_match(const ProgramAnalysis& cand, const ProgramAnalysis& ref) {
  if (!cand.parses() || !ref.parses() || ref.subtrees.empty()) return 0.0;
  return static_cast<double>(detail::clipped_overlap(ref.subtree_counts, cand.subtree_counts)) /
         static_cast<double>(ref.subtrees.size());
}

inline double dataflow_match(const ProgramAnalysis& cand, const ProgramAnalysis& ref) {
  if (!cand.parses() || !ref.parses()) return 0.0;
  if (ref.edges.empty()) return 1.0;
  return static_cast<double>(detail::clipped_overlap(ref.edge_counts, cand.edge_counts)) /
         static_cast<double>(ref.edges.size());
}

inline CodeBleuBreakdown codebleu_breakdown(const ProgramAnalysis& cand, const ProgramAnalysis& ref,
                                            const CodeBleuConfig& cfg = {}) {
  CodeBleuBreakdown b;
  b.ngram = ngram_match(cand, ref, cfg.max_ngram);
  b.weighted_ngram = weighted_ngram_match(cand, ref, cfg);
  b.ast_match = ast_match(cand, ref);
  b.dataflow_match = dataflow_match(cand, ref);
  b.score = 100.0 * (cfg.alpha * b.ngram + cfg.beta * b.weighted_ngram + cfg.gamma * b.ast_match +
                     cfg.delta * b.dataflow_match);
  return b;
}

inline CodeBleuBreakdown codebleu_breakdown(std::string_view cand, std::string_view ref,
                                            const CodeBleuConfig& cfg = {}) {
  return codebleu_breakdown(analyze(cand), analyze(ref), cfg);
}

inline double codebleu(std::string_view candidate, std::string_view reference,
                       const CodeBleuConfig& cfg = {}) {
  return codebleu_breakdown(candidate, reference, cfg).score;
}

// Multiset Jaccard over node descriptors; an unparseable side is the empty set.
inline double jaccard_ast(const ProgramAnalysis& p, const ProgramAnalysis& q) {
  std::size_t inter = 0, uni = 0;
  for (const auto& [k, c] : p.descriptors) {
    auto it = q.descriptors.find(k);
    const int other = it == q.descriptors.end() ? 0 : it->second;
    inter += static_cast<std::size_t>(std::min(c, other));
    uni += static_cast<std::size_t>(std::max(c, other));
  }
  for (const auto& [k, c] : q.descriptors)
    if (!p.descriptors.count(k)) uni += static_cast<std::size_t>(c);
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double jaccard_ast(std::string_view p, std::string_view q) {
  return jaccard_ast(analyze(p), analyze(q));
}

// Memoizes program analyses by source hash. Bounded; cleared wholesale when full.
class AnalysisCache {
 public:
  explicit AnalysisCache(std::size_t capacity = 4096) : capacity_(capacity) {}

  std::shared_ptr<const ProgramAnalysis> get(std::string_view source) {
    const std::uint64_t key = fnv1a(source);
    {
      std::lock_guard lock(mu_);
      auto it = entries_.find(key);
      if (it != entries_.end() && it->second.first == source) return it->second.second;
    }
    auto a = std::make_shared<const ProgramAnalysis>(analyze(source));
    std::lock_guard lock(mu_);
    if (entries_.size() >= capacity_) entries_.clear();
    entries_[key] = {std::string(source), a};
    return a;
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::unordered_map<std::uint64_t, std::pair<std::string, std::shared_ptr<const ProgramAnalysis>>>
      entries_;
};

}  // namespace eqrl::metrics
