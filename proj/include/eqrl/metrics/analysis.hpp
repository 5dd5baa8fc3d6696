#pragma once

// Per-program precomputation shared by the similarity metrics: lexical tokens,
// the parse (if any), subtree structure hashes, node descriptors and
// name-abstracted def-use edges.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "eqrl/hash.hpp"
#include "eqrl/python/lexer.hpp"
#include "eqrl/python/parser.hpp"

namespace eqrl::metrics {

using python::Ast;
using python::AstNode;
using python::Ctx;

enum class FlowRelation : std::uint8_t { ComesFrom, ComputedFrom };

// A def-use edge with variable names replaced by their first-occurrence index.
struct DataflowEdge {
  FlowRelation relation;
  int var;
  int source;

  friend auto operator<=>(const DataflowEdge&, const DataflowEdge&) = default;
};

namespace detail {

inline void walk(const Ast& ast, int n, std::vector<int>& order) {
  order.push_back(n);
  for (int c : ast.node(n).children) walk(ast, c, order);
}

inline std::vector<int> preorder(const Ast& ast) {
  std::vector<int> order;
  if (ast.root >= 0) walk(ast, ast.root, order);
  return order;
}

inline std::uint64_t structure_hash(const Ast& ast, int n, std::vector<std::uint64_t>& memo) {
  const AstNode& node = ast.node(n);
  std::uint64_t h = fnv1a(node.kind);
  for (int c : node.children) h = hash_combine(h, structure_hash(ast, c, memo));
  h = hash_combine(h, node.children.size());
  memo[static_cast<std::size_t>(n)] = h;
  return h;
}

// Names bound by an assignment target, looking through Tuple/List/Starred only.
inline void stored_names(const Ast& ast, int n, std::vector<std::string>& out) {
  const AstNode& node = ast.node(n);
  if (node.kind == "Name") {
    out.push_back(node.text);
  } else if (node.kind == "Tuple" || node.kind == "List" || node.kind == "Starred") {
    for (int c : node.children) stored_names(ast, c, out);
  }
}

inline void loaded_names(const Ast& ast, int n, std::vector<std::string>& out) {
  const AstNode& node = ast.node(n);
  if (node.kind == "Name" && node.ctx == Ctx::Load) out.push_back(node.text);
  for (int c : node.children) loaded_names(ast, c, out);
}

inline std::string alias_binding(const AstNode& n) {
  if (!n.aux.empty()) return n.aux;
  return n.text.substr(0, n.text.find('.'));
}

}  // namespace detail

// Subtree structure hashes for the root and every non-leaf node; leaf text is ignored.
inline std::vector<std::uint64_t> subtree_hashes(const Ast& ast) {
  std::vector<std::uint64_t> memo(ast.size(), 0);
  if (ast.root < 0) return {};
  detail::structure_hash(ast, ast.root, memo);
  std::vector<std::uint64_t> out;
  for (int n : detail::preorder(ast))
    if (n == ast.root || !ast.node(n).is_leaf()) out.push_back(memo[static_cast<std::size_t>(n)]);
  return out;
}

// Def-use edges. A name is a variable if the program binds it somewhere
// (assignment target, parameter, def/class name, import). Every load of a
// variable yields a comesFrom edge; every binding yields computedFrom edges
// to the variables read by the bound expression.
inline std::vector<DataflowEdge> dataflow_edges(const Ast& ast) {
  const std::vector<int> order = detail::preorder(ast);
  std::set<std::string> defs;
  for (int n : order) {
    const AstNode& node = ast.node(n);
    if ((node.kind == "Name" && node.ctx == Ctx::Store) || node.kind == "arg" ||
        node.kind == "FunctionDef" || node.kind == "ClassDef") {
      defs.insert(node.text);
    } else if (node.kind == "alias" && node.text != "*") {
      defs.insert(detail::alias_binding(node));
    }
  }
  std::map<std::string, int> index;
  for (int n : order) {
    const AstNode& node = ast.node(n);
    std::string name;
    if (node.kind == "Name" || node.kind == "arg" || node.kind == "FunctionDef" ||
        node.kind == "ClassDef") {
      name = node.text;
    } else if (node.kind == "alias" && node.text != "*") {
      name = detail::alias_binding(node);
    } else {
      continue;
    }
    if (defs.count(name) && !index.count(name)) {
      const int next = static_cast<int>(index.size());
      index.emplace(name, next);
    }
  }

  std::vector<DataflowEdge> edges;
  auto computed = [&](const std::vector<std::string>& targets,
                      const std::vector<std::string>& sources) {
    for (const auto& t : targets) {
      if (!defs.count(t)) continue;
      for (const auto& s : sources)
        if (defs.count(s))
          edges.push_back({FlowRelation::ComputedFrom, index.at(t), index.at(s)});
    }
  };
  for (int n : order) {
    const AstNode& node = ast.node(n);
    const auto& ch = node.children;
    std::vector<std::string> targets, sources;
    if (node.kind == "Name" && node.ctx == Ctx::Load && defs.count(node.text)) {
      const int v = index.at(node.text);
      edges.push_back({FlowRelation::ComesFrom, v, v});
    } else if (node.kind == "Assign") {
      for (std::size_t i = 0; i + 1 < ch.size(); ++i) detail::stored_names(ast, ch[i], targets);
      detail::loaded_names(ast, ch.back(), sources);
      computed(targets, sources);
    } else if (node.kind == "AugAssign") {
      detail::stored_names(ast, ch[0], targets);
      sources = targets;
      detail::loaded_names(ast, ch[2], sources);
      computed(targets, sources);
    } else if (node.kind == "AnnAssign" && ch.size() == 3) {
      detail::stored_names(ast, ch[0], targets);
      detail::loaded_names(ast, ch[2], sources);
      computed(targets, sources);
    } else if (node.kind == "For" || node.kind == "comprehension" || node.kind == "NamedExpr") {
      detail::stored_names(ast, ch[0], targets);
      detail::loaded_names(ast, ch[1], sources);
      computed(targets, sources);
    } else if (node.kind == "withitem" && ch.size() == 2) {
      detail::stored_names(ast, ch[1], targets);
      detail::loaded_names(ast, ch[0], sources);
      computed(targets, sources);
    }
  }
  return edges;
}

// Everything the metrics need from one program, computed once.
struct ProgramAnalysis {
  std::vector<std::string> tokens;
  std::vector<std::uint64_t> token_ids;
  std::optional<Ast> ast;
  std::vector<std::uint64_t> subtrees;
  std::unordered_map<std::uint64_t, int> subtree_counts;
  std::vector<DataflowEdge> edges;
  std::map<DataflowEdge, int> edge_counts;
  std::unordered_map<std::string, int> descriptors;

  bool parses() const { return ast.has_value(); }
};

inline ProgramAnalysis analyze(std::string_view source) {
  ProgramAnalysis a;
  a.tokens = python::lexical_tokens(source);
  a.token_ids.reserve(a.tokens.size());
  for (const auto& t : a.tokens) a.token_ids.push_back(fnv1a(t));
  python::ParseResult r = python::parse(source);
  if (r.ok()) {
    a.ast = std::move(r.ast);
    a.subtrees = subtree_hashes(*a.ast);
    for (auto h : a.subtrees) ++a.subtree_counts[h];
    a.edges = dataflow_edges(*a.ast);
    for (const auto& e : a.edges) ++a.edge_counts[e];
    for (std::size_t i = 0; i < a.ast->size(); ++i) ++a.descriptors[a.ast->descriptor(static_cast<int>(i))];
  }
  return a;
}

}  // namespace eqrl::metrics
