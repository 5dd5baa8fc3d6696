#pragma once

// Syntax tree for the Python subject language.
//
// Node kinds and child order mirror CPython's `ast` module (class names and
// `_fields` order, lists flattened, `None` fields and expression contexts
// dropped). Operators are leaf nodes of their own kind (Add, Eq, And, ...).
// Keeping this shape lets the metrics be cross-checked against an independent
// implementation built on `ast.parse`.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace eqrl::python {

enum class Ctx : std::uint8_t { None, Load, Store, Del };

struct AstNode {
  std::string kind;
  std::uint32_t begin = 0;  // byte span in the source, end exclusive
  std::uint32_t end = 0;
  // Identifier or literal text. Name: id; Constant/JoinedStr: source segment;
  // arg: parameter name; alias: imported name; FunctionDef/ClassDef: the defined
  // name; Attribute: attr; keyword: arg (may be empty for `**kw`).
  std::string text;
  std::string aux;  // alias: asname; ImportFrom: module
  Ctx ctx = Ctx::None;
  int parent = -1;
  std::vector<int> children;

  bool is_leaf() const { return children.empty(); }
};

struct Ast {
  std::vector<AstNode> nodes;
  int root = -1;

  const AstNode& node(int i) const { return nodes[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return nodes.size(); }

  // Text shown for a leaf in node descriptors; empty for kinds without one.
  static bool kind_has_leaf_text(std::string_view kind) {
    return kind == "Name" || kind == "Constant" || kind == "JoinedStr" || kind == "arg" ||
           kind == "alias";
  }

  // (kind, leaf text if leaf) descriptor used by the Jaccard granularity metric.
  std::string descriptor(int i) const {
    const AstNode& n = node(i);
    if (n.is_leaf() && kind_has_leaf_text(n.kind)) return n.kind + "\x1f" + n.text;
    return n.kind;
  }

  // S-expression of the subtree with all leaf text removed (structure only).
  std::string structure(int i) const {
    const AstNode& n = node(i);
    if (n.is_leaf()) return "(" + n.kind + ")";
    std::string s = "(" + n.kind;
    for (int c : n.children) {
      s.push_back(' ');
      s += structure(c);
    }
    s.push_back(')');
    return s;
  }

  // S-expression including leaf text; used for cross-checking against CPython.
  std::string dump(int i) const {
    const AstNode& n = node(i);
    std::string s = "(" + n.kind;
    if (n.is_leaf() && kind_has_leaf_text(n.kind)) {
      s += " ";
      s += quote(n.text);
    }
    for (int c : n.children) {
      s.push_back(' ');
      s += dump(c);
    }
    s.push_back(')');
    return s;
  }

  std::string dump() const { return root < 0 ? std::string{} : dump(root); }

  std::vector<int> top_level_statements() const {
    return root < 0 ? std::vector<int>{} : node(root).children;
  }

 private:
  static std::string quote(std::string_view t) {
    std::string s = "\"";
    for (char c : t) {
      if (c == '"' || c == '\\') s.push_back('\\');
      if (c == '\n') {
        s += "\\n";
        continue;
      }
      s.push_back(c);
    }
    s.push_back('"');
    return s;
  }
};

}  // namespace eqrl::python
