#pragma once

// Recursive-descent parser for the Python 3 subject language.
//
// Covers the statement and expression grammar used by competitive-programming
// solutions (everything except async constructs, `match`, and parenthesized
// with-items). Any construct outside that set is reported as a syntax failure,
// which the metrics score as syntactically invalid.

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eqrl/python/ast.hpp"
#include "eqrl/python/lexer.hpp"

namespace eqrl::python {

struct SyntaxFailure {
  std::string message;
  std::uint32_t line = 0;
};

struct ParseResult {
  std::optional<Ast> ast;
  SyntaxFailure failure;

  bool ok() const { return ast.has_value(); }
};

namespace detail {

struct ParseError : std::runtime_error {
  std::uint32_t line;
  ParseError(const std::string& m, std::uint32_t l) : std::runtime_error(m), line(l) {}
};

inline bool is_keyword(std::string_view s) {
  static constexpr std::string_view kw[] = {
      "False", "None",   "True",    "and",      "as",   "assert", "async",  "await",
      "break", "class",  "continue", "def",     "del",  "elif",   "else",   "except",
      "finally", "for",  "from",    "global",   "if",   "import", "in",     "is",
      "lambda", "nonlocal", "not",  "or",       "pass", "raise",  "return", "try",
      "while", "with",   "yield"};
  for (auto k : kw)
    if (k == s) return true;
  return false;
}

class Parser {
 public:
  Parser(std::string_view src, std::vector<Token> toks) : src_(src), toks_(std::move(toks)) {}

  Ast run() {
    std::vector<int> body;
    while (!at(TokenKind::EndMarker)) {
      if (at(TokenKind::Newline)) {
        ++pos_;
        continue;
      }
      statement(body);
    }
    const std::uint32_t end = static_cast<std::uint32_t>(src_.size());
    ast_.root = make("Module", 0, end, std::move(body));
    for (std::size_t i = 0; i < ast_.nodes.size(); ++i)
      for (int c : ast_.nodes[i].children) ast_.nodes[static_cast<std::size_t>(c)].parent = static_cast<int>(i);
    return std::move(ast_);
  }

 private:
  // ---- token helpers -------------------------------------------------------
  const Token& cur() const { return toks_[pos_]; }
  const Token& prev() const { return toks_[pos_ - 1]; }
  const Token& peek(std::size_t k = 1) const {
    return toks_[std::min(pos_ + k, toks_.size() - 1)];
  }
  bool at(TokenKind k) const { return cur().kind == k; }
  bool at_op(std::string_view s) const { return cur().kind == TokenKind::Op && cur().text == s; }
  bool at_kw(std::string_view s) const { return cur().kind == TokenKind::Name && cur().text == s; }
  bool at_name() const { return cur().kind == TokenKind::Name && !is_keyword(cur().text); }

  [[noreturn]] void error(const std::string& msg) const { throw ParseError(msg, cur().line); }

  const Token& expect_op(std::string_view s) {
    if (!at_op(s)) error("expected '" + std::string(s) + "'");
    return toks_[pos_++];
  }
  const Token& expect_kw(std::string_view s) {
    if (!at_kw(s)) error("expected '" + std::string(s) + "'");
    return toks_[pos_++];
  }
  const Token& expect_name() {
    if (!at_name()) error("expected identifier");
    return toks_[pos_++];
  }
  bool accept_op(std::string_view s) {
    if (at_op(s)) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool accept_kw(std::string_view s) {
    if (at_kw(s)) {
      ++pos_;
      return true;
    }
    return false;
  }

  // ---- node helpers --------------------------------------------------------
  int make(std::string kind, std::uint32_t b, std::uint32_t e, std::vector<int> children = {},
           std::string text = {}) {
    AstNode n;
    n.kind = std::move(kind);
    n.begin = b;
    n.end = e;
    n.children = std::move(children);
    n.text = std::move(text);
    ast_.nodes.push_back(std::move(n));
    return static_cast<int>(ast_.nodes.size() - 1);
  }
  AstNode& N(int i) { return ast_.nodes[static_cast<std::size_t>(i)]; }
  std::uint32_t B(int i) { return N(i).begin; }
  std::uint32_t E(int i) { return N(i).end; }
  int leaf_op(std::string kind, const Token& t) { return make(std::move(kind), t.begin, t.end); }
  int set_ctx_load(int n) {
    N(n).ctx = Ctx::Load;
    return n;
  }

  static void append(std::vector<int>& v, const std::vector<int>& w) {
    v.insert(v.end(), w.begin(), w.end());
  }

  // ---- statements ----------------------------------------------------------
  void statement(std::vector<int>& out) {
    if (at(TokenKind::Indent)) error("unexpected indent");
    if (at(TokenKind::Dedent)) error("unexpected unindent");
    if (at(TokenKind::Error)) error("invalid token");
    if (cur().kind == TokenKind::Name) {
      const std::string_view k = cur().text;
      if (k == "if") return out.push_back(if_stmt());
      if (k == "while") return out.push_back(while_stmt());
      if (k == "for") return out.push_back(for_stmt());
      if (k == "try") return out.push_back(try_stmt());
      if (k == "with") return out.push_back(with_stmt());
      if (k == "def") return out.push_back(funcdef({}, cur().begin));
      if (k == "class") return out.push_back(classdef({}, cur().begin));
      if (k == "async") error("async constructs are not supported");
    }
    if (at_op("@")) return out.push_back(decorated());
    simple_stmts(out);
  }

  void simple_stmts(std::vector<int>& out) {
    while (true) {
      out.push_back(simple_stmt());
      if (accept_op(";")) {
        if (at(TokenKind::Newline)) break;
        continue;
      }
      break;
    }
    if (!at(TokenKind::Newline)) error("invalid syntax");
    ++pos_;
  }

  std::vector<int> block() {
    expect_op(":");
    std::vector<int> body;
    if (at(TokenKind::Newline)) {
      ++pos_;
      if (!at(TokenKind::Indent)) error("expected an indented block");
      ++pos_;
      while (!at(TokenKind::Dedent) && !at(TokenKind::EndMarker)) statement(body);
      if (at(TokenKind::Dedent)) ++pos_;
    } else {
      simple_stmts(body);
    }
    if (body.empty()) error("expected an indented block");
    return body;
  }

  std::uint32_t last_end(const std::vector<int>& v, std::uint32_t fallback) {
    return v.empty() ? fallback : E(v.back());
  }

  int if_stmt() {
    const Token& kw = toks_[pos_++];  // 'if' or 'elif'
    int test = named_expression();
    std::vector<int> body = block();
    std::vector<int> orelse;
    if (at_kw("elif")) {
      orelse.push_back(if_stmt());
    } else if (accept_kw("else")) {
      orelse = block();
    }
    std::vector<int> ch{test};
    append(ch, body);
    append(ch, orelse);
    std::uint32_t e = last_end(orelse, last_end(body, E(test)));
    return make("If", kw.begin, e, std::move(ch));
  }

  int while_stmt() {
    const Token& kw = expect_kw("while");
    int test = named_expression();
    std::vector<int> body = block();
    std::vector<int> orelse;
    if (accept_kw("else")) orelse = block();
    std::vector<int> ch{test};
    append(ch, body);
    append(ch, orelse);
    return make("While", kw.begin, last_end(orelse, E(body.back())), std::move(ch));
  }

  int for_stmt() {
    const Token& kw = expect_kw("for");
    int target = target_list();
    set_store(target);
    expect_kw("in");
    int iter = star_expressions();
    std::vector<int> body = block();
    std::vector<int> orelse;
    if (accept_kw("else")) orelse = block();
    std::vector<int> ch{target, iter};
    append(ch, body);
    append(ch, orelse);
    return make("For", kw.begin, last_end(orelse, E(body.back())), std::move(ch));
  }

  int try_stmt() {
    const Token& kw = expect_kw("try");
    std::vector<int> body = block();
    std::vector<int> handlers, orelse, finalbody;
    while (at_kw("except")) {
      const Token& ex = toks_[pos_++];
      std::vector<int> ch;
      std::string name;
      if (!at_op(":")) {
        ch.push_back(expression());
        if (accept_kw("as")) name = std::string(expect_name().text);
      }
      std::vector<int> hb = block();
      append(ch, hb);
      int h = make("ExceptHandler", ex.begin, E(hb.back()), std::move(ch), std::move(name));
      handlers.push_back(h);
    }
    if (!handlers.empty() && accept_kw("else")) orelse = block();
    if (accept_kw("finally")) finalbody = block();
    if (handlers.empty() && finalbody.empty()) error("expected 'except' or 'finally' block");
    std::vector<int> ch = body;
    append(ch, handlers);
    append(ch, orelse);
    append(ch, finalbody);
    std::uint32_t e = E(ch.back());
    return make("Try", kw.begin, e, std::move(ch));
  }

  int with_stmt() {
    const Token& kw = expect_kw("with");
    std::vector<int> items;
    do {
      int ctx = expression();
      std::vector<int> ich{ctx};
      std::uint32_t e = E(ctx);
      if (accept_kw("as")) {
        int t = target_atom_or_primary();
        set_store(t);
        ich.push_back(t);
        e = E(t);
      }
      items.push_back(make("withitem", B(ctx), e, std::move(ich)));
    } while (accept_op(","));
    std::vector<int> body = block();
    std::vector<int> ch = items;
    append(ch, body);
    return make("With", kw.begin, E(body.back()), std::move(ch));
  }

  int decorated() {
    const std::uint32_t begin = cur().begin;
    std::vector<int> decorators;
    while (accept_op("@")) {
      decorators.push_back(named_expression());
      if (!at(TokenKind::Newline)) error("invalid syntax");
      ++pos_;
    }
    if (at_kw("def")) return funcdef(std::move(decorators), begin);
    if (at_kw("class")) return classdef(std::move(decorators), begin);
    error("expected 'def' or 'class' after decorator");
  }

  int funcdef(std::vector<int> decorators, std::uint32_t begin) {
    expect_kw("def");
    std::string name(expect_name().text);
    const Token& lp = expect_op("(");
    int args = parameters(")", true, lp.end);
    expect_op(")");
    int returns = -1;
    if (accept_op("->")) returns = expression();
    std::vector<int> body = block();
    std::vector<int> ch{args};
    append(ch, body);
    append(ch, decorators);
    if (returns >= 0) ch.push_back(returns);
    return make("FunctionDef", begin, E(body.back()), std::move(ch), std::move(name));
  }

  int classdef(std::vector<int> decorators, std::uint32_t begin) {
    expect_kw("class");
    std::string name(expect_name().text);
    std::vector<int> bases, keywords;
    if (accept_op("(")) {
      call_arguments(bases, keywords);
      expect_op(")");
    }
    std::vector<int> body = block();
    std::vector<int> ch = bases;
    append(ch, keywords);
    append(ch, body);
    append(ch, decorators);
    return make("ClassDef", begin, E(body.back()), std::move(ch), std::move(name));
  }

  // Parameter list for `def` (annotations allowed) or `lambda`.
  int parameters(std::string_view closer, bool annotations, std::uint32_t at_pos) {
    std::vector<int> posonly, args, kwonly, kw_defaults, defaults;
    int vararg = -1, kwarg = -1;
    bool seen_star = false, seen_default = false;
    std::uint32_t begin = at_pos, end = at_pos;
    bool first = true;
    while (!at_op(closer)) {
      if (!first) {
        expect_op(",");
        if (at_op(closer)) break;
      }
      first = false;
      if (at_op("/")) {
        if (seen_star || !posonly.empty() || args.empty()) error("invalid '/' in parameters");
        end = cur().end;
        ++pos_;
        posonly = std::move(args);
        args.clear();
        continue;
      }
      if (at_op("*")) {
        if (seen_star) error("multiple '*' in parameters");
        seen_star = true;
        if (args.empty() && posonly.empty()) begin = cur().begin;
        end = cur().end;
        ++pos_;
        if (at_name()) {
          vararg = param(annotations);
          end = E(vararg);
        }
        continue;
      }
      if (at_op("**")) {
        if (args.empty() && posonly.empty() && !seen_star) begin = cur().begin;
        ++pos_;
        kwarg = param(annotations);
        end = E(kwarg);
        if (!at_op(closer) && !(at_op(",") && peek().kind == TokenKind::Op && peek().text == closer))
          error("arguments cannot follow var-keyword argument");
        continue;
      }
      int p = param(annotations);
      if (args.empty() && posonly.empty() && kwonly.empty() && !seen_star) begin = B(p);
      end = E(p);
      int def = -1;
      if (accept_op("=")) {
        def = expression();
        end = E(def);
      }
      if (seen_star) {
        kwonly.push_back(p);
        if (def >= 0) kw_defaults.push_back(def);
      } else {
        args.push_back(p);
        if (def >= 0) {
          defaults.push_back(def);
          seen_default = true;
        } else if (seen_default) {
          error("non-default argument follows default argument");
        }
      }
    }
    std::vector<int> ch = posonly;
    append(ch, args);
    if (vararg >= 0) ch.push_back(vararg);
    append(ch, kwonly);
    append(ch, kw_defaults);
    if (kwarg >= 0) ch.push_back(kwarg);
    append(ch, defaults);
    if (ch.empty()) begin = end = at_pos;
    return make("arguments", begin, end, std::move(ch));
  }

  int param(bool annotations) {
    const Token& n = expect_name();
    std::vector<int> ch;
    std::uint32_t e = n.end;
    if (annotations && accept_op(":")) {
      ch.push_back(expression());
      e = E(ch.back());
    }
    return make("arg", n.begin, e, std::move(ch), std::string(n.text));
  }

  int simple_stmt() {
    const Token& t = cur();
    if (t.kind == TokenKind::Name) {
      const std::string_view k = t.text;
      if (k == "pass") return ++pos_, make("Pass", t.begin, t.end);
      if (k == "break") return ++pos_, make("Break", t.begin, t.end);
      if (k == "continue") return ++pos_, make("Continue", t.begin, t.end);
      if (k == "return") {
        ++pos_;
        if (at(TokenKind::Newline) || at_op(";")) return make("Return", t.begin, t.end);
        int v = star_expressions();
        return make("Return", t.begin, E(v), {v});
      }
      if (k == "raise") {
        ++pos_;
        std::vector<int> ch;
        std::uint32_t e = t.end;
        if (!at(TokenKind::Newline) && !at_op(";")) {
          ch.push_back(expression());
          e = E(ch.back());
          if (accept_kw("from")) {
            ch.push_back(expression());
            e = E(ch.back());
          }
        }
        return make("Raise", t.begin, e, std::move(ch));
      }
      if (k == "global" || k == "nonlocal") {
        ++pos_;
        std::string names(expect_name().text);
        std::uint32_t e = prev().end;
        while (accept_op(",")) {
          names += ",";
          names += expect_name().text;
          e = prev().end;
        }
        return make(k == "global" ? "Global" : "Nonlocal", t.begin, e, {}, std::move(names));
      }
      if (k == "del") {
        ++pos_;
        std::vector<int> targets;
        do {
          if (at(TokenKind::Newline) || at_op(";")) break;
          int x = target_atom_or_primary();
          set_ctx(x, Ctx::Del, true);
          targets.push_back(x);
        } while (accept_op(","));
        if (targets.empty()) error("invalid syntax");
        const std::uint32_t e = E(targets.back());
        return make("Delete", t.begin, e, std::move(targets));
      }
      if (k == "assert") {
        ++pos_;
        std::vector<int> ch{expression()};
        if (accept_op(",")) ch.push_back(expression());
        std::uint32_t e = E(ch.back());
        return make("Assert", t.begin, e, std::move(ch));
      }
      if (k == "import") return import_stmt();
      if (k == "from") return from_import();
    }
    return expr_or_assign();
  }

  std::string dotted_name() {
    std::string s(expect_name().text);
    while (at_op(".") && peek().kind == TokenKind::Name) {
      ++pos_;
      s += ".";
      s += expect_name().text;
    }
    return s;
  }

  int alias_node(bool dotted) {
    const std::uint32_t b = cur().begin;
    std::string name = dotted ? dotted_name() : std::string(expect_name().text);
    std::string asname;
    if (accept_kw("as")) asname = std::string(expect_name().text);
    int a = make("alias", b, prev().end, {}, std::move(name));
    N(a).aux = std::move(asname);
    return a;
  }

  int import_stmt() {
    const Token& kw = expect_kw("import");
    std::vector<int> names;
    do names.push_back(alias_node(true));
    while (accept_op(","));
    const std::uint32_t e = E(names.back());
    return make("Import", kw.begin, e, std::move(names));
  }

  int from_import() {
    const Token& kw = expect_kw("from");
    std::string module;
    while (at_op(".") || at_op("...")) {
      module += cur().text;
      ++pos_;
    }
    if (!at_kw("import")) module += dotted_name();
    if (module.empty()) error("invalid syntax");
    expect_kw("import");
    std::vector<int> names;
    if (at_op("*")) {
      const Token& s = toks_[pos_++];
      names.push_back(make("alias", s.begin, s.end, {}, "*"));
    } else if (accept_op("(")) {
      do {
        if (at_op(")")) break;
        names.push_back(alias_node(false));
      } while (accept_op(","));
      expect_op(")");
    } else {
      do names.push_back(alias_node(false));
      while (accept_op(","));
    }
    if (names.empty()) error("invalid syntax");
    int n = make("ImportFrom", kw.begin, prev().end, std::move(names));
    N(n).aux = std::move(module);
    return n;
  }

  static bool is_augassign(std::string_view s) {
    return s == "+=" || s == "-=" || s == "*=" || s == "/=" || s == "//=" || s == "%=" ||
           s == "**=" || s == ">>=" || s == "<<=" || s == "&=" || s == "|=" || s == "^=" ||
           s == "@=";
  }

  static std::string binop_kind(std::string_view op) {
    if (op == "+") return "Add";
    if (op == "-") return "Sub";
    if (op == "*") return "Mult";
    if (op == "@") return "MatMult";
    if (op == "/") return "Div";
    if (op == "//") return "FloorDiv";
    if (op == "%") return "Mod";
    if (op == "**") return "Pow";
    if (op == "<<") return "LShift";
    if (op == ">>") return "RShift";
    if (op == "|") return "BitOr";
    if (op == "^") return "BitXor";
    if (op == "&") return "BitAnd";
    return {};
  }

  int expr_or_assign() {
    int first = at_kw("yield") ? yield_expr() : star_expressions();
    if (at_op("=")) {
      std::vector<int> items{first};
      while (accept_op("=")) items.push_back(at_kw("yield") ? yield_expr() : star_expressions());
      int value = items.back();
      items.pop_back();
      for (int t : items) set_store(t);
      std::vector<int> ch = items;
      ch.push_back(value);
      return make("Assign", B(first), E(value), std::move(ch));
    }
    if (cur().kind == TokenKind::Op && is_augassign(cur().text)) {
      const Token& op = toks_[pos_++];
      const std::string& k = N(first).kind;
      if (k != "Name" && k != "Attribute" && k != "Subscript")
        error("illegal expression for augmented assignment");
      set_ctx(first, Ctx::Store, false);
      int opn = leaf_op(binop_kind(op.text.substr(0, op.text.size() - 1)), op);
      int value = at_kw("yield") ? yield_expr() : star_expressions();
      return make("AugAssign", B(first), E(value), {first, opn, value});
    }
    if (at_op(":")) {
      ++pos_;
      const std::string& k = N(first).kind;
      if (k != "Name" && k != "Attribute" && k != "Subscript")
        error("illegal target for annotation");
      set_ctx(first, Ctx::Store, false);
      int ann = expression();
      std::vector<int> ch{first, ann};
      if (accept_op("=")) ch.push_back(at_kw("yield") ? yield_expr() : star_expressions());
      std::uint32_t e = E(ch.back());
      return make("AnnAssign", B(first), e, std::move(ch));
    }
    return make("Expr", B(first), E(first), {first});
  }

  // ---- assignment targets --------------------------------------------------
  void set_store(int n) { set_ctx(n, Ctx::Store, true); }

  void set_ctx(int n, Ctx ctx, bool allow_seq) {
    AstNode& node = N(n);
    const std::string& k = node.kind;
    if (k == "Name") {
      if (node.text == "__debug__") error("cannot assign to __debug__");
      node.ctx = ctx;
    } else if (k == "Attribute" || k == "Subscript") {
      node.ctx = ctx;
    } else if ((k == "Tuple" || k == "List") && allow_seq) {
      node.ctx = ctx;
      const std::vector<int> kids = node.children;
      int starred = 0;
      for (int c : kids) {
        if (N(c).kind == "Starred") {
          if (ctx == Ctx::Del) error("cannot delete starred");
          if (++starred > 1) error("multiple starred expressions in assignment");
          N(c).ctx = ctx;
          set_ctx(N(c).children[0], ctx, true);
        } else {
          set_ctx(c, ctx, true);
        }
      }
    } else if (k == "Starred") {
      error("starred assignment target must be in a list or tuple");
    } else {
      error("cannot assign to " + k);
    }
  }

  // Comma-separated targets for `for` / comprehensions.
  int target_list() {
    const std::uint32_t b = cur().begin;
    std::vector<int> elts;
    bool trailing = false;
    do {
      if (at_kw("in")) {
        trailing = true;
        break;
      }
      if (at_op("*")) {
        const Token& s = toks_[pos_++];
        int v = target_atom_or_primary();
        elts.push_back(make("Starred", s.begin, E(v), {v}));
      } else {
        elts.push_back(target_atom_or_primary());
      }
    } while (accept_op(","));
    if (elts.empty()) error("invalid syntax");
    if (elts.size() == 1 && !trailing && prev().text != ",") return elts[0];
    std::uint32_t e = prev().end;
    return make("Tuple", b, e, std::move(elts));
  }

  int target_atom_or_primary() { return primary(); }

  // ---- expressions ---------------------------------------------------------
  int star_expressions() {
    int first = star_expression();
    if (!at_op(",")) return first;
    std::vector<int> elts{first};
    std::uint32_t e = E(first);
    while (accept_op(",")) {
      e = prev().end;
      if (!starts_expression()) break;
      elts.push_back(star_expression());
      e = E(elts.back());
    }
    return set_ctx_load(make("Tuple", B(first), e, std::move(elts)));
  }

  bool starts_expression() const {
    const Token& t = cur();
    switch (t.kind) {
      case TokenKind::Name:
        if (!is_keyword(t.text)) return true;
        return t.text == "None" || t.text == "True" || t.text == "False" ||
               t.text == "not" || t.text == "lambda" || t.text == "await";
      case TokenKind::Number:
      case TokenKind::String:
        return true;
      case TokenKind::Op:
        return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-" ||
               t.text == "+" || t.text == "~" || t.text == "*" || t.text == "...";
      default:
        return false;
    }
  }

  int star_expression() {
    if (at_op("*")) {
      const Token& s = toks_[pos_++];
      int v = bitwise_or();
      return set_ctx_load(make("Starred", s.begin, E(v), {v}));
    }
    return expression();
  }

  int star_named_expression() {
    if (at_op("*")) {
      const Token& s = toks_[pos_++];
      int v = bitwise_or();
      return set_ctx_load(make("Starred", s.begin, E(v), {v}));
    }
    return named_expression();
  }

  int named_expression() {
    if (at_name() && peek().kind == TokenKind::Op && peek().text == ":=") {
      const Token& n = toks_[pos_++];
      ++pos_;
      int target = make("Name", n.begin, n.end, {}, std::string(n.text));
      N(target).ctx = Ctx::Store;
      int value = expression();
      return make("NamedExpr", n.begin, E(value), {target, value});
    }
    int e = expression();
    if (at_op(":=")) error("cannot use assignment expressions with " + N(e).kind);
    return e;
  }

  int expression() {
    if (at_kw("lambda")) return lambdef();
    int body = disjunction();
    if (accept_kw("if")) {
      int test = disjunction();
      expect_kw("else");
      int orelse = expression();
      return make("IfExp", B(body), E(orelse), {test, body, orelse});
    }
    return body;
  }

  int lambdef() {
    const Token& kw = expect_kw("lambda");
    int args = parameters(":", false, kw.end);
    expect_op(":");
    int body = expression();
    return make("Lambda", kw.begin, E(body), {args, body});
  }

  int boolop(std::string_view word, std::string kind, int (Parser::*sub)()) {
    int first = (this->*sub)();
    if (!at_kw(word)) return first;
    const Token& op = cur();
    int opn = leaf_op(std::move(kind), op);
    std::vector<int> values{first};
    while (accept_kw(word)) values.push_back((this->*sub)());
    std::vector<int> ch{opn};
    append(ch, values);
    return make("BoolOp", B(first), E(values.back()), std::move(ch));
  }

  int disjunction() { return boolop("or", "Or", &Parser::conjunction); }
  int conjunction() { return boolop("and", "And", &Parser::inversion); }

  int inversion() {
    if (at_kw("not")) {
      const Token& t = toks_[pos_++];
      int opn = leaf_op("Not", t);
      int operand = inversion();
      return make("UnaryOp", t.begin, E(operand), {opn, operand});
    }
    return comparison();
  }

  int comparison() {
    int left = bitwise_or();
    std::vector<int> ops, comparators;
    while (true) {
      const Token& t = cur();
      std::string kind;
      std::uint32_t ob = t.begin, oe = t.end;
      if (t.kind == TokenKind::Op) {
        if (t.text == "<") kind = "Lt";
        else if (t.text == ">") kind = "Gt";
        else if (t.text == "==") kind = "Eq";
        else if (t.text == ">=") kind = "GtE";
        else if (t.text == "<=") kind = "LtE";
        else if (t.text == "!=") kind = "NotEq";
        if (!kind.empty()) ++pos_;
      } else if (t.kind == TokenKind::Name) {
        if (t.text == "in") {
          kind = "In";
          ++pos_;
        } else if (t.text == "not" && peek().kind == TokenKind::Name && peek().text == "in") {
          kind = "NotIn";
          oe = peek().end;
          pos_ += 2;
        } else if (t.text == "is") {
          ++pos_;
          if (at_kw("not")) {
            kind = "IsNot";
            oe = cur().end;
            ++pos_;
          } else {
            kind = "Is";
          }
        }
      }
      if (kind.empty()) break;
      ops.push_back(make(std::move(kind), ob, oe));
      comparators.push_back(bitwise_or());
    }
    if (ops.empty()) return left;
    std::vector<int> ch{left};
    append(ch, ops);
    append(ch, comparators);
    return make("Compare", B(left), E(comparators.back()), std::move(ch));
  }

  int binary(std::initializer_list<std::string_view> ops, int (Parser::*sub)()) {
    int left = (this->*sub)();
    while (cur().kind == TokenKind::Op) {
      bool match = false;
      for (auto o : ops)
        if (cur().text == o) match = true;
      if (!match) break;
      const Token& t = toks_[pos_++];
      int opn = leaf_op(binop_kind(t.text), t);
      int right = (this->*sub)();
      left = make("BinOp", B(left), E(right), {left, opn, right});
    }
    return left;
  }

  int bitwise_or() { return binary({"|"}, &Parser::bitwise_xor); }
  int bitwise_xor() { return binary({"^"}, &Parser::bitwise_and); }
  int bitwise_and() { return binary({"&"}, &Parser::shift_expr); }
  int shift_expr() { return binary({"<<", ">>"}, &Parser::sum); }
  int sum() { return binary({"+", "-"}, &Parser::term); }
  int term() { return binary({"*", "/", "//", "%", "@"}, &Parser::factor); }

  int factor() {
    if (at_op("+") || at_op("-") || at_op("~")) {
      const Token& t = toks_[pos_++];
      int opn = leaf_op(t.text == "+" ? "UAdd" : t.text == "-" ? "USub" : "Invert", t);
      int operand = factor();
      return make("UnaryOp", t.begin, E(operand), {opn, operand});
    }
    return power();
  }

  int power() {
    int base;
    if (at_kw("await")) {
      const Token& t = toks_[pos_++];
      int v = primary();
      base = make("Await", t.begin, E(v), {v});
    } else {
      base = primary();
    }
    if (at_op("**")) {
      const Token& t = toks_[pos_++];
      int opn = leaf_op("Pow", t);
      int exp = factor();
      return make("BinOp", B(base), E(exp), {base, opn, exp});
    }
    return base;
  }

  int primary() {
    int node = atom();
    while (true) {
      if (at_op(".")) {
        ++pos_;
        const Token& n = expect_name();
        node = set_ctx_load(make("Attribute", B(node), n.end, {node}, std::string(n.text)));
      } else if (at_op("(")) {
        ++pos_;
        std::vector<int> args, keywords;
        call_arguments(args, keywords);
        const Token& rp = expect_op(")");
        std::vector<int> ch{node};
        append(ch, args);
        append(ch, keywords);
        node = make("Call", B(node), rp.end, std::move(ch));
      } else if (at_op("[")) {
        ++pos_;
        int sl = slices();
        const Token& rb = expect_op("]");
        node = set_ctx_load(make("Subscript", B(node), rb.end, {node, sl}));
      } else {
        break;
      }
    }
    return node;
  }

  void call_arguments(std::vector<int>& args, std::vector<int>& keywords) {
    bool seen_keyword = false, seen_kwunpack = false;
    while (!at_op(")")) {
      if (at_op("*")) {
        const Token& s = toks_[pos_++];
        int v = expression();
        if (seen_kwunpack) error("iterable argument unpacking follows keyword argument unpacking");
        args.push_back(set_ctx_load(make("Starred", s.begin, E(v), {v})));
      } else if (at_op("**")) {
        const Token& s = toks_[pos_++];
        int v = expression();
        keywords.push_back(make("keyword", s.begin, E(v), {v}));
        seen_kwunpack = true;
      } else if (at_name() && peek().kind == TokenKind::Op && peek().text == "=") {
        const Token& n = toks_[pos_++];
        ++pos_;
        int v = expression();
        keywords.push_back(make("keyword", n.begin, E(v), {v}, std::string(n.text)));
        seen_keyword = true;
      } else {
        int v = named_expression();
        if (at_kw("for")) {
          std::vector<int> gens = generators();
          std::vector<int> ch{v};
          append(ch, gens);
          v = make("GeneratorExp", B(v), E(gens.back()), std::move(ch));
          if (!args.empty() || !keywords.empty() || !at_op(")"))
            error("Generator expression must be parenthesized");
        }
        if (seen_kwunpack) error("positional argument follows keyword argument unpacking");
        if (seen_keyword) error("positional argument follows keyword argument");
        args.push_back(v);
      }
      if (!accept_op(",")) break;
    }
  }

  int slice_item() {
    const std::uint32_t b = cur().begin;
    int lower = -1, upper = -1, step = -1;
    if (!at_op(":")) {
      int e = named_expression();
      if (!at_op(":")) return e;
      lower = e;
    }
    std::uint32_t e = expect_op(":").end;
    if (!at_op(":") && !at_op("]") && !at_op(",")) {
      upper = expression();
      e = E(upper);
    }
    if (accept_op(":")) {
      e = prev().end;
      if (!at_op("]") && !at_op(",")) {
        step = expression();
        e = E(step);
      }
    }
    std::vector<int> ch;
    for (int x : {lower, upper, step})
      if (x >= 0) ch.push_back(x);
    return make("Slice", lower >= 0 ? B(lower) : b, e, std::move(ch));
  }

  int slices() {
    int first = slice_item();
    if (!at_op(",")) return first;
    std::vector<int> elts{first};
    std::uint32_t e = E(first);
    while (accept_op(",")) {
      e = prev().end;
      if (at_op("]")) break;
      elts.push_back(slice_item());
      e = E(elts.back());
    }
    return set_ctx_load(make("Tuple", B(first), e, std::move(elts)));
  }

  std::vector<int> generators() {
    std::vector<int> gens;
    while (at_kw("for")) {
      const Token& kw = toks_[pos_++];
      int target = target_list();
      set_store(target);
      expect_kw("in");
      int iter = disjunction();
      std::vector<int> ch{target, iter};
      while (accept_kw("if")) ch.push_back(disjunction());
      std::uint32_t e = E(ch.back());
      gens.push_back(make("comprehension", kw.begin, e, std::move(ch)));
    }
    return gens;
  }

  int yield_expr() {
    const Token& kw = expect_kw("yield");
    if (accept_kw("from")) {
      int v = expression();
      return make("YieldFrom", kw.begin, E(v), {v});
    }
    if (!starts_expression()) return make("Yield", kw.begin, kw.end);
    int v = star_expressions();
    return make("Yield", kw.begin, E(v), {v});
  }

  int atom() {
    const Token& t = cur();
    switch (t.kind) {
      case TokenKind::Name: {
        if (t.text == "None" || t.text == "True" || t.text == "False") {
          ++pos_;
          return make("Constant", t.begin, t.end, {}, std::string(t.text));
        }
        if (is_keyword(t.text)) error("invalid syntax");
        ++pos_;
        return set_ctx_load(make("Name", t.begin, t.end, {}, std::string(t.text)));
      }
      case TokenKind::Number:
        ++pos_;
        return make("Constant", t.begin, t.end, {}, std::string(t.text));
      case TokenKind::String: {
        bool fstring = false;
        const std::uint32_t b = t.begin;
        std::uint32_t e = t.end;
        while (at(TokenKind::String)) {
          const std::string_view s = cur().text;
          for (char c : s) {
            if (c == '"' || c == '\'') break;
            if (c == 'f' || c == 'F') fstring = true;
          }
          e = cur().end;
          ++pos_;
        }
        return make(fstring ? "JoinedStr" : "Constant", b, e, {},
                    std::string(src_.substr(b, e - b)));
      }
      case TokenKind::Op:
        if (t.text == "(") return paren_atom();
        if (t.text == "[") return list_atom();
        if (t.text == "{") return brace_atom();
        if (t.text == "...") {
          ++pos_;
          return make("Constant", t.begin, t.end, {}, "...");
        }
        break;
      default:
        break;
    }
    error("invalid syntax");
  }

  int paren_atom() {
    const Token& lp = expect_op("(");
    if (at_op(")")) {
      const Token& rp = toks_[pos_++];
      return set_ctx_load(make("Tuple", lp.begin, rp.end));
    }
    if (at_kw("yield")) {
      int y = yield_expr();
      expect_op(")");
      return y;
    }
    int first = star_named_expression();
    if (at_kw("for")) {
      std::vector<int> gens = generators();
      const Token& rp = expect_op(")");
      std::vector<int> ch{first};
      append(ch, gens);
      return make("GeneratorExp", lp.begin, rp.end, std::move(ch));
    }
    if (at_op(",")) {
      std::vector<int> elts{first};
      while (accept_op(",")) {
        if (at_op(")")) break;
        elts.push_back(star_named_expression());
      }
      const Token& rp = expect_op(")");
      return set_ctx_load(make("Tuple", lp.begin, rp.end, std::move(elts)));
    }
    expect_op(")");
    if (N(first).kind == "Starred") error("cannot use starred expression here");
    return first;
  }

  int list_atom() {
    const Token& lb = expect_op("[");
    if (at_op("]")) {
      const Token& rb = toks_[pos_++];
      return set_ctx_load(make("List", lb.begin, rb.end));
    }
    int first = star_named_expression();
    if (at_kw("for")) {
      std::vector<int> gens = generators();
      const Token& rb = expect_op("]");
      std::vector<int> ch{first};
      append(ch, gens);
      return make("ListComp", lb.begin, rb.end, std::move(ch));
    }
    std::vector<int> elts{first};
    while (accept_op(",")) {
      if (at_op("]")) break;
      elts.push_back(star_named_expression());
    }
    const Token& rb = expect_op("]");
    return set_ctx_load(make("List", lb.begin, rb.end, std::move(elts)));
  }

  int brace_atom() {
    const Token& lb = expect_op("{");
    if (at_op("}")) {
      const Token& rb = toks_[pos_++];
      return make("Dict", lb.begin, rb.end);
    }
    // dict display / comprehension
    if (at_op("**")) return dict_rest(lb, -1, -1);
    int first = star_named_expression();
    if (accept_op(":")) {
      int value = expression();
      if (at_kw("for")) {
        std::vector<int> gens = generators();
        const Token& rb = expect_op("}");
        std::vector<int> ch{first, value};
        append(ch, gens);
        return make("DictComp", lb.begin, rb.end, std::move(ch));
      }
      return dict_rest(lb, first, value);
    }
    if (at_kw("for")) {
      std::vector<int> gens = generators();
      const Token& rb = expect_op("}");
      std::vector<int> ch{first};
      append(ch, gens);
      return make("SetComp", lb.begin, rb.end, std::move(ch));
    }
    std::vector<int> elts{first};
    while (accept_op(",")) {
      if (at_op("}")) break;
      elts.push_back(star_named_expression());
    }
    const Token& rb = expect_op("}");
    return make("Set", lb.begin, rb.end, std::move(elts));
  }

  // Parses remaining dict entries; (first_key, first_value) already consumed unless -1.
  int dict_rest(const Token& lb, int first_key, int first_value) {
    std::vector<int> keys, values;
    bool need_entry = first_key < 0;
    if (!need_entry) {
      keys.push_back(first_key);
      values.push_back(first_value);
    }
    while (need_entry || accept_op(",")) {
      need_entry = false;
      if (at_op("}")) break;
      if (accept_op("**")) {
        values.push_back(bitwise_or());
        continue;
      }
      keys.push_back(expression());
      expect_op(":");
      values.push_back(expression());
    }
    const Token& rb = expect_op("}");
    std::vector<int> ch = keys;
    append(ch, values);
    return make("Dict", lb.begin, rb.end, std::move(ch));
  }

  std::string_view src_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  Ast ast_;
};

}  // namespace detail

// Parses a subject program. Whitespace-only input yields a Module with an empty body.
inline ParseResult parse(std::string_view source) {
  ParseResult r;
  LexResult lex = tokenize(source);
  if (!lex.ok) {
    r.failure = {lex.error, lex.error_line};
    return r;
  }
  try {
    r.ast = detail::Parser(source, std::move(lex.tokens)).run();
  } catch (const detail::ParseError& e) {
    r.failure = {e.what(), e.line};
  }
  return r;
}

}  // namespace eqrl::python
