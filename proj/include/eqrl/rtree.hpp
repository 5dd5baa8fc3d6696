#pragma once

// Lazily grown reasoning tree over candidate programs. Nodes keep only their
// feature vectors; program text lives in a separate store keyed by
// program_ref. A cursor marks the program currently being explored.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eqrl/core.hpp"
#include "eqrl/errors.hpp"
#include "eqrl/metrics/features.hpp"
#include "eqrl/tensor.hpp"
#include "json.hpp"

namespace eqrl::rtree {

using metrics::FeatureVector;
using NodeId = std::size_t;
using ProgramRef = std::size_t;

struct Action {
  enum class Kind { Backtrack, Select };
  Kind kind = Kind::Select;
  std::size_t index = 0;  // Select: position among the cursor's unexplored children

  static Action backtrack() { return {Kind::Backtrack, 0}; }
  static Action select(std::size_t k) { return {Kind::Select, k}; }
  bool is_backtrack() const { return kind == Kind::Backtrack; }

  friend bool operator==(const Action&, const Action&) = default;
};

inline std::string to_string(const Action& a) {
  return a.is_backtrack() ? "Backtrack" : "Select(" + std::to_string(a.index) + ")";
}

class ProgramStore {
 public:
  ProgramRef put(SubjectProgram p) {
    programs_.push_back(std::move(p));
    return programs_.size() - 1;
  }
  const SubjectProgram& get(ProgramRef r) const {
    if (r >= programs_.size()) throw ArgumentError("unknown program_ref " + std::to_string(r));
    return programs_[r];
  }
  std::size_t size() const { return programs_.size(); }

 private:
  std::vector<SubjectProgram> programs_;
};

struct TreeNode {
  FeatureVector features;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  bool explored = false;
  ProgramRef program_ref = 0;
};

// Node features (N x 7), directed message edges (src, dst) with both
// orientations of every tree edge plus one self-loop per node, and the cursor row.
struct GraphEncoding {
  Tensor node_features;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t cursor_index = 0;

  std::size_t num_nodes() const { return node_features.rows(); }
};

class ReasoningTree {
 public:
  ReasoningTree(const FeatureVector& root_features, ProgramRef root_program) {
    TreeNode root;
    root.features = root_features;
    root.explored = true;
    root.program_ref = root_program;
    nodes_.push_back(std::move(root));
  }

  std::size_t size() const { return nodes_.size(); }
  NodeId root() const { return 0; }
  NodeId cursor() const { return cursor_; }
  const TreeNode& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  std::vector<NodeId> add_candidates(NodeId at, const std::vector<std::pair<FeatureVector, ProgramRef>>& cands) {
    if (at != cursor_) throw ProtocolError("candidates can only be added at the cursor");
    if (cands.empty()) throw ArgumentError("empty candidate batch");
    std::vector<NodeId> ids;
    for (const auto& [f, ref] : cands) {
      TreeNode n;
      n.features = f;
      n.parent = at;
      n.program_ref = ref;
      nodes_.push_back(std::move(n));
      ids.push_back(nodes_.size() - 1);
      nodes_[at].children.push_back(ids.back());
    }
    return ids;
  }

  std::vector<NodeId> unexplored_children(NodeId id) const {
    std::vector<NodeId> out;
    for (NodeId c : nodes_.at(id).children)
      if (!nodes_[c].explored) out.push_back(c);
    return out;
  }

  bool can_backtrack() const { return cursor_ != root(); }

  // [Backtrack?] ++ [Select(k) for each unexplored child of the cursor].
  std::vector<Action> legal_actions() const {
    std::vector<Action> out;
    if (can_backtrack()) out.push_back(Action::backtrack());
    const std::size_t n = unexplored_children(cursor_).size();
    for (std::size_t k = 0; k < n; ++k) out.push_back(Action::select(k));
    return out;
  }

  NodeId apply_action(const Action& a) {
    if (a.is_backtrack()) {
      if (!can_backtrack()) throw IllegalAction("cannot backtrack from the root");
      cursor_ = *nodes_[cursor_].parent;
      return cursor_;
    }
    const auto open = unexplored_children(cursor_);
    if (a.index >= open.size())
      throw IllegalAction("Select(" + std::to_string(a.index) + ") with " + std::to_string(open.size()) +
                          " unexplored children");
    cursor_ = open[a.index];
    nodes_[cursor_].explored = true;
    return cursor_;
  }

  std::size_t depth(NodeId id) const {
    std::size_t d = 0;
    while (nodes_.at(id).parent) {
      id = *nodes_[id].parent;
      ++d;
    }
    return d;
  }

  // Node ids from the root down to `id` inclusive.
  std::vector<NodeId> path_from_root(NodeId id) const {
    std::vector<NodeId> path;
    for (std::optional<NodeId> v = id; v; v = nodes_.at(*v).parent) path.push_back(*v);
    return {path.rbegin(), path.rend()};
  }

  GraphEncoding to_graph_encoding() const {
    GraphEncoding g;
    g.node_features = Tensor(nodes_.size(), FeatureVector::kSize);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto a = nodes_[i].features.as_array();
      for (std::size_t k = 0; k < a.size(); ++k) g.node_features(i, k) = a[k];
    }
    g.edges.reserve(3 * nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      g.edges.emplace_back(i, i);
      if (nodes_[i].parent) {
        g.edges.emplace_back(*nodes_[i].parent, i);
        g.edges.emplace_back(i, *nodes_[i].parent);
      }
    }
    g.cursor_index = cursor_;
    return g;
  }

  nlohmann::json to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      nodes.push_back({{"id", i},
                       {"parent", n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr)},
                       {"features", n.features.as_array()},
                       {"explored", n.explored},
                       {"program_ref", n.program_ref}});
    }
    return {{"nodes", nodes}, {"cursor", cursor_}};
  }

 private:
  std::vector<TreeNode> nodes_;
  NodeId cursor_ = 0;
};

inline ReasoningTree new_tree(const FeatureVector& root_features, SubjectProgram root_program, ProgramStore& store) {
  return ReasoningTree(root_features, store.put(std::move(root_program)));
}

}  // namespace eqrl::rtree
