#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "eqrl/rtree.hpp"

using namespace eqrl::rtree;

namespace {

FeatureVector fv(double v) { return FeatureVector::from_array({v, v, v, v, v, v, v}); }

std::vector<std::pair<FeatureVector, ProgramRef>> batch(ProgramStore& store, std::size_t n, double base = 0.0) {
  std::vector<std::pair<FeatureVector, ProgramRef>> out;
  for (std::size_t i = 0; i < n; ++i)
    out.emplace_back(fv(base + 0.01 * static_cast<double>(i)),
                     store.put({"c" + std::to_string(store.size()), "pass\n", "p"}));
  return out;
}

}  // namespace

TEST(Tree, NewTree) {
  ProgramStore store;
  auto t = new_tree(fv(0.5), {"root", "print(1)\n", "p"}, store);
  EXPECT_EQ(t.size(), 1u);
  EXPECT_EQ(t.cursor(), t.root());
  EXPECT_TRUE(t.node(0).explored);
  EXPECT_FALSE(t.node(0).parent);
  EXPECT_TRUE(t.legal_actions().empty());
  EXPECT_THROW(t.apply_action(Action::backtrack()), eqrl::IllegalAction);
  EXPECT_EQ(store.get(t.node(0).program_ref).id, "root");
}

TEST(Tree, AddCandidates) {
  ProgramStore store;
  auto t = new_tree(fv(0), {"root", "", "p"}, store);
  const auto ids = t.add_candidates(t.cursor(), batch(store, 10));
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_EQ(t.node(0).children, ids);
  EXPECT_THROW(t.add_candidates(ids[3], batch(store, 2)), eqrl::ProtocolError);
  EXPECT_THROW(t.add_candidates(t.cursor(), {}), eqrl::ArgumentError);
  t.apply_action(Action::select(4));
  t.add_candidates(t.cursor(), batch(store, 10));
  EXPECT_EQ(t.size(), 21u);
}

TEST(Tree, SelectAndBacktrack) {
  ProgramStore store;
  auto t = new_tree(fv(0), {"root", "", "p"}, store);
  const auto ids = t.add_candidates(0, batch(store, 10));
  EXPECT_EQ(t.legal_actions().size(), 10u);
  EXPECT_FALSE(t.legal_actions()[0].is_backtrack());
  EXPECT_EQ(t.apply_action(Action::select(0)), ids[0]);
  EXPECT_TRUE(t.node(ids[0]).explored);

  t.add_candidates(t.cursor(), batch(store, 10));
  const auto acts = t.legal_actions();
  ASSERT_EQ(acts.size(), 11u);
  EXPECT_TRUE(acts[0].is_backtrack());

  EXPECT_THROW(t.apply_action(Action::select(10)), eqrl::IllegalAction);
  t.apply_action(Action::backtrack());
  EXPECT_EQ(t.cursor(), 0u);
  // back at the root: the nine unexplored siblings, no Backtrack
  const auto after = t.legal_actions();
  EXPECT_EQ(after.size(), 9u);
  EXPECT_EQ(t.apply_action(Action::select(0)), ids[1]);
  t.add_candidates(t.cursor(), batch(store, 3));
  t.apply_action(Action::select(2));
  t.apply_action(Action::backtrack());
  EXPECT_EQ(t.cursor(), ids[1]);
  EXPECT_EQ(t.legal_actions().size(), 3u);
}

TEST(Tree, GraphEncoding) {
  ProgramStore store;
  auto t = new_tree(fv(0.25), {"root", "", "p"}, store);
  t.add_candidates(0, batch(store, 3, 0.5));
  t.apply_action(Action::select(1));
  const auto g = t.to_graph_encoding();
  EXPECT_EQ(g.num_nodes(), 4u);
  EXPECT_EQ(g.node_features.cols(), 7u);
  EXPECT_EQ(g.cursor_index, 2u);
  EXPECT_DOUBLE_EQ(g.node_features(0, 3), 0.25);
  EXPECT_DOUBLE_EQ(g.node_features(2, 6), 0.51);
  EXPECT_EQ(g.edges.size(), 4u + 2u * 3u);
  const std::set<std::pair<std::size_t, std::size_t>> es(g.edges.begin(), g.edges.end());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(es.count({i, i}));
  for (std::size_t c = 1; c < 4; ++c) {
    EXPECT_TRUE(es.count({0, c}));
    EXPECT_TRUE(es.count({c, 0}));
  }
}

TEST(Tree, JsonDump) {
  ProgramStore store;
  auto t = new_tree(fv(0), {"root", "", "p"}, store);
  t.add_candidates(0, batch(store, 2));
  t.apply_action(Action::select(1));
  const auto j = t.to_json();
  EXPECT_EQ(j["cursor"], 2);
  ASSERT_EQ(j["nodes"].size(), 3u);
  EXPECT_TRUE(j["nodes"][0]["parent"].is_null());
  EXPECT_EQ(j["nodes"][2]["parent"], 0);
  EXPECT_EQ(j["nodes"][2]["explored"], true);
  EXPECT_EQ(j["nodes"][1]["explored"], false);
  EXPECT_EQ(j["nodes"][1]["features"].size(), 7u);
}

TEST(Tree, ShapeIndependentOfFeatures) {
  auto run = [](double base) {
    ProgramStore store;
    auto t = new_tree(fv(base), {"root", "", "p"}, store);
    t.add_candidates(0, batch(store, 4, base));
    t.apply_action(Action::select(2));
    t.add_candidates(t.cursor(), batch(store, 4, base));
    t.apply_action(Action::backtrack());
    t.apply_action(Action::select(0));
    std::vector<std::optional<NodeId>> parents;
    for (const auto& n : t.nodes()) parents.push_back(n.parent);
    return std::make_pair(parents, t.cursor());
  };
  EXPECT_EQ(run(0.1), run(0.9));
}

TEST(Tree, Fuzz) {
  std::mt19937_64 rng(20261019);
  for (int seq = 0; seq < 1000; ++seq) {
    ProgramStore store;
    auto t = new_tree(fv(0), {"root", "", "p"}, store);
    std::size_t expected_nodes = 1;
    std::set<NodeId> selected{0};
    const int steps = 1 + static_cast<int>(rng() % 40);
    for (int s = 0; s < steps; ++s) {
      if (t.unexplored_children(t.cursor()).empty() && rng() % 4 != 0) {
        const std::size_t n = 1 + rng() % 10;
        t.add_candidates(t.cursor(), batch(store, n));
        expected_nodes += n;
      }
      const auto acts = t.legal_actions();
      if (acts.empty()) {
        ASSERT_EQ(t.cursor(), t.root());
        break;
      }
      const auto a = acts[rng() % acts.size()];
      const NodeId prev = t.cursor();
      const NodeId now = t.apply_action(a);
      if (a.is_backtrack()) {
        ASSERT_EQ(now, *t.node(prev).parent);
      } else {
        ASSERT_TRUE(selected.insert(now).second) << "node selected twice";
        ASSERT_EQ(t.node(now).parent, prev);
      }
      ASSERT_EQ(t.size(), expected_nodes);
      ASSERT_EQ(store.size(), expected_nodes);
      // cursor reaches root within depth steps
      std::size_t hops = 0;
      NodeId v = t.cursor();
      while (t.node(v).parent) {
        v = *t.node(v).parent;
        ASSERT_LE(++hops, t.size());
      }
      ASSERT_EQ(v, t.root());
      ASSERT_EQ(hops, t.depth(t.cursor()));
      for (NodeId id = 0; id < t.size(); ++id) ASSERT_EQ(t.node(id).explored, selected.count(id) == 1);
      if (t.cursor() == t.root()) {
        ASSERT_THROW(t.apply_action(Action::backtrack()), eqrl::IllegalAction);
      }
      const auto g = t.to_graph_encoding();
      ASSERT_EQ(g.edges.size(), 3 * t.size() - 2);
      ASSERT_EQ(g.cursor_index, t.cursor());
    }
  }
}
