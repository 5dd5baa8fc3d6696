#pragma once

// One episode: grow a reasoning tree from A towards B, asking the LLM for
// candidates whenever the cursor has nothing left to explore.

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "eqrl/agent/policy.hpp"
#include "eqrl/corpus.hpp"
#include "eqrl/gnn/gat.hpp"
#include "eqrl/hash.hpp"
#include "eqrl/llm/client.hpp"
#include "eqrl/metrics/features.hpp"
#include "eqrl/rtree.hpp"

namespace eqrl::agent {

// 7 node features, then is_cursor, is_action_target, action bucket centre and
// the target's sim_target gain over the cursor (scaled by kGainScale).
constexpr std::size_t kAgentInputDim = FeatureVector::kSize + 4;
constexpr double kGainScale = 10.0;

struct EnvConfig {
  metrics::TestRunConfig exec;
  metrics::CodeBleuConfig codebleu;
  llm::GenerationParams generation;
  std::size_t feature_cache_capacity = 1u << 20;
};

// Candidate generation plus memoized feature computation.
class Environment {
 public:
  Environment(llm::LlmClient& client, EnvConfig cfg = {}) : client_(client), cfg_(std::move(cfg)) {}

  llm::LlmClient& client() { return client_; }
  const EnvConfig& config() const { return cfg_; }

  std::vector<std::string> candidates(const std::string& a_i, const std::string& b, int n) {
    return llm::request_candidates(client_, a_i, b, n, cfg_.generation);
  }

  FeatureVector features(const std::string& c, const std::string& a, const std::string& parent, const std::string& b,
                         const std::vector<TestCase>& tests) {
    std::uint64_t key = fnv1a(c);
    for (const auto* s : {&a, &parent, &b}) key = hash_combine(key, fnv1a(*s));
    key = hash_combine(key, reinterpret_cast<std::uintptr_t>(&tests));
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    const auto pc = analyses_.get(c);
    const double rho = pc->parses() ? metrics::run_tests(c, tests, cfg_.exec) : 0.0;
    const FeatureVector f =
        metrics::build_feature_vector(*pc, *analyses_.get(a), *analyses_.get(parent), *analyses_.get(b), rho, cfg_.codebleu);
    std::lock_guard lock(mu_);
    if (cache_.size() >= cfg_.feature_cache_capacity) cache_.clear();
    cache_.emplace(key, f);
    return f;
  }

 private:
  llm::LlmClient& client_;
  EnvConfig cfg_;
  metrics::AnalysisCache analyses_{8192};
  std::mutex mu_;
  std::unordered_map<std::uint64_t, FeatureVector> cache_;
};

// Node the cursor moves to under each legal action.
inline std::vector<rtree::NodeId> action_targets(const rtree::ReasoningTree& tree, const std::vector<Action>& legal) {
  const auto open = tree.unexplored_children(tree.cursor());
  std::vector<rtree::NodeId> out;
  for (const auto& a : legal) out.push_back(a.is_backtrack() ? *tree.node(tree.cursor()).parent : open.at(a.index));
  return out;
}

inline rtree::GraphEncoding encode_state(const rtree::ReasoningTree& tree, const std::vector<Action>& legal,
                                         bool slot_features) {
  rtree::GraphEncoding g = tree.to_graph_encoding();
  Tensor x(g.num_nodes(), kAgentInputDim);
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    for (std::size_t k = 0; k < FeatureVector::kSize; ++k) x(i, k) = g.node_features(i, k);
  x(g.cursor_index, FeatureVector::kSize) = 1.0;
  if (slot_features) {
    const auto targets = action_targets(tree, legal);
    const double here = tree.node(tree.cursor()).features.sim_target;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      x(targets[j], FeatureVector::kSize + 1) = 1.0;
      x(targets[j], FeatureVector::kSize + 2) = bucket_center_logit(j, targets.size());
      x(targets[j], FeatureVector::kSize + 3) = kGainScale * (tree.node(targets[j]).features.sim_target - here);
    }
  }
  g.node_features = std::move(x);
  return g;
}

struct Decision {
  SampledAction sample;
  double mu = 0;
  double sigma = 1;
};

using Chooser = std::function<Decision(const rtree::ReasoningTree&, const std::vector<Action>&, const rtree::GraphEncoding&)>;

// Gaussian actor; with rng == nullptr it acts with x = mu.
inline Chooser actor_chooser(const gnn::GatNetworkParams& actor, Rng* rng) {
  return [&actor, rng](const rtree::ReasoningTree&, const std::vector<Action>& legal, const rtree::GraphEncoding& enc) {
    const auto tr = gnn::network_forward_traced(enc, actor);
    const auto out = gnn::actor_output(tr, enc.cursor_index);
    const double x = rng ? rng->normal(out.mu, out.sigma) : out.mu;
    return Decision{action_from_x(x, out.mu, out.sigma, legal), out.mu, out.sigma};
  };
}

inline Decision decision_for_bucket(std::size_t j, const std::vector<Action>& legal) {
  const double x = bucket_center_logit(j, legal.size());
  return Decision{action_from_x(x, x, 1.0, legal), x, 1.0};
}

inline Chooser greedy_chooser(int policy_id) {
  if (policy_id < 1 || policy_id > 3) throw ArgumentError("greedy policy must be 1, 2 or 3");
  return [policy_id](const rtree::ReasoningTree& tree, const std::vector<Action>& legal, const rtree::GraphEncoding&) {
    std::vector<FeatureVector> feats;
    for (auto id : tree.unexplored_children(tree.cursor())) feats.push_back(tree.node(id).features);
    const std::size_t offset = !legal.empty() && legal.front().is_backtrack() ? 1 : 0;
    return decision_for_bucket(offset + greedy_select(policy_id, feats), legal);
  };
}

inline Chooser random_chooser(Rng& rng) {
  return [&rng](const rtree::ReasoningTree&, const std::vector<Action>& legal, const rtree::GraphEncoding&) {
    return decision_for_bucket(rng.below(legal.size()), legal);
  };
}

struct Transition {
  rtree::GraphEncoding state;
  std::size_t legal_count = 0;
  Action action;
  std::size_t bucket = 0;
  double reward = 0;
  rtree::GraphEncoding next_state;
  bool terminal = false;
  double x = 0;
  double mu = 0;
  double sigma = 1;
  double ret = 0;  // discounted return from this step
};

struct StepRecord {
  Action action;
  std::size_t bucket = 0;
  std::size_t legal_count = 0;
  double reward = 0;
  rtree::NodeId cursor = 0;  // after the action
};

struct EpisodeResult {
  std::string pair_id;
  std::vector<std::string> programs;  // root-to-cursor chain, A first
  std::vector<FeatureVector> features;
  std::vector<StepRecord> actions;
  Termination reason = Termination::CapP;
  int llm_query_count = 0;
  double final_sim_target = 0;
  std::vector<Transition> transitions;
  std::shared_ptr<const rtree::ReasoningTree> tree;
  std::shared_ptr<const rtree::ProgramStore> store;

  double total_reward() const {
    double s = 0;
    for (const auto& a : actions) s += a.reward;
    return s;
  }
};

inline EpisodeResult step_episode(const corpus::ProgramPair& pair, Environment& env, const Chooser& choose,
                                  const AgentConfig& cfg, bool record_transitions = false) {
  if (!pair.tests || pair.tests->empty()) throw ArgumentError("pair " + pair.id + " has no tests");
  const std::string& a = pair.source.source;
  const std::string& b = pair.target.source;
  const auto& tests = *pair.tests;
  auto store = std::make_shared<rtree::ProgramStore>();
  auto tree = std::make_shared<rtree::ReasoningTree>(rtree::new_tree(env.features(a, a, a, b, tests), pair.source, *store));
  const TerminationLimits lim{cfg.m_stall, cfg.p_max_queries, cfg.reward.target_threshold};
  const int cap = cfg.effective_action_cap();

  EpisodeResult res;
  res.pair_id = pair.id;
  TerminationState ts;
  ts.best_sim_target = tree->node(tree->root()).features.sim_target;
  std::optional<Termination> reason;

  while (!reason) {
    if (ts.action_count >= cap) {
      reason = Termination::ActionCap;
      break;
    }
    const auto cur = tree->cursor();
    if (tree->unexplored_children(cur).empty()) {
      if (ts.query_count >= cfg.p_max_queries) {
        reason = Termination::CapP;
        break;
      }
      const std::string parent = store->get(tree->node(cur).program_ref).source;
      const auto cands = env.candidates(parent, b, cfg.n_candidates);
      ++ts.query_count;
      std::vector<std::pair<FeatureVector, rtree::ProgramRef>> batch;
      for (std::size_t k = 0; k < cands.size(); ++k) {
        const auto f = env.features(cands[k], a, parent, b, tests);
        batch.emplace_back(f, store->put({pair.id + "#" + std::to_string(store->size()), cands[k], pair.source.problem_id}));
      }
      tree->add_candidates(cur, batch);
    }
    const auto legal = policy_actions(*tree, cfg.allow_backtrack);
    auto enc = encode_state(*tree, legal, cfg.slot_features);
    const Decision d = choose(*tree, legal, enc);
    const FeatureVector from = tree->node(tree->cursor()).features;
    tree->apply_action(d.sample.action);
    const FeatureVector& to = tree->node(tree->cursor()).features;
    ++ts.action_count;
    const double r = reward(d.sample.action, from, to, cfg.reward);
    if (!d.sample.action.is_backtrack()) reason = check_termination(ts, to, lim);
    if (!reason && ts.action_count >= cap) reason = Termination::ActionCap;
    res.actions.push_back({d.sample.action, d.sample.bucket, legal.size(), r, tree->cursor()});
    if (record_transitions) {
      Transition t;
      t.state = std::move(enc);
      t.legal_count = legal.size();
      t.action = d.sample.action;
      t.bucket = d.sample.bucket;
      t.reward = r;
      t.next_state = encode_state(*tree, policy_actions(*tree, cfg.allow_backtrack), cfg.slot_features);
      t.terminal = reason.has_value();
      t.x = d.sample.x;
      t.mu = d.mu;
      t.sigma = d.sigma;
      res.transitions.push_back(std::move(t));
    }
  }

  res.reason = *reason;
  res.llm_query_count = ts.query_count;
  for (auto id : tree->path_from_root(tree->cursor())) {
    res.programs.push_back(store->get(tree->node(id).program_ref).source);
    res.features.push_back(tree->node(id).features);
  }
  res.final_sim_target = res.features.back().sim_target;
  if (record_transitions) {
    std::vector<double> rewards;
    for (const auto& t : res.transitions) rewards.push_back(t.reward);
    const auto d = discounted_returns(rewards, cfg.gamma);
    for (std::size_t i = 0; i < d.size(); ++i) res.transitions[i].ret = d[i];
  }
  res.tree = std::move(tree);
  res.store = std::move(store);
  return res;
}

}  // namespace eqrl::agent
