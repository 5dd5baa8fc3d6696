#pragma once

// Policy primitives: agent configuration, the Gaussian-to-bucket action rule,
// reward, discounted returns, termination and the greedy baselines.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "eqrl/errors.hpp"
#include "eqrl/gnn/gat.hpp"
#include "eqrl/metrics/features.hpp"
#include "eqrl/random.hpp"
#include "eqrl/rtree.hpp"
#include "json.hpp"

namespace eqrl::agent {

using metrics::FeatureVector;
using rtree::Action;

struct RewardConfig {
  double similarity_weight = 1.0;
  double terminal_bonus = 1.0;
  double invalid_penalty = 0.2;
  double step_cost = 0.01;
  double target_threshold = 0.995;  // sim_target counted as reaching B

  nlohmann::json to_json() const {
    return {{"similarity_weight", similarity_weight}, {"terminal_bonus", terminal_bonus},
            {"invalid_penalty", invalid_penalty},     {"step_cost", step_cost},
            {"target_threshold", target_threshold}};
  }
  static RewardConfig from_json(const nlohmann::json& j) {
    RewardConfig r;
    r.similarity_weight = j.value("similarity_weight", r.similarity_weight);
    r.terminal_bonus = j.value("terminal_bonus", r.terminal_bonus);
    r.invalid_penalty = j.value("invalid_penalty", r.invalid_penalty);
    r.step_cost = j.value("step_cost", r.step_cost);
    r.target_threshold = j.value("target_threshold", r.target_threshold);
    return r;
  }
};

struct AgentConfig {
  double gamma = 0.99;
  double learning_rate = 1e-3;
  std::size_t replay_capacity = 5000;
  std::size_t batch_size = 32;
  int max_episodes = 2000;
  int min_episodes = 1000;
  int eval_every = 50;
  std::size_t validation_pairs = 20;
  int stabilization_window = 5;
  double stabilization_epsilon = 1.0;  // CodeBLEU points
  int updates_per_episode = 8;
  double entropy_coef = 0.02;
  bool recompute_log_probs = true;  // replayed log-probs under current parameters
  bool normalize_advantages = true;  // per batch
  double z_clip = 3.0;               // replayed samples with |x - mu| / sigma above this are skipped by the actor; <= 0 disables
  double mu_bound = 5.0;             // quadratic penalty on |mu| beyond this
  double mu_penalty = 0.1;
  int n_candidates = 10;
  int m_stall = 3;
  int p_max_queries = 10;
  int action_cap = 0;  // 0 means 3 * p_max_queries
  bool allow_backtrack = true;
  bool slot_features = true;
  RewardConfig reward;

  int effective_action_cap() const { return action_cap > 0 ? action_cap : 3 * p_max_queries; }

  void validate() const {
    if (!(gamma > 0 && gamma <= 1)) throw ArgumentError("gamma must be in (0, 1]");
    if (!(learning_rate > 0)) throw ArgumentError("learning_rate must be > 0");
    if (m_stall < 1) throw ArgumentError("m_stall must be >= 1");
    if (p_max_queries < 1) throw ArgumentError("p_max_queries must be >= 1");
    if (n_candidates < 1) throw ArgumentError("n_candidates must be >= 1");
    if (batch_size < 1 || replay_capacity < batch_size) throw ArgumentError("replay_capacity must be >= batch_size >= 1");
    if (max_episodes < 0 || min_episodes < 0) throw ArgumentError("episode counts must be >= 0");
    if (eval_every < 1 || stabilization_window < 2) throw ArgumentError("eval_every >= 1 and stabilization_window >= 2 required");
    if (action_cap < 0) throw ArgumentError("action_cap must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"gamma", gamma},
            {"learning_rate", learning_rate},
            {"replay_capacity", replay_capacity},
            {"batch_size", batch_size},
            {"max_episodes", max_episodes},
            {"min_episodes", min_episodes},
            {"eval_every", eval_every},
            {"validation_pairs", validation_pairs},
            {"stabilization_window", stabilization_window},
            {"stabilization_epsilon", stabilization_epsilon},
            {"updates_per_episode", updates_per_episode},
            {"entropy_coef", entropy_coef},
            {"recompute_log_probs", recompute_log_probs},
            {"normalize_advantages", normalize_advantages},
            {"z_clip", z_clip},
            {"mu_bound", mu_bound},
            {"mu_penalty", mu_penalty},
            {"n_candidates", n_candidates},
            {"m_stall", m_stall},
            {"p_max_queries", p_max_queries},
            {"action_cap", effective_action_cap()},
            {"allow_backtrack", allow_backtrack},
            {"slot_features", slot_features},
            {"reward", reward.to_json()}};
  }

  static AgentConfig from_json(const nlohmann::json& j) {
    AgentConfig c;
    c.gamma = j.value("gamma", c.gamma);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_episodes = j.value("max_episodes", c.max_episodes);
    c.min_episodes = j.value("min_episodes", c.min_episodes);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.validation_pairs = j.value("validation_pairs", c.validation_pairs);
    c.stabilization_window = j.value("stabilization_window", c.stabilization_window);
    c.stabilization_epsilon = j.value("stabilization_epsilon", c.stabilization_epsilon);
    c.updates_per_episode = j.value("updates_per_episode", c.updates_per_episode);
    c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
    c.recompute_log_probs = j.value("recompute_log_probs", c.recompute_log_probs);
    c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
    c.z_clip = j.value("z_clip", c.z_clip);
    c.mu_bound = j.value("mu_bound", c.mu_bound);
    c.mu_penalty = j.value("mu_penalty", c.mu_penalty);
    c.n_candidates = j.value("n_candidates", c.n_candidates);
    c.m_stall = j.value("m_stall", c.m_stall);
    c.p_max_queries = j.value("p_max_queries", c.p_max_queries);
    c.action_cap = j.value("action_cap", c.action_cap);
    c.allow_backtrack = j.value("allow_backtrack", c.allow_backtrack);
    c.slot_features = j.value("slot_features", c.slot_features);
    if (j.contains("reward")) c.reward = RewardConfig::from_json(j.at("reward"));
    c.validate();
    return c;
  }
};

// Actions available to a policy. Without backtracking only the selects remain.
inline std::vector<Action> policy_actions(const rtree::ReasoningTree& tree, bool allow_backtrack) {
  auto legal = tree.legal_actions();
  if (!allow_backtrack && !legal.empty() && legal.front().is_backtrack()) legal.erase(legal.begin());
  return legal;
}

// Bucket j of K has its centre at logistic^-1((j + 0.5) / K).
inline double bucket_center_logit(std::size_t j, std::size_t k) {
  const double u = (static_cast<double>(j) + 0.5) / static_cast<double>(k);
  return std::log(u / (1 - u));
}

inline std::size_t bucket_of(double x, std::size_t k) {
  if (k == 0) throw ProtocolError("no legal actions");
  const double u = gnn::logistic(x);
  return std::min(static_cast<std::size_t>(std::floor(u * static_cast<double>(k))), k - 1);
}

inline double gaussian_log_prob(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2 * std::numbers::pi);
}

struct ActionDistribution {
  double mu = 0;
  double sigma = 1;
  std::vector<Action> legal;
};

struct SampledAction {
  Action action;
  std::size_t bucket = 0;
  double x = 0;
  double log_prob = 0;
};

// Maps x to the legal action of its bucket. legal is [Backtrack?] ++ selects.
inline SampledAction action_from_x(double x, double mu, double sigma, const std::vector<Action>& legal) {
  SampledAction s;
  s.x = x;
  s.bucket = bucket_of(x, legal.size());
  s.action = legal[s.bucket];
  s.log_prob = gaussian_log_prob(x, mu, sigma);
  return s;
}

inline SampledAction sample_action(double mu, double sigma, const std::vector<Action>& legal, Rng& rng) {
  if (legal.empty()) throw ProtocolError("no legal actions");
  return action_from_x(rng.normal(mu, sigma), mu, sigma, legal);
}

// Reward for the step that moved the cursor from `from` to `to`.
inline double reward(const Action& a, const FeatureVector& from, const FeatureVector& to, const RewardConfig& cfg = {}) {
  if (a.is_backtrack()) return -cfg.step_cost;
  double r = cfg.similarity_weight * (to.sim_target - from.sim_target) - cfg.step_cost;
  if (to.rho == 1.0 && to.sim_target >= cfg.target_threshold) r += cfg.terminal_bonus;
  if (to.nu == 0.0 || to.rho == 0.0) r -= cfg.invalid_penalty;
  return r;
}

// D_t = sum_k gamma^k R_{t+k+1}, computed backwards.
inline std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  if (!(gamma > 0 && gamma <= 1)) throw ArgumentError("gamma must be in (0, 1]");
  std::vector<double> d(rewards.size());
  double acc = 0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    d[t] = acc;
  }
  return d;
}

enum class Termination { ReachedTarget, StallM, CapP, ActionCap };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::ReachedTarget: return "reached_target";
    case Termination::StallM: return "stall_m";
    case Termination::CapP: return "cap_p";
    case Termination::ActionCap: return "action_cap";
  }
  return "?";
}

struct TerminationState {
  int stall_counter = 0;
  int query_count = 0;
  int action_count = 0;
  double best_sim_target = 0;
};

struct TerminationLimits {
  int m_stall = 3;
  int p_max_queries = 10;
  double target_threshold = 0.995;
};

// Called after each Select with the newly selected node's features.
inline std::optional<Termination> check_termination(TerminationState& ts, const FeatureVector& latest,
                                                    const TerminationLimits& lim = {}) {
  if (latest.rho == 0.0 || latest.sim_target <= ts.best_sim_target) {
    ++ts.stall_counter;
  } else {
    ts.stall_counter = 0;
    ts.best_sim_target = latest.sim_target;
  }
  if (latest.rho == 1.0 && latest.sim_target >= lim.target_threshold) return Termination::ReachedTarget;
  if (ts.stall_counter >= lim.m_stall) return Termination::StallM;
  if (ts.query_count >= lim.p_max_queries) return Termination::CapP;
  return std::nullopt;
}

// Greedy baselines over the candidates' feature vectors; lowest index wins ties.
inline std::size_t greedy_select(int policy_id, const std::vector<FeatureVector>& candidates) {
  if (candidates.empty()) throw ArgumentError("no candidates");
  if (policy_id < 1 || policy_id > 3) throw ArgumentError("greedy policy must be 1, 2 or 3");
  auto key = [&](const FeatureVector& f) -> std::array<double, 3> {
    switch (policy_id) {
      case 1: return {f.nu, f.rho, f.sim_target};
      case 2: return {f.rho, f.nu, f.sim_target};
      default: return {f.nu + f.rho + f.sim_target, 0, 0};
    }
  };
  std::size_t best = 0;
  auto best_key = key(candidates[0]);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto k = key(candidates[i]);
    if (k > best_key) {
      best = i;
      best_key = k;
    }
  }
  return best;
}

}  // namespace eqrl::agent
