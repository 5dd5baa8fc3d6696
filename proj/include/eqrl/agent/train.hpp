#pragma once

// Actor-critic training with experience replay.

#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "eqrl/agent/episode.hpp"
#include "eqrl/gnn/checkpoint.hpp"
#include "eqrl/gnn/gat.hpp"

namespace eqrl::agent {

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw ArgumentError("replay capacity must be >= 1");
  }

  void push(Transition t) {
    if (items_.size() == capacity_) {
      items_[next_] = std::move(t);
      next_ = (next_ + 1) % capacity_;
    } else {
      items_.push_back(std::move(t));
    }
  }

  // Uniform without replacement within the batch.
  std::vector<const Transition*> sample(std::size_t n) {
    std::vector<const Transition*> out;
    for (auto i : rng_.sample_indices(items_.size(), std::min(n, items_.size()))) out.push_back(&items_[i]);
    return out;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
  Rng rng_;
};

struct ActorCritic {
  gnn::GatNetworkParams actor;
  gnn::GatNetworkParams critic;

  static ActorCritic init(std::uint64_t seed) {
    return {gnn::init_params(hash_combine(seed, 1), 2, kAgentInputDim), gnn::init_params(hash_combine(seed, 2), 1, kAgentInputDim)};
  }
};

struct UpdateStats {
  double actor_loss = 0;
  double critic_loss = 0;
};

// One gradient step on each network from a replay batch.
inline UpdateStats update(ActorCritic& ac, gnn::Adam& actor_opt, gnn::Adam& critic_opt,
                          const std::vector<const Transition*>& batch, const AgentConfig& cfg) {
  UpdateStats st;
  if (batch.empty()) return st;
  const double inv = 1.0 / static_cast<double>(batch.size());
  gnn::Gradients ga(ac.actor), gc(ac.critic);
  std::vector<double> adv(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition* t = batch[i];
    const auto trc = gnn::network_forward_traced(t->state, ac.critic);
    const double v = gnn::critic_value(trc);
    adv[i] = t->ret - v;
    st.critic_loss += adv[i] * adv[i] * inv;
    gc += gnn::backward(trc, gnn::critic_upstream(trc, -2.0 * adv[i] * inv));
  }
  if (cfg.normalize_advantages && batch.size() > 1) {
    double mean = 0, var = 0;
    for (double a : adv) mean += a * inv;
    for (double a : adv) var += (a - mean) * (a - mean) * inv;
    for (double& a : adv) a = (a - mean) / (std::sqrt(var) + 1e-8);
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition* t = batch[i];
    const auto tra = gnn::network_forward_traced(t->state, ac.actor);
    const auto out = gnn::actor_output(tra, t->state.cursor_index);
    const double mu = cfg.recompute_log_probs ? out.mu : t->mu;
    const double sigma = cfg.recompute_log_probs ? out.sigma : t->sigma;
    const double z = (t->x - mu) / sigma;
    const bool stale = cfg.z_clip > 0 && std::abs(z) > cfg.z_clip;
    const double a = stale ? 0.0 : adv[i];
    st.actor_loss += -gaussian_log_prob(t->x, mu, sigma) * a * inv;
    const double excess = std::abs(out.mu) > cfg.mu_bound ? out.mu - std::copysign(cfg.mu_bound, out.mu) : 0.0;
    st.actor_loss += cfg.mu_penalty * excess * excess * inv;
    const double d_mu = (-a * z / sigma + 2 * cfg.mu_penalty * excess) * inv;
    const double d_sigma = (-a * (z * z - 1.0) / sigma - cfg.entropy_coef / sigma) * inv;
    ga += gnn::backward(tra, gnn::actor_upstream(tra, t->state.cursor_index, d_mu, d_sigma));
  }
  actor_opt.step(ac.actor, std::move(ga));
  critic_opt.step(ac.critic, std::move(gc));
  return st;
}

// Mean final sim_target (CodeBLEU points) of deterministic rollouts.
inline double evaluate_policy(const std::vector<corpus::ProgramPair>& pairs, Environment& env, const Chooser& choose,
                              const AgentConfig& cfg, std::vector<EpisodeResult>* episodes = nullptr) {
  if (pairs.empty()) return 0;
  double s = 0;
  for (const auto& p : pairs) {
    auto r = step_episode(p, env, choose, cfg);
    s += r.final_sim_target;
    if (episodes) episodes->push_back(std::move(r));
  }
  return 100.0 * s / static_cast<double>(pairs.size());
}

struct CurveRow {
  int episode = 0;
  double mean_reward = 0;
  std::optional<double> validation;
  double actor_loss = 0;
  double critic_loss = 0;
};

struct TrainResult {
  ActorCritic params;
  std::vector<CurveRow> curve;
  int episodes_run = 0;
  int start_episode = 0;
  double best_validation = 0;
  int best_episode = 0;
  bool stabilized = false;
};

inline void write_curve_csv(const std::filesystem::path& path, const std::vector<CurveRow>& rows) {
  std::ofstream f(path);
  if (!f) throw EnvironmentError("cannot write " + path.string());
  f << "episode,mean_reward,validation_final_sim,actor_loss,critic_loss\n";
  f.precision(10);
  for (const auto& r : rows) {
    f << r.episode << "," << r.mean_reward << ",";
    if (r.validation) f << *r.validation;
    f << "," << r.actor_loss << "," << r.critic_loss << "\n";
  }
}

struct TrainOptions {
  std::uint64_t seed = 0;
  std::optional<ActorCritic> init;  // transfer / resume
  int start_episode = 0;            // resume offset for the seed streams
  std::function<void(const CurveRow&)> on_row;
};

inline TrainResult train(const std::vector<corpus::ProgramPair>& train_pairs,
                         const std::vector<corpus::ProgramPair>& validation_pairs, Environment& env,
                         const AgentConfig& cfg, const TrainOptions& opt = {}) {
  cfg.validate();
  if (train_pairs.empty()) throw ArgumentError("training set is empty");
  for (const auto& p : train_pairs)
    if (p.label != corpus::PairLabel::Equivalent) throw ArgumentError("training uses equivalent pairs only: " + p.id);

  TrainResult res;
  res.params = opt.init ? *opt.init : ActorCritic::init(opt.seed);
  res.start_episode = opt.start_episode;
  if (cfg.max_episodes == 0) return res;

  gnn::AdamConfig ac_cfg;
  ac_cfg.learning_rate = cfg.learning_rate;
  gnn::Adam actor_opt(ac_cfg), critic_opt(ac_cfg);
  ReplayBuffer replay(cfg.replay_capacity, hash_combine(hash_combine(opt.seed, 3), static_cast<std::uint64_t>(opt.start_episode)));
  Rng rng(hash_combine(hash_combine(opt.seed, 4), static_cast<std::uint64_t>(opt.start_episode)));

  std::vector<corpus::ProgramPair> val(validation_pairs.begin(),
                                       validation_pairs.begin() +
                                           static_cast<std::ptrdiff_t>(std::min(cfg.validation_pairs, validation_pairs.size())));
  auto validate = [&] { return evaluate_policy(val, env, actor_chooser(res.params.actor, nullptr), cfg); };

  std::optional<ActorCritic> best;
  std::vector<double> evals;
  if (!val.empty()) {
    res.best_validation = validate();
    res.best_episode = opt.start_episode;
    best = res.params;
    evals.push_back(res.best_validation);
  }
  std::deque<double> recent_rewards;
  for (int ep = 1; ep <= cfg.max_episodes; ++ep) {
    const auto& pair = train_pairs[rng.below(train_pairs.size())];
    auto r = step_episode(pair, env, actor_chooser(res.params.actor, &rng), cfg, true);
    recent_rewards.push_back(r.total_reward());
    if (static_cast<int>(recent_rewards.size()) > cfg.eval_every) recent_rewards.pop_front();
    for (auto& t : r.transitions) replay.push(std::move(t));

    CurveRow row;
    row.episode = opt.start_episode + ep;
    if (replay.size() >= cfg.batch_size) {
      for (int u = 0; u < cfg.updates_per_episode; ++u) {
        const auto st = update(res.params, actor_opt, critic_opt, replay.sample(cfg.batch_size), cfg);
        row.actor_loss += st.actor_loss / cfg.updates_per_episode;
        row.critic_loss += st.critic_loss / cfg.updates_per_episode;
      }
    }
    double sum = 0;
    for (double v : recent_rewards) sum += v;
    row.mean_reward = sum / static_cast<double>(recent_rewards.size());
    res.episodes_run = ep;

    bool stop = false;
    if (!val.empty() && ep % cfg.eval_every == 0) {
      const double v = validate();
      row.validation = v;
      evals.push_back(v);
      if (v > res.best_validation) {
        res.best_validation = v;
        res.best_episode = row.episode;
        best = res.params;
      }
      const auto w = static_cast<std::size_t>(cfg.stabilization_window);
      if (ep >= cfg.min_episodes && evals.size() >= w) {
        const auto [lo, hi] = std::minmax_element(evals.end() - static_cast<std::ptrdiff_t>(w), evals.end());
        if (*hi - *lo < cfg.stabilization_epsilon) stop = res.stabilized = true;
      }
    }
    res.curve.push_back(row);
    if (opt.on_row) opt.on_row(row);
    if (stop) break;
  }
  if (best) res.params = *best;
  return res;
}

inline nlohmann::json checkpoint_metadata(const TrainResult& r, const AgentConfig& cfg, std::uint64_t seed) {
  return {{"agent_config", cfg.to_json()},
          {"seed", seed},
          {"episodes", r.start_episode + r.episodes_run},
          {"best_validation", r.best_validation},
          {"best_episode", r.best_episode},
          {"stabilized", r.stabilized},
          {"input_dim", kAgentInputDim}};
}

inline void save_agent(const std::filesystem::path& path, const ActorCritic& ac, const nlohmann::json& metadata) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  gnn::save_checkpoint(path, {&ac.actor, &ac.critic}, metadata);
}

struct LoadedAgent {
  ActorCritic params;
  nlohmann::json metadata;
};

inline LoadedAgent load_agent(const std::filesystem::path& path) {
  auto ck = gnn::load_checkpoint(path);
  if (ck.networks.size() != 2) throw FormatError(path.string() + ": expected actor and critic networks");
  if (ck.networks[0].in_dim() != kAgentInputDim || ck.networks[0].head_dim != 2 || ck.networks[1].head_dim != 1 ||
      ck.networks[1].in_dim() != kAgentInputDim)
    throw FormatError(path.string() + ": network shapes do not match the agent");
  return {{std::move(ck.networks[0]), std::move(ck.networks[1])}, std::move(ck.metadata)};
}

// Fine-tunes a trained agent in a new environment. Without an explicit
// episode budget it gets a tenth of the full one.
inline TrainResult transfer(const ActorCritic& from, const std::vector<corpus::ProgramPair>& train_pairs,
                            const std::vector<corpus::ProgramPair>& validation_pairs, Environment& env, AgentConfig cfg,
                            std::uint64_t seed, std::optional<int> episodes = std::nullopt) {
  cfg.max_episodes = episodes ? *episodes : std::max(1, cfg.max_episodes / 10);
  cfg.min_episodes = std::min(cfg.min_episodes, cfg.max_episodes);
  TrainOptions opt;
  opt.seed = seed;
  opt.init = from;
  return train(train_pairs, validation_pairs, env, cfg, opt);
}

}  // namespace eqrl::agent
