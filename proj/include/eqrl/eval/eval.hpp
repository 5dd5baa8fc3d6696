#pragma once

// Evaluation: reasoning quality of transformation sequences, downstream
// equivalence verdicts, action histograms and attention dumps.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eqrl/agent/train.hpp"
#include "eqrl/llm/prompts.hpp"
#include "eqrl/llm/response.hpp"

namespace eqrl::eval {

using agent::FeatureVector;

struct Strategy {
  enum class Kind { NoReasoning, Cot, Tot, Agent, AgentNoBacktrack, Greedy, Random };
  Kind kind = Kind::NoReasoning;
  int experts = 3;        // Tot
  int greedy_policy = 3;  // Greedy

  bool uses_agent() const { return kind == Kind::Agent || kind == Kind::AgentNoBacktrack; }
  bool uses_episodes() const { return uses_agent() || kind == Kind::Greedy || kind == Kind::Random; }

  std::string name() const {
    switch (kind) {
      case Kind::NoReasoning: return "no-reasoning";
      case Kind::Cot: return "cot";
      case Kind::Tot: return "tot";
      case Kind::Agent: return "agent";
      case Kind::AgentNoBacktrack: return "agent-no-backtrack";
      case Kind::Greedy: return "greedy" + std::to_string(greedy_policy);
      case Kind::Random: return "random";
    }
    return "?";
  }

  static Strategy parse(const std::string& s) {
    Strategy st;
    if (s == "no-reasoning" || s == "none") return st;
    if (s == "cot") return st.kind = Kind::Cot, st;
    if (s == "tot") return st.kind = Kind::Tot, st;
    if (s == "agent") return st.kind = Kind::Agent, st;
    if (s == "agent-no-backtrack") return st.kind = Kind::AgentNoBacktrack, st;
    if (s == "random") return st.kind = Kind::Random, st;
    if (s.size() == 7 && s.starts_with("greedy") && s[6] >= '1' && s[6] <= '3') {
      st.kind = Kind::Greedy;
      st.greedy_policy = s[6] - '0';
      return st;
    }
    throw ArgumentError("unknown strategy: " + s);
  }
};

// Where programs come from during evaluation.
struct EvalContext {
  agent::Environment& env;
  agent::AgentConfig agent_cfg;
  const gnn::GatNetworkParams* actor = nullptr;  // Agent strategies
  std::uint64_t seed = 0;                        // Random strategy
};

struct PairReport {
  std::string pair_id;
  std::vector<std::string> programs;  // A_1 .. A_final (A itself excluded)
  std::vector<FeatureVector> features;
  FeatureVector final_features;       // of the last program, or of A when there are none
  std::optional<std::string> error;
  std::optional<agent::EpisodeResult> episode;
};

struct ReasoningAggregates {
  double mean_syntactic = 0;  // percentages
  double final_syntactic = 0;
  double mean_functional = 0;
  double final_functional = 0;
  double final_similarity = 0;  // CodeBLEU points
  double mean_granularity = 0;  // Jaccard to the previous program
  bool has_mean = true;         // false for ToT
  std::size_t pairs = 0;
  std::size_t skipped = 0;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"final_syntactic", final_syntactic},
                        {"final_functional", final_functional},
                        {"final_similarity", final_similarity},
                        {"pairs", pairs},
                        {"skipped", skipped}};
    if (has_mean) {
      j["mean_syntactic"] = mean_syntactic;
      j["mean_functional"] = mean_functional;
      j["mean_granularity"] = mean_granularity;
    } else {
      j["mean_syntactic"] = j["mean_functional"] = j["mean_granularity"] = nullptr;
    }
    return j;
  }
};

struct ReasoningReport {
  std::string strategy;
  std::vector<PairReport> pairs;
  ReasoningAggregates aggregates;
};

// Order-independent fold over pair reports.
inline ReasoningAggregates aggregate(const std::vector<PairReport>& pairs, bool has_mean) {
  ReasoningAggregates a;
  a.has_mean = has_mean;
  for (const auto& p : pairs) {
    if (p.error) {
      ++a.skipped;
      continue;
    }
    ++a.pairs;
    a.final_syntactic += p.final_features.nu;
    a.final_functional += p.final_features.rho;
    a.final_similarity += p.final_features.sim_target;
    if (!has_mean) continue;
    if (p.features.empty()) {
      a.mean_syntactic += p.final_features.nu;
      a.mean_functional += p.final_features.rho;
      a.mean_granularity += p.final_features.gran_parent;
      continue;
    }
    double nu = 0, rho = 0, gran = 0;
    for (const auto& f : p.features) {
      nu += f.nu;
      rho += f.rho;
      gran += f.gran_parent;
    }
    const double n = static_cast<double>(p.features.size());
    a.mean_syntactic += nu / n;
    a.mean_functional += rho / n;
    a.mean_granularity += gran / n;
  }
  if (a.pairs > 0) {
    const double n = static_cast<double>(a.pairs);
    a.mean_syntactic *= 100.0 / n;
    a.final_syntactic *= 100.0 / n;
    a.mean_functional *= 100.0 / n;
    a.final_functional *= 100.0 / n;
    a.final_similarity *= 100.0 / n;
    a.mean_granularity /= n;
  }
  return a;
}

inline agent::Chooser strategy_chooser(const Strategy& s, const EvalContext& ctx, Rng& rng) {
  switch (s.kind) {
    case Strategy::Kind::Agent:
    case Strategy::Kind::AgentNoBacktrack:
      if (!ctx.actor) throw ArgumentError("strategy " + s.name() + " needs a trained checkpoint");
      return agent::actor_chooser(*ctx.actor, nullptr);
    case Strategy::Kind::Greedy: return agent::greedy_chooser(s.greedy_policy);
    case Strategy::Kind::Random: return agent::random_chooser(rng);
    default: throw ArgumentError("strategy " + s.name() + " does not run episodes");
  }
}

inline agent::AgentConfig strategy_agent_config(const Strategy& s, agent::AgentConfig cfg) {
  if (s.kind == Strategy::Kind::AgentNoBacktrack || s.kind == Strategy::Kind::Greedy) cfg.allow_backtrack = false;
  return cfg;
}

// Programs of a one-shot CoT/ToT answer, in reading order.
inline std::vector<std::string> reasoning_programs(const std::string& answer) {
  std::vector<std::string> out;
  for (auto& b : llm::fenced_blocks(answer)) out.push_back(llm::strip_trailing_newlines(b));
  return out;
}

inline PairReport reason_about_pair(const corpus::ProgramPair& pair, const Strategy& s, EvalContext& ctx, Rng& rng) {
  PairReport r;
  r.pair_id = pair.id;
  const std::string& a = pair.source.source;
  const std::string& b = pair.target.source;
  if (!pair.tests || pair.tests->empty()) throw ArgumentError("pair " + pair.id + " has no tests");
  const auto& tests = *pair.tests;
  if (s.uses_episodes()) {
    auto ep = agent::step_episode(pair, ctx.env, strategy_chooser(s, ctx, rng), strategy_agent_config(s, ctx.agent_cfg));
    r.programs.assign(ep.programs.begin() + 1, ep.programs.end());
    r.features.assign(ep.features.begin() + 1, ep.features.end());
    r.episode = std::move(ep);
  } else if (s.kind != Strategy::Kind::NoReasoning) {
    const std::string prompt = s.kind == Strategy::Kind::Cot ? llm::render_cot_prompt(a, b) : llm::render_tot_prompt(a, b, s.experts);
    const auto answers = ctx.env.client().complete(prompt, 1, ctx.env.config().generation);
    if (!answers.empty()) r.programs = reasoning_programs(answers.front());
    std::string prev = a;
    for (const auto& p : r.programs) {
      r.features.push_back(ctx.env.features(p, a, prev, b, tests));
      prev = p;
    }
  }
  r.final_features = r.features.empty() ? ctx.env.features(a, a, a, b, tests) : r.features.back();
  return r;
}

inline ReasoningReport run_reasoning(const std::vector<corpus::ProgramPair>& pairs, const Strategy& s, EvalContext& ctx) {
  ReasoningReport rep;
  rep.strategy = s.name();
  Rng rng(hash_combine(ctx.seed, fnv1a(s.name())));
  for (const auto& p : pairs) {
    try {
      rep.pairs.push_back(reason_about_pair(p, s, ctx, rng));
    } catch (const TransportError& e) {
      rep.pairs.push_back({p.id, {}, {}, {}, e.what(), std::nullopt});
    } catch (const ReplayMiss& e) {
      rep.pairs.push_back({p.id, {}, {}, {}, e.what(), std::nullopt});
    }
  }
  rep.aggregates = aggregate(rep.pairs, s.kind != Strategy::Kind::Tot);
  return rep;
}

// Averages the aggregates of repeated runs.
inline ReasoningAggregates average(const std::vector<ReasoningAggregates>& runs) {
  if (runs.empty()) throw ArgumentError("no runs to average");
  ReasoningAggregates a;
  a.has_mean = runs.front().has_mean;
  a.pairs = runs.front().pairs;
  const double n = static_cast<double>(runs.size());
  for (const auto& r : runs) {
    a.mean_syntactic += r.mean_syntactic / n;
    a.final_syntactic += r.final_syntactic / n;
    a.mean_functional += r.mean_functional / n;
    a.final_functional += r.final_functional / n;
    a.final_similarity += r.final_similarity / n;
    a.mean_granularity += r.mean_granularity / n;
    a.skipped += r.skipped;  // over all runs
  }
  return a;
}

// Downstream classification.

struct PairVerdict {
  std::string pair_id;
  bool label = true;  // equivalent
  llm::Verdict verdict = llm::Verdict::Unparseable;
  std::string answer;
  std::size_t steps = 0;
};

// Transformation steps the strategy shows the model, then one verdict query.
inline PairVerdict classify_pair(const corpus::ProgramPair& pair, const Strategy& s, EvalContext& ctx, Rng& rng) {
  std::vector<std::string> steps;
  if (s.kind != Strategy::Kind::NoReasoning) steps = reason_about_pair(pair, s, ctx, rng).programs;
  const std::string prompt = llm::render_downstream_prompt(pair.source.source, pair.target.source, steps);
  const auto answers = ctx.env.client().complete(prompt, 1, ctx.env.config().generation);
  PairVerdict v;
  v.pair_id = pair.id;
  v.label = pair.label == corpus::PairLabel::Equivalent;
  v.answer = answers.empty() ? "" : answers.front();
  v.verdict = llm::extract_verdict(v.answer);
  v.steps = steps.size();
  return v;
}

struct ClassificationReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0, unparseable = 0;
  double precision = 0, recall = 0, f1 = 0, roc_auc = 0, accuracy = 0;

  nlohmann::json to_json() const {
    return {{"tp", tp},
            {"fp", fp},
            {"tn", tn},
            {"fn", fn},
            {"unparseable", unparseable},
            {"precision", precision},
            {"recall", recall},
            {"f1", f1},
            {"roc_auc", roc_auc},
            {"roc_auc_note", "computed from hard verdicts; equals balanced accuracy"},
            {"accuracy", accuracy}};
  }
};

inline double safe_div(double a, double b) { return b == 0 ? 0.0 : a / b; }

inline ClassificationReport finish_report(ClassificationReport r) {
  const double tp = static_cast<double>(r.tp), fp = static_cast<double>(r.fp), tn = static_cast<double>(r.tn),
               fn = static_cast<double>(r.fn);
  r.precision = safe_div(tp, tp + fp);
  r.recall = safe_div(tp, tp + fn);
  r.f1 = safe_div(2 * r.precision * r.recall, r.precision + r.recall);
  const double tnr = safe_div(tn, tn + fp);
  r.roc_auc = (r.recall + tnr) / 2;
  r.accuracy = safe_div(tp + tn, tp + tn + fp + fn);
  return r;
}

inline ClassificationReport classification_metrics(const std::vector<bool>& labels, const std::vector<bool>& verdicts) {
  if (labels.size() != verdicts.size()) throw ArgumentError("labels and verdicts differ in length");
  if (labels.empty()) throw ArgumentError("no verdicts");
  ClassificationReport r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) (verdicts[i] ? r.tp : r.fn)++;
    else (verdicts[i] ? r.fp : r.tn)++;
  }
  return finish_report(r);
}

// Unparseable answers count as the wrong prediction.
inline ClassificationReport classification_metrics(const std::vector<PairVerdict>& verdicts) {
  std::vector<bool> labels, predicted;
  std::size_t unparseable = 0;
  for (const auto& v : verdicts) {
    labels.push_back(v.label);
    if (v.verdict == llm::Verdict::Unparseable) {
      ++unparseable;
      predicted.push_back(!v.label);
    } else {
      predicted.push_back(v.verdict == llm::Verdict::Equivalent);
    }
  }
  auto r = classification_metrics(labels, predicted);
  r.unparseable = unparseable;
  return r;
}

inline ClassificationReport average(const std::vector<ClassificationReport>& runs) {
  if (runs.empty()) throw ArgumentError("no runs to average");
  ClassificationReport a;
  const double n = static_cast<double>(runs.size());
  for (const auto& r : runs) {
    a.tp += r.tp;
    a.fp += r.fp;
    a.tn += r.tn;
    a.fn += r.fn;
    a.unparseable += r.unparseable;
    a.precision += r.precision / n;
    a.recall += r.recall / n;
    a.f1 += r.f1 / n;
    a.roc_auc += r.roc_auc / n;
    a.accuracy += r.accuracy / n;
  }
  return a;
}

struct DownstreamReport {
  std::string strategy;
  std::vector<PairVerdict> verdicts;
  ClassificationReport metrics;
};

inline DownstreamReport run_downstream(const std::vector<corpus::ProgramPair>& pairs, const Strategy& s, EvalContext& ctx) {
  DownstreamReport rep;
  rep.strategy = s.name();
  Rng rng(hash_combine(ctx.seed, fnv1a("downstream:" + s.name())));
  for (const auto& p : pairs) rep.verdicts.push_back(classify_pair(p, s, ctx, rng));
  rep.metrics = classification_metrics(rep.verdicts);
  return rep;
}

// Action histogram: bucket 0 is Backtrack, bucket k is the k-th candidate of
// the batch the selected node came from.
struct ActionHistogram {
  std::vector<std::size_t> counts;  // size n + 1

  std::size_t total() const {
    std::size_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    j["Backtrack"] = counts.empty() ? 0 : counts[0];
    for (std::size_t k = 1; k < counts.size(); ++k) j["Candidate" + std::to_string(k)] = counts[k];
    j["total"] = total();
    return j;
  }
};

inline ActionHistogram action_histogram(const std::vector<agent::EpisodeResult>& episodes, std::size_t n_candidates) {
  ActionHistogram h;
  h.counts.assign(n_candidates + 1, 0);
  for (const auto& e : episodes) {
    for (const auto& a : e.actions) {
      if (a.action.is_backtrack()) {
        ++h.counts[0];
        continue;
      }
      std::size_t pos = a.action.index;
      if (e.tree) {
        const auto& node = e.tree->node(a.cursor);
        const auto& siblings = e.tree->node(*node.parent).children;
        pos = static_cast<std::size_t>(std::find(siblings.begin(), siblings.end(), a.cursor) - siblings.begin());
      }
      ++h.counts[1 + pos % n_candidates];
    }
  }
  return h;
}

// Attention coefficients of every layer for the tree's current state.
inline nlohmann::json attention_dump(const rtree::ReasoningTree& tree, const gnn::GatNetworkParams& actor,
                                     const agent::AgentConfig& cfg) {
  if (tree.size() == 0) throw ArgumentError("empty tree");
  const auto legal = agent::policy_actions(tree, cfg.allow_backtrack);
  const auto enc = agent::encode_state(tree, legal, cfg.slot_features);
  const auto tr = gnn::network_forward_traced(enc, actor);
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < gnn::kNumLayers; ++l) {
    nlohmann::json edges = nlohmann::json::array();
    std::vector<double> sums(enc.num_nodes(), 0.0);
    for (std::size_t e = 0; e < enc.edges.size(); ++e) {
      const auto [src, dst] = enc.edges[e];
      const double alpha = tr.layers[l].alpha[e];
      sums[dst] += alpha;
      edges.push_back({{"src", src}, {"dst", dst}, {"alpha", alpha}});
    }
    for (double s : sums)
      if (std::abs(s - 1.0) > 1e-9) throw ProtocolError("attention does not sum to 1");
    layers.push_back({{"layer", l}, {"edges", edges}});
  }
  return {{"tree", tree.to_json()}, {"layers", layers}};
}

inline void attention_export(const rtree::ReasoningTree& tree, const gnn::GatNetworkParams& actor,
                             const agent::AgentConfig& cfg, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw EnvironmentError("cannot write " + path.string());
  f << attention_dump(tree, actor, cfg).dump(2) << "\n";
}

// Report files.

inline nlohmann::json to_json(const ReasoningReport& r) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : r.pairs) {
    nlohmann::json j = {{"pair_id", p.pair_id},
                        {"steps", p.programs.size()},
                        {"final_features", p.final_features.as_array()},
                        {"programs", p.programs}};
    nlohmann::json feats = nlohmann::json::array();
    for (const auto& f : p.features) feats.push_back(f.as_array());
    j["features"] = feats;
    if (p.error) j["error"] = *p.error;
    if (p.episode) {
      j["termination"] = agent::to_string(p.episode->reason);
      j["llm_queries"] = p.episode->llm_query_count;
      nlohmann::json acts = nlohmann::json::array();
      for (const auto& a : p.episode->actions) acts.push_back(rtree::to_string(a.action));
      j["actions"] = acts;
    }
    pairs.push_back(std::move(j));
  }
  return {{"strategy", r.strategy}, {"aggregates", r.aggregates.to_json()}, {"pairs", pairs}};
}

inline nlohmann::json to_json(const DownstreamReport& r) {
  nlohmann::json v = nlohmann::json::array();
  for (const auto& p : r.verdicts)
    v.push_back({{"pair_id", p.pair_id},
                 {"label", p.label ? "equivalent" : "not equivalent"},
                 {"verdict", llm::to_string(p.verdict)},
                 {"steps", p.steps},
                 {"answer", p.answer}});
  return {{"strategy", r.strategy}, {"metrics", r.metrics.to_json()}, {"verdicts", v}};
}

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << std::fixed << v;
  return s.str();
}

inline std::string reasoning_csv(const std::vector<std::pair<std::string, ReasoningAggregates>>& rows) {
  std::string out =
      "strategy,mean_syntactic,final_syntactic,mean_functional,final_functional,final_similarity,mean_granularity,pairs,"
      "skipped\n";
  for (const auto& [name, a] : rows) {
    auto opt = [&](double v) { return a.has_mean ? fmt(v) : std::string(); };
    out += name + "," + opt(a.mean_syntactic) + "," + fmt(a.final_syntactic) + "," + opt(a.mean_functional) + "," +
           fmt(a.final_functional) + "," + fmt(a.final_similarity) + "," + opt(a.mean_granularity) + "," +
           std::to_string(a.pairs) + "," + std::to_string(a.skipped) + "\n";
  }
  return out;
}

inline std::string downstream_csv(const std::vector<std::pair<std::string, ClassificationReport>>& rows) {
  std::string out = "strategy,f1,roc_auc,precision,recall,accuracy,tp,fp,tn,fn,unparseable\n";
  for (const auto& [name, m] : rows)
    out += name + "," + fmt(m.f1) + "," + fmt(m.roc_auc) + "," + fmt(m.precision) + "," + fmt(m.recall) + "," +
           fmt(m.accuracy) + "," + std::to_string(m.tp) + "," + std::to_string(m.fp) + "," + std::to_string(m.tn) + "," +
           std::to_string(m.fn) + "," + std::to_string(m.unparseable) + "\n";
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw EnvironmentError("cannot write " + path.string());
  f << text;
}

}  // namespace eqrl::eval
