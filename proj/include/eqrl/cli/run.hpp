#pragma once

// Run configuration and the commands behind the command-line tool.

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eqrl/agent/train.hpp"
#include "eqrl/corpus.hpp"
#include "eqrl/eval/eval.hpp"
#include "eqrl/llm/client.hpp"
#include "eqrl/llm/http_client.hpp"
#include "eqrl/llm/synthetic.hpp"
#include "json.hpp"

namespace eqrl::metrics {
NLOHMANN_JSON_SERIALIZE_ENUM(RunnerMode, {{RunnerMode::Spawn, "spawn"}, {RunnerMode::Forkserver, "forkserver"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CodeBleuConfig, alpha, beta, gamma, delta, max_ngram, keyword_weight,
                                                keyword_list)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TestRunConfig, interpreter_command, per_test_timeout_ms, memory_limit,
                                                output_normalization, mode, output_cap, max_concurrent, cache, batch,
                                                program_budget_ms)
}  // namespace eqrl::metrics

namespace eqrl::llm {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SyntheticMutatorConfig, valid_per_step, corrupt_per_step,
                                                improving_per_step, seed, max_verify, cot_step_quality,
                                                tot_step_quality)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(HttpClientConfig, endpoint, model, api_key_env, timeout_s, retries,
                                                backoff_ms)
}  // namespace eqrl::llm

namespace eqrl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum class ClientKind { Live, Replay, Synthetic };
NLOHMANN_JSON_SERIALIZE_ENUM(ClientKind,
                             {{ClientKind::Live, "live"}, {ClientKind::Replay, "replay"}, {ClientKind::Synthetic, "synthetic"}})

struct RunConfig {
  std::string corpus = "tests/fixtures/corpus";
  std::string output_dir = "runs/default";
  std::size_t min_tests = 50;

  ClientKind client = ClientKind::Synthetic;
  std::string transcript;  // replay source, or record destination
  llm::HttpClientConfig http;
  llm::SyntheticMutatorConfig synthetic;
  llm::GenerationParams generation;

  std::array<double, 3> split_ratios{0.6, 0.1, 0.3};
  std::uint64_t split_seed = 0;
  std::optional<std::size_t> pairs_per_problem;  // cap on equivalent pairs per problem
  std::uint64_t pair_seed = 0;
  std::size_t eval_pairs = 50;     // 0 keeps every evaluation pair
  std::uint64_t eval_pair_seed = 5;
  std::uint64_t validation_pair_seed = 6;
  std::uint64_t mutation_seed = 0;
  std::uint64_t train_seed = 1;
  std::uint64_t eval_seed = 0;

  agent::AgentConfig agent;
  metrics::CodeBleuConfig codebleu;
  metrics::TestRunConfig exec = [] {
    metrics::TestRunConfig e;
    e.per_test_timeout_ms = 1000;
    e.program_budget_ms = 3000;
    return e;
  }();

  std::vector<std::string> strategies{"no-reasoning", "cot", "tot", "agent"};
  int repeats = 2;
  int tot_experts = 3;
  std::string checkpoint;                // Agent
  std::string checkpoint_no_backtrack;   // AgentNoBacktrack

  json to_json() const {
    json j;
    j["corpus"] = corpus;
    j["output_dir"] = output_dir;
    j["min_tests"] = min_tests;
    j["client"] = {{"kind", client},
                   {"transcript", transcript},
                   {"http", http},
                   {"synthetic", synthetic},
                   {"generation", generation.to_json()}};
    j["data"] = {{"split_ratios", split_ratios},
                 {"split_seed", split_seed},
                 {"pairs_per_problem", pairs_per_problem ? json(*pairs_per_problem) : json(nullptr)},
                 {"pair_seed", pair_seed},
                 {"eval_pairs", eval_pairs},
                 {"eval_pair_seed", eval_pair_seed},
                 {"validation_pair_seed", validation_pair_seed},
                 {"mutation_seed", mutation_seed}};
    j["seeds"] = {{"train", train_seed}, {"eval", eval_seed}};
    j["agent"] = agent.to_json();
    j["codebleu"] = codebleu;
    j["exec"] = exec;
    j["eval"] = {{"strategies", strategies},
                 {"repeats", repeats},
                 {"tot_experts", tot_experts},
                 {"checkpoint", checkpoint},
                 {"checkpoint_no_backtrack", checkpoint_no_backtrack}};
    return j;
  }

  static RunConfig from_json(const json& j) {
    RunConfig c;
    try {
      c.corpus = j.value("corpus", c.corpus);
      c.output_dir = j.value("output_dir", c.output_dir);
      c.min_tests = j.value("min_tests", c.min_tests);
      if (j.contains("client")) {
        const auto& k = j.at("client");
        c.client = k.value("kind", c.client);
        c.transcript = k.value("transcript", c.transcript);
        c.http = k.value("http", c.http);
        c.synthetic = k.value("synthetic", c.synthetic);
        if (k.contains("generation")) c.generation = llm::GenerationParams::from_json(k.at("generation"));
      }
      if (j.contains("data")) {
        const auto& d = j.at("data");
        c.split_ratios = d.value("split_ratios", c.split_ratios);
        c.split_seed = d.value("split_seed", c.split_seed);
        if (d.contains("pairs_per_problem") && !d.at("pairs_per_problem").is_null())
          c.pairs_per_problem = d.at("pairs_per_problem").get<std::size_t>();
        c.pair_seed = d.value("pair_seed", c.pair_seed);
        c.eval_pairs = d.value("eval_pairs", c.eval_pairs);
        c.eval_pair_seed = d.value("eval_pair_seed", c.eval_pair_seed);
        c.validation_pair_seed = d.value("validation_pair_seed", c.validation_pair_seed);
        c.mutation_seed = d.value("mutation_seed", c.mutation_seed);
      }
      if (j.contains("seeds")) {
        c.train_seed = j.at("seeds").value("train", c.train_seed);
        c.eval_seed = j.at("seeds").value("eval", c.eval_seed);
      }
      if (j.contains("agent")) c.agent = agent::AgentConfig::from_json(j.at("agent"));
      c.codebleu = j.value("codebleu", c.codebleu);
      c.exec = j.value("exec", c.exec);
      if (j.contains("eval")) {
        const auto& e = j.at("eval");
        c.strategies = e.value("strategies", c.strategies);
        c.repeats = e.value("repeats", c.repeats);
        c.tot_experts = e.value("tot_experts", c.tot_experts);
        c.checkpoint = e.value("checkpoint", c.checkpoint);
        c.checkpoint_no_backtrack = e.value("checkpoint_no_backtrack", c.checkpoint_no_backtrack);
      }
    } catch (const json::exception& e) {
      throw ArgumentError(std::string("bad config: ") + e.what());
    }
    c.validate();
    return c;
  }

  void validate() const {
    agent.validate();
    codebleu.validate();
    exec.validate();
    synthetic.validate();
    if (repeats < 1) throw ArgumentError("eval.repeats must be >= 1");
    if (client == ClientKind::Replay && transcript.empty()) throw ArgumentError("replay client needs client.transcript");
    for (const auto& s : strategies) eval::Strategy::parse(s);
  }
};

// Sets a dotted key in a JSON object; the value is parsed as JSON when it can be.
inline void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ArgumentError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ArgumentError("empty key in override: " + assignment);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  json j = RunConfig{}.to_json();
  if (!config_path.empty()) {
    const json file = corpus::detail::read_json(config_path);
    if (!file.is_object()) throw ArgumentError(config_path + ": config must be a JSON object");
    j.merge_patch(file);
  }
  for (const auto& o : overrides) apply_override(j, o);
  return RunConfig::from_json(j);
}

inline void write_json(const fs::path& path, const json& j) {
  eval::write_text(path, j.dump(2) + "\n");
}

inline void write_resolved_config(const RunConfig& cfg) {
  write_json(fs::path(cfg.output_dir) / "config.resolved.json", cfg.to_json());
}

// Pairs of one run.
struct Data {
  std::vector<corpus::Problem> problems;
  corpus::DatasetSplit split;
  std::vector<corpus::ProgramPair> train, validation, evaluation;
};

inline std::vector<corpus::ProgramPair> sample_pairs(const std::vector<corpus::ProgramPair>& all, std::size_t n,
                                                     std::uint64_t seed) {
  if (n == 0 || n >= all.size()) return all;
  Rng rng(seed);
  std::vector<corpus::ProgramPair> out;
  for (auto i : rng.sample_indices(all.size(), n)) out.push_back(all[i]);
  return out;
}

inline Data load_data(const RunConfig& cfg) {
  Data d;
  d.problems = corpus::load_corpus(cfg.corpus, cfg.min_tests);
  d.split = corpus::split_dataset(d.problems, cfg.split_ratios, cfg.split_seed);
  d.train = corpus::equivalent_pairs(d.split.train, cfg.pairs_per_problem, cfg.pair_seed);
  d.validation = sample_pairs(corpus::equivalent_pairs(d.split.validation, cfg.pairs_per_problem, cfg.pair_seed),
                              cfg.agent.validation_pairs, cfg.validation_pair_seed);
  d.evaluation = sample_pairs(corpus::equivalent_pairs(d.split.evaluation, cfg.pairs_per_problem, cfg.pair_seed),
                              cfg.eval_pairs, cfg.eval_pair_seed);
  return d;
}

// Owns the client stack for one run.
class ClientStack {
 public:
  // run offsets the synthetic seed so repeated runs differ.
  ClientStack(const RunConfig& cfg, const Data& data, int run = 0, bool record = false) {
    switch (cfg.client) {
      case ClientKind::Synthetic: {
        auto oracle = std::make_shared<llm::TestOracle>(cfg.exec);
        for (const auto* set : {&data.train, &data.validation, &data.evaluation})
          for (const auto& p : *set) oracle->add(p.target.source, p.tests);
        auto sc = cfg.synthetic;
        if (run > 0) sc.seed = hash_combine(sc.seed, static_cast<std::uint64_t>(run));
        base_ = std::make_unique<llm::SyntheticClient>(sc, oracle);
        break;
      }
      case ClientKind::Replay:
        base_ = std::make_unique<llm::ReplayClient>(llm::Transcript::load(cfg.transcript));
        break;
      case ClientKind::Live: base_ = std::make_unique<llm::HttpLlmClient>(cfg.http); break;
    }
    if (record) {
      if (cfg.transcript.empty()) throw ArgumentError("recording needs client.transcript");
      if (cfg.client == ClientKind::Replay) throw ArgumentError("cannot record a replay client");
      transcript_ = std::make_unique<llm::Transcript>(cfg.transcript);
      recorder_ = std::make_unique<llm::RecordingClient>(*base_, *transcript_);
    }
  }

  llm::LlmClient& client() { return recorder_ ? *recorder_ : *base_; }

 private:
  std::unique_ptr<llm::LlmClient> base_;
  std::unique_ptr<llm::Transcript> transcript_;
  std::unique_ptr<llm::RecordingClient> recorder_;
};

inline agent::EnvConfig env_config(const RunConfig& cfg) {
  agent::EnvConfig e;
  e.exec = cfg.exec;
  e.codebleu = cfg.codebleu;
  e.generation = cfg.generation;
  return e;
}

// ingest

inline json ingest(const RunConfig& cfg) {
  const auto problems = corpus::load_corpus(cfg.corpus, cfg.min_tests);
  const auto split = corpus::split_dataset(problems, cfg.split_ratios, cfg.split_seed);
  json list = json::array();
  std::size_t solutions = 0, tests = 0;
  auto add = [&](const std::vector<corpus::Problem>& ps, const char* part) {
    for (const auto& p : ps) {
      list.push_back({{"problem_id", p.problem_id},
                      {"solutions", p.solutions.size()},
                      {"tests", p.tests->size()},
                      {"equivalent_pairs", p.solutions.size() * (p.solutions.size() - 1) / 2},
                      {"split", part}});
      solutions += p.solutions.size();
      tests += p.tests->size();
    }
  };
  add(split.train, "train");
  add(split.validation, "validation");
  add(split.evaluation, "evaluation");
  std::sort(list.begin(), list.end(), [](const json& a, const json& b) { return a["problem_id"] < b["problem_id"]; });
  return {{"corpus", cfg.corpus},
          {"split_seed", cfg.split_seed},
          {"split_ratios", cfg.split_ratios},
          {"problem_count", problems.size()},
          {"solution_count", solutions},
          {"test_count", tests},
          {"split_counts",
           {{"train", split.train.size()}, {"validation", split.validation.size()}, {"evaluation", split.evaluation.size()}}},
          {"problems", list}};
}

// train / transfer

struct TrainRun {
  agent::TrainResult result;
  fs::path checkpoint;
};

inline TrainRun run_training(const RunConfig& cfg, const std::optional<std::string>& init_checkpoint, bool transfer,
                             std::optional<int> transfer_episodes = std::nullopt,
                             const std::function<void(const agent::CurveRow&)>& on_row = {}) {
  const Data data = load_data(cfg);
  ClientStack clients(cfg, data);
  agent::Environment env(clients.client(), env_config(cfg));
  agent::TrainOptions opt;
  opt.seed = cfg.train_seed;
  opt.on_row = on_row;
  agent::AgentConfig acfg = cfg.agent;
  if (init_checkpoint) {
    auto loaded = agent::load_agent(*init_checkpoint);
    opt.init = std::move(loaded.params);
    if (transfer) {
      acfg.max_episodes = transfer_episodes ? *transfer_episodes : std::max(1, acfg.max_episodes / 10);
      acfg.min_episodes = std::min(acfg.min_episodes, acfg.max_episodes);
    } else {
      opt.start_episode = loaded.metadata.value("episodes", 0);
    }
  }
  TrainRun run;
  run.result = agent::train(data.train, data.validation, env, acfg, opt);
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  run.checkpoint = out / "agent.ckpt";
  auto meta = agent::checkpoint_metadata(run.result, acfg, cfg.train_seed);
  if (init_checkpoint) meta[transfer ? "transferred_from" : "resumed_from"] = *init_checkpoint;
  agent::save_agent(run.checkpoint, run.result.params, meta);
  agent::write_curve_csv(out / "curve.csv", run.result.curve);
  write_resolved_config(cfg);
  return run;
}

// eval-reasoning / eval-downstream

inline std::string checkpoint_for(const RunConfig& cfg, const eval::Strategy& s) {
  const std::string& path = s.kind == eval::Strategy::Kind::AgentNoBacktrack ? cfg.checkpoint_no_backtrack : cfg.checkpoint;
  if (path.empty()) {
    throw ArgumentError("strategy " + s.name() + " needs " +
                        (s.kind == eval::Strategy::Kind::AgentNoBacktrack ? "eval.checkpoint_no_backtrack"
                                                                          : "eval.checkpoint"));
  }
  if (!fs::exists(path)) throw ArgumentError("checkpoint not found: " + path);
  return path;
}

inline std::vector<eval::Strategy> parse_strategies(const RunConfig& cfg) {
  std::vector<eval::Strategy> out;
  for (const auto& name : cfg.strategies) {
    auto s = eval::Strategy::parse(name);
    s.experts = cfg.tot_experts;
    out.push_back(s);
  }
  return out;
}

struct EvalOutputs {
  json reasoning;   // or downstream
  std::string csv;
};

// Runs every configured strategy R times and writes JSON and CSV reports.
inline EvalOutputs eval_reasoning(const RunConfig& cfg, bool record = false) {
  const auto strategies = parse_strategies(cfg);
  std::vector<std::optional<agent::LoadedAgent>> agents;
  for (const auto& s : strategies)
    agents.push_back(s.uses_agent() ? std::optional(agent::load_agent(checkpoint_for(cfg, s))) : std::nullopt);
  const Data data = load_data(cfg);
  std::vector<std::pair<std::string, eval::ReasoningAggregates>> rows;
  json per_strategy = json::array();
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    const auto& s = strategies[i];
    std::vector<eval::ReasoningAggregates> runs;
    json run_reports = json::array();
    std::vector<agent::EpisodeResult> episodes;
    for (int r = 0; r < cfg.repeats; ++r) {
      ClientStack clients(cfg, data, r, record);
      agent::Environment env(clients.client(), env_config(cfg));
      eval::EvalContext ctx{env, cfg.agent, agents[i] ? &agents[i]->params.actor : nullptr,
                            hash_combine(cfg.eval_seed, static_cast<std::uint64_t>(r))};
      auto rep = eval::run_reasoning(data.evaluation, s, ctx);
      runs.push_back(rep.aggregates);
      for (auto& p : rep.pairs)
        if (p.episode) episodes.push_back(*p.episode);
      run_reports.push_back(eval::to_json(rep));
    }
    const auto avg = eval::average(runs);
    rows.emplace_back(s.name(), avg);
    json entry = {{"strategy", s.name()}, {"averaged", avg.to_json()}, {"runs", run_reports}};
    if (s.uses_episodes())
      entry["action_histogram"] = eval::action_histogram(episodes, static_cast<std::size_t>(cfg.agent.n_candidates)).to_json();
    per_strategy.push_back(std::move(entry));
  }
  EvalOutputs out;
  out.reasoning = {{"repeats", cfg.repeats}, {"pairs", data.evaluation.size()}, {"strategies", per_strategy}};
  out.csv = eval::reasoning_csv(rows);
  const fs::path dir(cfg.output_dir);
  write_json(dir / "reasoning.json", out.reasoning);
  eval::write_text(dir / "reasoning.csv", out.csv);
  write_resolved_config(cfg);
  return out;
}

inline EvalOutputs eval_downstream(const RunConfig& cfg, bool record = false) {
  const auto strategies = parse_strategies(cfg);
  std::vector<std::optional<agent::LoadedAgent>> agents;
  for (const auto& s : strategies)
    agents.push_back(s.uses_agent() ? std::optional(agent::load_agent(checkpoint_for(cfg, s))) : std::nullopt);
  const Data data = load_data(cfg);
  const auto labelled = corpus::labelled_pairs(data.evaluation, cfg.mutation_seed, cfg.exec);
  std::vector<std::pair<std::string, eval::ClassificationReport>> rows;
  json per_strategy = json::array();
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    const auto& s = strategies[i];
    std::vector<eval::ClassificationReport> runs;
    json run_reports = json::array();
    for (int r = 0; r < cfg.repeats; ++r) {
      ClientStack clients(cfg, data, r, record);
      agent::Environment env(clients.client(), env_config(cfg));
      eval::EvalContext ctx{env, cfg.agent, agents[i] ? &agents[i]->params.actor : nullptr,
                            hash_combine(cfg.eval_seed, static_cast<std::uint64_t>(r))};
      auto rep = eval::run_downstream(labelled, s, ctx);
      runs.push_back(rep.metrics);
      run_reports.push_back(eval::to_json(rep));
    }
    const auto avg = eval::average(runs);
    rows.emplace_back(s.name(), avg);
    per_strategy.push_back({{"strategy", s.name()}, {"averaged", avg.to_json()}, {"runs", run_reports}});
  }
  EvalOutputs out;
  out.reasoning = {{"repeats", cfg.repeats}, {"pairs", labelled.size()}, {"strategies", per_strategy}};
  out.csv = eval::downstream_csv(rows);
  const fs::path dir(cfg.output_dir);
  write_json(dir / "downstream.json", out.reasoning);
  eval::write_text(dir / "downstream.csv", out.csv);
  write_resolved_config(cfg);
  return out;
}

// export-attention: the agent's tree at the end of one evaluation episode.
inline fs::path export_attention(const RunConfig& cfg, std::size_t pair_index) {
  const auto loaded = agent::load_agent(checkpoint_for(cfg, eval::Strategy::parse("agent")));
  const Data data = load_data(cfg);
  if (pair_index >= data.evaluation.size())
    throw ArgumentError("pair index " + std::to_string(pair_index) + " out of range (" +
                        std::to_string(data.evaluation.size()) + " evaluation pairs)");
  ClientStack clients(cfg, data);
  agent::Environment env(clients.client(), env_config(cfg));
  const auto ep = agent::step_episode(data.evaluation[pair_index], env, agent::actor_chooser(loaded.params.actor, nullptr),
                                      cfg.agent);
  const fs::path path = fs::path(cfg.output_dir) / "attention.json";
  auto dump = eval::attention_dump(*ep.tree, loaded.params.actor, cfg.agent);
  dump["pair_id"] = ep.pair_id;
  write_json(path, dump);
  write_resolved_config(cfg);
  return path;
}

}  // namespace eqrl::cli
