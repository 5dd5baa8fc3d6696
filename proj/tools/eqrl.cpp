// eqrl: corpus ingest, agent training and evaluation runs.

#include <iostream>

#include "CLI11.hpp"
#include "eqrl/cli/run.hpp"

namespace {

using namespace eqrl;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string corpus, out, client, transcript;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("-s,--set", overrides, "override a config key, e.g. agent.max_episodes=100");
    app->add_option("--corpus", corpus, "corpus directory");
    app->add_option("-o,--out", out, "output directory");
    app->add_option("--client", client, "live, replay or synthetic");
    app->add_option("--transcript", transcript, "transcript to replay or record");
    app->add_option("--seed", seed, "training seed");
  }

  cli::RunConfig resolve() const {
    auto o = overrides;
    if (!corpus.empty()) o.push_back("corpus=\"" + corpus + "\"");
    if (!out.empty()) o.push_back("output_dir=\"" + out + "\"");
    if (!client.empty()) o.push_back("client.kind=\"" + client + "\"");
    if (!transcript.empty()) o.push_back("client.transcript=\"" + transcript + "\"");
    if (seed) o.push_back("seeds.train=" + std::to_string(*seed));
    return cli::resolve_config(config, o);
  }
};

void print_aggregates(const nlohmann::json& report) {
  for (const auto& s : report["strategies"]) std::cout << s["strategy"].get<std::string>() << " " << s["averaged"].dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Program-equivalence reasoning with an RL-guided search over LLM transformations"};
  app.require_subcommand(1);

  Common ingest_opts, train_opts, transfer_opts, reason_opts, down_opts, record_opts, attn_opts;

  auto* ingest = app.add_subcommand("ingest", "validate a corpus and write its manifest");
  ingest_opts.attach(ingest);

  auto* train = app.add_subcommand("train", "train the agent");
  train_opts.attach(train);
  std::string resume;
  train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  bool no_backtrack = false;
  train->add_flag("--no-backtrack", no_backtrack, "train with backtracking disabled");

  auto* transfer = app.add_subcommand("transfer", "fine-tune a trained agent in a new environment");
  transfer_opts.attach(transfer);
  std::string from;
  std::optional<int> episodes;
  transfer->add_option("--from", from, "source checkpoint")->required()->check(CLI::ExistingFile);
  transfer->add_option("--episodes", episodes, "episode budget (default: a tenth of agent.max_episodes)");

  std::vector<std::string> strategies;
  std::string checkpoint, checkpoint_nb;
  bool ablate = false;
  auto add_eval_flags = [&](CLI::App* sub) {
    sub->add_option("--strategy", strategies, "no-reasoning, cot, tot, agent, agent-no-backtrack, greedy1..3, random");
    sub->add_option("--checkpoint", checkpoint, "agent checkpoint");
    sub->add_option("--checkpoint-no-backtrack", checkpoint_nb, "checkpoint trained without backtracking");
    sub->add_flag("--ablate-backtracking", ablate, "evaluate agent-no-backtrack in place of agent");
  };

  auto* reason = app.add_subcommand("eval-reasoning", "reasoning metrics per strategy");
  reason_opts.attach(reason);
  add_eval_flags(reason);

  auto* down = app.add_subcommand("eval-downstream", "equivalence verdicts per strategy");
  down_opts.attach(down);
  add_eval_flags(down);

  auto* record = app.add_subcommand("record-transcript", "run an evaluation and record every LLM exchange");
  record_opts.attach(record);
  add_eval_flags(record);
  bool record_downstream = false;
  record->add_flag("--downstream", record_downstream, "record the downstream evaluation instead");

  auto* attn = app.add_subcommand("export-attention", "dump attention coefficients of one agent episode");
  attn_opts.attach(attn);
  std::size_t pair_index = 0;
  attn->add_option("--checkpoint", checkpoint, "agent checkpoint");
  attn->add_option("--pair", pair_index, "evaluation pair index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  auto eval_config = [&](const Common& c) {
    auto cfg = c.resolve();
    if (!strategies.empty()) cfg.strategies = strategies;
    if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
    if (!checkpoint_nb.empty()) cfg.checkpoint_no_backtrack = checkpoint_nb;
    if (ablate)
      for (auto& s : cfg.strategies)
        if (s == "agent") s = "agent-no-backtrack";
    cfg.validate();
    return cfg;
  };

  try {
    if (*ingest) {
      const auto cfg = ingest_opts.resolve();
      const auto manifest = cli::ingest(cfg);
      cli::write_json(std::filesystem::path(cfg.output_dir) / "manifest.json", manifest);
      cli::write_resolved_config(cfg);
      std::cout << manifest["problem_count"] << " problems, " << manifest["solution_count"] << " solutions, "
                << manifest["test_count"] << " tests\n";
    } else if (*train) {
      auto cfg = train_opts.resolve();
      if (no_backtrack) cfg.agent.allow_backtrack = false;
      const auto run = cli::run_training(cfg, resume.empty() ? std::nullopt : std::optional(resume), false, std::nullopt,
                                         [](const agent::CurveRow& r) {
                                           if (r.validation)
                                             std::cerr << "episode " << r.episode << " reward " << r.mean_reward
                                                       << " validation " << *r.validation << "\n";
                                         });
      std::cout << "checkpoint " << run.checkpoint.string() << " best validation " << run.result.best_validation
                << " at episode " << run.result.best_episode << "\n";
    } else if (*transfer) {
      const auto cfg = transfer_opts.resolve();
      const auto run = cli::run_training(cfg, from, true, episodes);
      std::cout << "checkpoint " << run.checkpoint.string() << " best validation " << run.result.best_validation << "\n";
    } else if (*reason) {
      print_aggregates(cli::eval_reasoning(eval_config(reason_opts)).reasoning);
    } else if (*down) {
      print_aggregates(cli::eval_downstream(eval_config(down_opts)).reasoning);
    } else if (*record) {
      const auto cfg = eval_config(record_opts);
      const auto out = record_downstream ? cli::eval_downstream(cfg, true) : cli::eval_reasoning(cfg, true);
      print_aggregates(out.reasoning);
      std::cout << "transcript " << cfg.transcript << "\n";
    } else if (*attn) {
      auto cfg = attn_opts.resolve();
      if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
      std::cout << cli::export_attention(cfg, pair_index).string() << "\n";
    }
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
