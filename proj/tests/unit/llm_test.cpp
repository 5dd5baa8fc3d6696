#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "eqrl/corpus.hpp"
#include "eqrl/llm/client.hpp"
#include "eqrl/llm/http_client.hpp"
#include "eqrl/llm/prompts.hpp"
#include "eqrl/llm/response.hpp"
#include "eqrl/llm/synthetic.hpp"
#include "../support/figures.hpp"

using namespace eqrl;
using namespace eqrl::llm;
namespace fs = std::filesystem;
namespace fig = eqrl::testing;

namespace {

const fs::path kFixtureCorpus = fs::path(EQRL_SOURCE_DIR) / "tests/fixtures/corpus";

class FixedClient : public LlmClient {
 public:
  explicit FixedClient(std::vector<std::string> replies, int cap = 1 << 30) : replies_(std::move(replies)), cap_(cap) {}
  std::vector<std::string> complete(const std::string&, int n, const GenerationParams&) override {
    ++calls;
    std::vector<std::string> out;
    for (int i = 0; i < std::min(n, cap_); ++i) out.push_back(replies_[static_cast<std::size_t>(i) % replies_.size()]);
    return out;
  }
  std::string name() const override { return "fixed"; }
  int calls = 0;

 private:
  std::vector<std::string> replies_;
  int cap_;
};

fs::path temp_path(const std::string& stem) {
  return fs::temp_directory_path() / (stem + "_" + std::to_string(::getpid()) + ".jsonl");
}

}  // namespace

TEST(Prompts, TransformEmbedsBothProgramsFenced) {
  const auto p = render_transform_prompt(fig::kProgramA, fig::kProgramB);
  EXPECT_TRUE(p.starts_with("Given programs \n```python\n"));
  EXPECT_NE(p.find("retaining its semantics. Apply only one atomic transformation."), std::string::npos);
  EXPECT_TRUE(p.ends_with("Provide only the source code without your comments."));
  const auto blocks = fenced_blocks(p);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0], fig::kProgramA);
  EXPECT_EQ(blocks[1], fig::kProgramB);
  EXPECT_EQ(classify_prompt(p), PromptKind::Transform);
  EXPECT_THROW(render_transform_prompt("x=1", ""), ArgumentError);
}

TEST(Prompts, ByteStableAndHashed) {
  const auto p1 = render_transform_prompt("a=1\n", "b=1\n");
  const auto p2 = render_transform_prompt("a=1\n", "b=1\n");
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(prompt_hash(p1), prompt_hash(p2));
  EXPECT_EQ(prompt_hash(p1).size(), 16u);
  EXPECT_NE(prompt_hash(p1), prompt_hash(render_transform_prompt("a=2\n", "b=1\n")));
}

TEST(Prompts, BacktickRunsGetLongerFence) {
  const std::string prog = "s = '```'\nprint(s)\n";
  const auto p = render_transform_prompt(prog, "print(1)\n");
  const auto blocks = fenced_blocks(p);
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0], prog);
}

TEST(Prompts, CotAndTot) {
  const auto cot = render_cot_prompt("a=1", "b=1");
  EXPECT_TRUE(cot.ends_with("Let's think step by step."));
  EXPECT_EQ(classify_prompt(cot), PromptKind::Cot);

  const auto tot = render_tot_prompt("a=1", "b=1");
  EXPECT_TRUE(tot.starts_with("Imagine 3 different experts are answering this question.\n"));
  EXPECT_NE(tot.find("If any expert realizes they're wrong at any point, then they leave.\nThe question is "),
            std::string::npos);
  EXPECT_EQ(classify_prompt(tot), PromptKind::Tot);
  EXPECT_TRUE(render_tot_prompt("a", "b", 1).starts_with("Imagine 1 different experts"));
  EXPECT_THROW(render_tot_prompt("a", "b", 0), ArgumentError);
}

TEST(Prompts, DownstreamListsSteps) {
  const auto plain = render_downstream_prompt("a=1", "b=1", {});
  EXPECT_EQ(classify_prompt(plain), PromptKind::DownstreamPlain);
  EXPECT_EQ(fenced_blocks(plain).size(), 2u);
  const auto with = render_downstream_prompt("a=1", "b=1", {"c=1", "b=1"});
  EXPECT_EQ(classify_prompt(with), PromptKind::DownstreamAgent);
  const auto blocks = fenced_blocks(with);
  ASSERT_EQ(blocks.size(), 4u);
  EXPECT_EQ(blocks[2], "c=1\n");
  EXPECT_NE(with.find("Step 2:"), std::string::npos);
}

TEST(Response, ParseCode) {
  EXPECT_EQ(parse_code_response("Sure:\n```python\nx = 1\nprint(x)\n```\nDone."), "x = 1\nprint(x)");
  EXPECT_EQ(parse_code_response("```\nprint(1)\n```\n```python\nprint(2)\n```"), "print(1)");
  EXPECT_EQ(parse_code_response("```python\nprint(1)\n"), "print(1)");
  EXPECT_EQ(parse_code_response("print(1)\n"), "print(1)");
  EXPECT_EQ(parse_code_response("Here is the program:\nx = 1\nprint(x)\n"), "x = 1\nprint(x)");
  EXPECT_EQ(parse_code_response("no code here at all ("), "no code here at all (");
  EXPECT_EQ(parse_code_response(""), "");
  EXPECT_EQ(parse_code_response("```python\r\nprint(1)\r\n```"), "print(1)");
}

TEST(Response, Verdicts) {
  EXPECT_EQ(extract_verdict("They are equivalent."), Verdict::Equivalent);
  EXPECT_EQ(extract_verdict("They are NOT   equivalent."), Verdict::NotEquivalent);
  EXPECT_EQ(extract_verdict("not\nequivalent"), Verdict::NotEquivalent);
  EXPECT_EQ(extract_verdict("I cannot tell."), Verdict::Unparseable);
  EXPECT_STREQ(to_string(Verdict::NotEquivalent), "not equivalent");
}

TEST(Transcript, RecordThenReplay) {
  const auto path = temp_path("eqrl_transcript");
  fs::remove(path);
  {
    FixedClient inner({"```python\nprint(1)\n```", "```python\nprint(2)\n```"});
    Transcript t(path);
    RecordingClient rec(inner, t);
    const auto c = request_candidates(rec, "print(0)\n", "print(2)\n", 2);
    EXPECT_EQ(c, (std::vector<std::string>{"print(1)", "print(2)"}));
    EXPECT_EQ(t.records().size(), 1u);
  }
  const auto loaded = Transcript::load(path);
  ASSERT_EQ(loaded.records().size(), 1u);
  const auto& r = loaded.records()[0];
  EXPECT_EQ(r.prompt_hash, prompt_hash(render_transform_prompt("print(0)\n", "print(2)\n")));
  EXPECT_EQ(r.num_samples, 2);
  EXPECT_FALSE(r.timestamp.empty());

  ReplayClient replay(loaded);
  EXPECT_EQ(request_candidates(replay, "print(0)\n", "print(2)\n", 2),
            (std::vector<std::string>{"print(1)", "print(2)"}));
  // repeated requests reuse the last record
  EXPECT_EQ(request_candidates(replay, "print(0)\n", "print(2)\n", 2).size(), 2u);
  EXPECT_THROW(request_candidates(replay, "print(9)\n", "print(2)\n", 2), ReplayMiss);
  EXPECT_THROW(request_candidates(replay, "print(0)\n", "print(2)\n", 3), ReplayMiss);
  GenerationParams hot;
  hot.temperature = 0.5;
  EXPECT_THROW(request_candidates(replay, "print(0)\n", "print(2)\n", 2, hot), ReplayMiss);
  fs::remove(path);
}

TEST(Transcript, ReplayServesRecordsInOrder) {
  Transcript t;
  const std::string p = "prompt";
  t.append({prompt_hash(p), p, {}, 1, {"first"}, ""});
  t.append({prompt_hash(p), p, {}, 1, {"second"}, ""});
  ReplayClient replay(t);
  EXPECT_EQ(replay.complete(p, 1, {})[0], "first");
  EXPECT_EQ(replay.complete(p, 1, {})[0], "second");
  EXPECT_EQ(replay.complete(p, 1, {})[0], "second");
}

TEST(Transcript, MalformedLineReportsLocation) {
  const auto path = temp_path("eqrl_bad_transcript");
  std::ofstream(path) << "{\"prompt\":\"p\",\"responses\":[\"x\"]}\n{oops\n";
  try {
    Transcript::load(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  fs::remove(path);
  EXPECT_THROW(Transcript::load(path), EnvironmentError);
}

TEST(Candidates, ShortBatchIsToppedUpThenPadded) {
  FixedClient two({"print(1)"}, 2);
  const auto c = request_candidates(two, "print(0)\n", "print(1)\n", 3);
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(two.calls, 2);
  EXPECT_EQ(c[2], "print(1)");

  FixedClient none({"x"}, 0);
  const auto e = request_candidates(none, "print(0)\n", "print(1)\n", 2);
  EXPECT_EQ(e, (std::vector<std::string>{"", ""}));
  EXPECT_THROW(request_candidates(none, "a", "b", 0), ArgumentError);
}

TEST(Http, ParseUrl) {
  const auto u = parse_url("http://127.0.0.1:8080/v1/chat/completions");
  EXPECT_EQ(u.origin, "http://127.0.0.1:8080");
  EXPECT_EQ(u.path, "/v1/chat/completions");
  EXPECT_EQ(parse_url("https://example.com").path, "/");
  EXPECT_THROW(parse_url("ftp://x/y"), ArgumentError);
}

TEST(Http, ChatCompletionsAgainstLocalServer) {
  httplib::Server server;
  std::atomic<int> hits{0}, failures_left{1};
  nlohmann::json last_body;
  std::mutex mu;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    if (failures_left-- > 0) {
      res.status = 503;
      return;
    }
    const auto body = nlohmann::json::parse(req.body);
    {
      std::lock_guard lock(mu);
      last_body = body;
    }
    const int n = body.at("n").get<int>();
    nlohmann::json choices = nlohmann::json::array();
    for (int i = 0; i < std::min(n, 2); ++i)
      choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", "reply" + std::to_string(i)}}}});
    res.set_content(nlohmann::json{{"choices", choices}}.dump(), "application/json");
  });
  server.Post("/denied", [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpClientConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.model = "test-model";
  cfg.backoff_ms = 1;
  cfg.timeout_s = 5;
  HttpLlmClient client(cfg);
  GenerationParams params;
  const auto out = client.complete("hello", 3, params);
  EXPECT_EQ(out, (std::vector<std::string>{"reply0", "reply1", "reply0"}));
  EXPECT_EQ(hits.load(), 3);  // 503, n=3 (2 choices), n=1
  {
    std::lock_guard lock(mu);
    EXPECT_EQ(last_body.at("model"), "test-model");
    EXPECT_EQ(last_body.at("messages")[0].at("content"), "hello");
    EXPECT_DOUBLE_EQ(last_body.at("top_p").get<double>(), 0.9);
    EXPECT_EQ(last_body.at("max_tokens"), 1024);
  }

  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/denied";
  HttpLlmClient denied(cfg);
  EXPECT_THROW(denied.complete("hello", 1, params), TransportError);

  server.stop();
  th.join();

  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.timeout_s = 1;
  HttpLlmClient gone(cfg);
  EXPECT_THROW(gone.complete("hello", 1, params), TransportError);
}

class SyntheticTest : public ::testing::Test {
 protected:
  void SetUp() override {
    problem_ = corpus::detail::load_problem(kFixtureCorpus / "266B");
    metrics::TestRunConfig exec;
    exec.per_test_timeout_ms = 1000;
    exec.program_budget_ms = 5000;
    oracle_ = std::make_shared<TestOracle>(exec);
    oracle_->add(fig::kProgramB, problem_.tests);
  }

  corpus::Problem problem_;
  std::shared_ptr<TestOracle> oracle_;
};

TEST_F(SyntheticTest, StepIsDeterministicAndSized) {
  SyntheticClient client({}, oracle_);
  const auto prompt = render_transform_prompt(fig::kProgramA, fig::kProgramB);
  const auto r1 = client.complete(prompt, 10, {});
  const auto r2 = client.complete(prompt, 10, {});
  EXPECT_EQ(r1, r2);
  ASSERT_EQ(r1.size(), 10u);
  SyntheticMutatorConfig other;
  other.seed = 7;
  SyntheticClient client2(other, oracle_);
  EXPECT_NE(client2.complete(prompt, 10, {}), r1);
  EXPECT_EQ(client.complete(prompt, 2, {}).size(), 2u);
}

TEST_F(SyntheticTest, CandidateMix) {
  SyntheticClient client({}, oracle_);
  const auto cands = request_candidates(client, fig::kProgramA, fig::kProgramB, 10);
  const double base = metrics::codebleu(fig::kProgramA, fig::kProgramB);
  int valid = 0, improving = 0, corrupt = 0;
  for (const auto& c : cands) {
    const bool parses = metrics::check_syntax(c) == 1;
    const double rho = parses ? oracle_->rho(c, *problem_.tests) : 0.0;
    if (rho == 1.0) {
      ++valid;
      if (metrics::codebleu(c, fig::kProgramB) > base) ++improving;
    } else {
      ++corrupt;
    }
  }
  EXPECT_EQ(valid, 3);
  EXPECT_EQ(corrupt, 7);
  EXPECT_GE(improving, 1);
}

TEST_F(SyntheticTest, ImprovingOptionsWalkToTarget) {
  SyntheticMutator m({}, oracle_);
  std::string cur = fig::kProgramA;
  for (int step = 0; step < 15 && metrics::codebleu(cur, fig::kProgramB) < 100.0 - 1e-9; ++step) {
    const auto opts = m.improving_options(cur, fig::kProgramB);
    ASSERT_FALSE(opts.empty());
    const double before = metrics::codebleu(cur, fig::kProgramB);
    EXPECT_GT(metrics::codebleu(opts.front(), fig::kProgramB), before);
    cur = opts.front();
  }
  EXPECT_NEAR(metrics::codebleu(cur, fig::kProgramB), 100.0, 1e-9);
}

TEST_F(SyntheticTest, RenameRespectsAttributesAndKeywords) {
  const std::string src = "a = input()\nb = a.split()\nprint(a, sep=' ')\n";
  const auto info = synth::name_info(src);
  EXPECT_EQ(info.assigned, (std::vector<std::string>{"a", "b"}));
  const auto r = synth::rename("x = [1]\nx.x = 2\n", "x", "y", synth::name_info("x = [1]\nx.x = 2\n"));
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(*r, "y = [1]\ny.x = 2\n");
  EXPECT_FALSE(synth::rename(src, "a", "sep", info).has_value());
  EXPECT_FALSE(synth::rename(src, "a", "b", info).has_value());
  EXPECT_FALSE(synth::rename(src, "a", "for", info).has_value());
  EXPECT_FALSE(synth::rename("a = 1\nprint(f'{a}')\n", "a", "z", synth::name_info("a = 1\nprint(f'{a}')\n")));
}

TEST_F(SyntheticTest, IdenticalProgramsYieldTarget) {
  SyntheticMutator m({}, oracle_);
  Rng rng(1);
  const auto out = m.step(fig::kProgramB, fig::kProgramB, 10, rng);
  EXPECT_EQ(std::count(out.begin(), out.end(), fig::kProgramB), 1);
}

TEST_F(SyntheticTest, CorruptCandidatesBreakSomething) {
  SyntheticMutator m({}, oracle_);
  Rng rng(3);
  for (int k = 0; k < 5; ++k) {
    EXPECT_EQ(metrics::check_syntax(m.syntax_break(fig::kProgramA, rng)), 0);
    const auto s = m.semantic_break(fig::kProgramA, rng, problem_.tests);
    EXPECT_TRUE(metrics::check_syntax(s) == 0 || oracle_->rho(s, *problem_.tests) < 1.0);
  }
  EXPECT_EQ(metrics::check_syntax(m.syntax_break("", rng)), 0);
}

TEST_F(SyntheticTest, ReasoningAndVerdictAnswers) {
  SyntheticClient client({}, oracle_);
  const auto cot = client.complete(render_cot_prompt(fig::kProgramA, fig::kProgramB), 2, {});
  ASSERT_EQ(cot.size(), 2u);
  for (const auto& r : cot) {
    EXPECT_GE(fenced_blocks(r).size(), 1u);
    EXPECT_NE(extract_verdict(r), Verdict::Unparseable);
  }
  const auto tot = client.complete(render_tot_prompt(fig::kProgramA, fig::kProgramB), 1, {});
  EXPECT_NE(tot[0].find("Expert 1"), std::string::npos);

  // identical programs shown as the last step: always "equivalent"
  const auto down = client.complete(render_downstream_prompt(fig::kProgramA, fig::kProgramB, {fig::kProgramB}), 5, {});
  for (const auto& r : down) EXPECT_EQ(extract_verdict(r), Verdict::Equivalent);
  EXPECT_THROW(client.complete("no programs here", 1, {}), ArgumentError);
}

TEST(SyntheticConfig, Validation) {
  SyntheticMutatorConfig c;
  c.improving_per_step = 4;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = {};
  c.valid_per_step = 0;
  c.corrupt_per_step = 0;
  c.improving_per_step = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
}
