#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "eqrl/corpus.hpp"
#include "../support/figures.hpp"

using namespace eqrl::corpus;
namespace fs = std::filesystem;
namespace fig = eqrl::testing;

namespace {

const fs::path kFixtureCorpus = fs::path(EQRL_SOURCE_DIR) / "tests/fixtures/corpus";

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("eqrl_corpus_" + std::to_string(::getpid()) + "_" +
                                         std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

void write_problem(const fs::path& root, const std::string& id, int n_tests, int n_solutions) {
  const auto d = root / id;
  fs::create_directories(d / "solutions");
  std::ofstream(d / "problem.json") << nlohmann::json{{"problem_id", id}, {"statement", "echo"}}.dump();
  nlohmann::json tests = nlohmann::json::array();
  for (int i = 0; i < n_tests; ++i)
    tests.push_back({{"input", std::to_string(i) + "\r\n"}, {"output", std::to_string(i) + "\n"}});
  std::ofstream(d / "tests.json") << tests.dump();
  for (int i = 0; i < n_solutions; ++i)
    std::ofstream(d / "solutions" / ("s" + std::to_string(i) + ".txt")) << "print(input())\n";
}

Problem synthetic_problem(const std::string& id, int n_solutions) {
  Problem p;
  p.problem_id = id;
  p.tests = std::make_shared<std::vector<eqrl::TestCase>>(std::vector<eqrl::TestCase>{{"1\n", "1\n"}});
  for (int i = 0; i < n_solutions; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "s%02d", i);
    p.solutions.push_back({buf, "print(" + std::to_string(i) + ")\n", id});
  }
  return p;
}

std::vector<eqrl::TestCase> queue_tests() {
  std::vector<eqrl::TestCase> t;
  for (const auto& [i, o] : fig::kQueueSamples) t.push_back({i, o});
  return t;
}

}  // namespace

TEST(LoadCorpus, FiltersByTestCount) {
  TempDir dir;
  write_problem(dir.path(), "p1", 60, 2);
  write_problem(dir.path(), "p2", 10, 3);
  write_problem(dir.path(), "p0", 50, 2);
  const auto ps = load_corpus(dir.path(), 50);
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps[0].problem_id, "p0");
  EXPECT_EQ(ps[1].problem_id, "p1");
  EXPECT_EQ(ps[0].tests->at(3).input, "3\n");
}

TEST(LoadCorpus, RequiresTwoSolutions) {
  TempDir dir;
  write_problem(dir.path(), "p1", 60, 1);
  EXPECT_TRUE(load_corpus(dir.path(), 50).empty());
}

TEST(LoadCorpus, EmptyDirectory) {
  TempDir dir;
  EXPECT_TRUE(load_corpus(dir.path(), 50).empty());
}

TEST(LoadCorpus, Errors) {
  TempDir dir;
  write_problem(dir.path(), "p1", 60, 2);
  fs::remove(dir.path() / "p1" / "tests.json");
  try {
    load_corpus(dir.path(), 50);
    FAIL() << "expected a format error";
  } catch (const eqrl::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("tests.json"), std::string::npos);
  }
  std::ofstream(dir.path() / "p1" / "tests.json") << "[{\"input\": 1";
  EXPECT_THROW(load_corpus(dir.path(), 50), eqrl::FormatError);
  EXPECT_THROW(load_corpus(dir.path() / "missing", 50), eqrl::EnvironmentError);
}

TEST(LoadCorpus, FixtureCorpus) {
  const auto ps = load_corpus(kFixtureCorpus, 50);
  ASSERT_GE(ps.size(), 40u);
  for (const auto& p : ps) {
    EXPECT_GE(p.tests->size(), 50u);
    EXPECT_EQ(p.solutions.size(), 5u);
  }
  const auto it = std::find_if(ps.begin(), ps.end(), [](const auto& p) { return p.problem_id == "266B"; });
  ASSERT_NE(it, ps.end());
  EXPECT_EQ(it->solutions[0].source, fig::kProgramA);
  EXPECT_EQ(it->solutions[1].source, fig::kProgramB);
}

TEST(Pairs, AllCombinations) {
  EXPECT_EQ(make_equivalent_pairs(synthetic_problem("x", 3)).size(), 3u);
  EXPECT_TRUE(make_equivalent_pairs(synthetic_problem("x", 1)).empty());
  auto p = synthetic_problem("x", 2);
  p.solutions[1].source = p.solutions[0].source;
  const auto pairs = make_equivalent_pairs(p);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].label, PairLabel::Equivalent);
  EXPECT_EQ(pairs[0].source.id, "s00");
  EXPECT_EQ(pairs[0].target.id, "s01");
}

TEST(Pairs, CappedSubsample) {
  const auto p = synthetic_problem("big", 49);
  const auto all = make_equivalent_pairs(p);
  ASSERT_EQ(all.size(), 1176u);
  const auto a = make_equivalent_pairs(p, 100, 5);
  const auto b = make_equivalent_pairs(p, 100, 5);
  ASSERT_EQ(a.size(), 100u);
  std::set<std::string> ids, every;
  for (const auto& x : all) every.insert(x.id);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_TRUE(every.count(a[i].id));
    ids.insert(a[i].id);
  }
  EXPECT_EQ(ids.size(), 100u);
  EXPECT_NE(make_equivalent_pairs(p, 100, 6)[0].id + make_equivalent_pairs(p, 100, 6)[50].id,
            a[0].id + a[50].id);
}

TEST(Pairs, OrderStable) {
  auto p = synthetic_problem("x", 6);
  const auto before = make_equivalent_pairs(p, 7, 3);
  std::reverse(p.solutions.begin(), p.solutions.end());
  const auto after = make_equivalent_pairs(p, 7, 3);
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i].id, after[i].id);
}

TEST(Mutation, PlusOneBecomesPlusTwo) {
  ProgramPair pair;
  pair.id = "inc";
  pair.source = {"a", "print(int(input())+1)\n", "inc"};
  pair.target = {"b", "x = int(input())\nprint(x+1)\n", "inc"};
  pair.tests = std::make_shared<std::vector<eqrl::TestCase>>(
      std::vector<eqrl::TestCase>{{"1\n", "2\n"}, {"5\n", "6\n"}});
  const auto m = mutate_nonequivalent(pair, 1);
  EXPECT_EQ(m.label, PairLabel::NonEquivalent);
  EXPECT_NE(m.target.source.find("+2"), std::string::npos);
  EXPECT_LT(eqrl::metrics::run_tests(m.target.source, *m.tests), 1.0);
  EXPECT_EQ(m.source, pair.source);
}

TEST(Mutation, NoSitesIsExhausted) {
  ProgramPair pair;
  pair.id = "echo";
  pair.source = pair.target = {"a", "print(input())\n", "echo"};
  pair.tests = std::make_shared<std::vector<eqrl::TestCase>>(std::vector<eqrl::TestCase>{{"q\n", "q\n"}});
  EXPECT_THROW(mutate_nonequivalent(pair, 1), eqrl::MutationExhausted);
}

TEST(Mutation, FigureProgramQuoteSwapFailsSamples) {
  const auto sites = mutation_sites(fig::kProgramA);
  const auto bg = std::find_if(sites.begin(), sites.end(), [](const auto& s) { return s.replacement == "'GB'"; });
  ASSERT_NE(bg, sites.end());
  const std::string mutant = apply_site(fig::kProgramA, *bg);
  EXPECT_NE(mutant.find("replace('GB','GB')"), std::string::npos);
  EXPECT_EQ(eqrl::metrics::check_syntax(mutant), 1);
  EXPECT_LT(eqrl::metrics::run_tests(mutant, queue_tests()), 1.0);

  ProgramPair pair;
  pair.id = "266B:fig";
  pair.source = {"b", fig::kProgramB, "266B"};
  pair.target = {"a", fig::kProgramA, "266B"};
  pair.tests = std::make_shared<std::vector<eqrl::TestCase>>(queue_tests());
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto m = mutate_nonequivalent(pair, seed);
    EXPECT_EQ(eqrl::metrics::check_syntax(m.target.source), 1);
    EXPECT_LT(eqrl::metrics::run_tests(m.target.source, *m.tests), 1.0);
    EXPECT_EQ(m.target.source, mutate_nonequivalent(pair, seed).target.source);
  }
}

TEST(Mutation, RejectsNonEquivalentInput) {
  ProgramPair pair;
  pair.label = PairLabel::NonEquivalent;
  pair.tests = std::make_shared<std::vector<eqrl::TestCase>>(std::vector<eqrl::TestCase>{{"", ""}});
  EXPECT_THROW(mutate_nonequivalent(pair, 0), eqrl::ArgumentError);
}

TEST(Split, SizesFollowFloorThenRemainder) {
  std::vector<Problem> ps;
  for (int i = 0; i < 20; ++i) ps.push_back(synthetic_problem("p" + std::to_string(i), 2));
  const auto s = split_dataset(ps, {0.75, 0.10, 0.15}, 1);
  EXPECT_EQ(s.train.size(), 15u);
  EXPECT_EQ(s.validation.size(), 2u);
  EXPECT_EQ(s.evaluation.size(), 3u);
  std::multiset<std::string> seen;
  for (const auto* part : {&s.train, &s.validation, &s.evaluation})
    for (const auto& p : *part) seen.insert(p.problem_id);
  EXPECT_EQ(seen.size(), 20u);
  EXPECT_EQ(std::set<std::string>(seen.begin(), seen.end()).size(), 20u);

  const auto again = split_dataset(ps, {0.75, 0.10, 0.15}, 1);
  for (std::size_t i = 0; i < s.train.size(); ++i) EXPECT_EQ(s.train[i].problem_id, again.train[i].problem_id);

  const auto odd = split_dataset(std::vector<Problem>(ps.begin(), ps.begin() + 7), {0.5, 0.25, 0.25}, 2);
  EXPECT_EQ(odd.train.size(), 4u);
  EXPECT_EQ(odd.validation.size(), 2u);
  EXPECT_EQ(odd.evaluation.size(), 1u);
}

TEST(Split, Degenerate) {
  std::vector<Problem> ps;
  for (int i = 0; i < 5; ++i) ps.push_back(synthetic_problem("p" + std::to_string(i), 2));
  EXPECT_EQ(split_dataset(ps, {1, 0, 0}, 3).train.size(), 5u);
  EXPECT_THROW(split_dataset(ps, {1.2, -0.2, 0}, 3), eqrl::ArgumentError);
  EXPECT_THROW(split_dataset(ps, {0.5, 0.2, 0.2}, 3), eqrl::ArgumentError);
}
