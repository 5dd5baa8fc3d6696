#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "eqrl/core.hpp"
#include "eqrl/metrics/codebleu.hpp"
#include "eqrl/metrics/test_runner.hpp"

namespace eqrl::metrics {

// Node features: syntax, tests, similarity to source / parent / target, and
// granularity against parent / target. Similarities are CodeBLEU / 100.
struct FeatureVector {
  static constexpr std::size_t kSize = 7;

  double nu = 0;
  double rho = 0;
  double sim_source = 0;
  double sim_parent = 0;
  double sim_target = 0;
  double gran_parent = 0;
  double gran_target = 0;

  std::array<double, kSize> as_array() const {
    return {nu, rho, sim_source, sim_parent, sim_target, gran_parent, gran_target};
  }

  static FeatureVector from_array(const std::array<double, kSize>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6]};
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline FeatureVector build_feature_vector(const ProgramAnalysis& c, const ProgramAnalysis& a,
                                          const ProgramAnalysis& a_prev, const ProgramAnalysis& b,
                                          double rho, const CodeBleuConfig& cb = {}) {
  FeatureVector f;
  f.nu = c.parses() ? 1.0 : 0.0;
  f.rho = c.parses() ? rho : 0.0;
  f.sim_source = codebleu_breakdown(c, a, cb).score / 100.0;
  f.sim_parent = codebleu_breakdown(c, a_prev, cb).score / 100.0;
  f.sim_target = codebleu_breakdown(c, b, cb).score / 100.0;
  f.gran_parent = jaccard_ast(c, a_prev);
  f.gran_target = jaccard_ast(c, b);
  return f;
}

// Tests are only run when C parses.
inline FeatureVector build_feature_vector(std::string_view c, std::string_view a,
                                          std::string_view a_prev, std::string_view b,
                                          const std::vector<TestCase>& tests,
                                          const TestRunConfig& exec = {},
                                          const CodeBleuConfig& cb = {}) {
  const ProgramAnalysis pc = analyze(c);
  const double rho = pc.parses() ? run_tests(c, tests, exec) : 0.0;
  return build_feature_vector(pc, analyze(a), analyze(a_prev), analyze(b), rho, cb);
}

}  // namespace eqrl::metrics
