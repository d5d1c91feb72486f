#include <doctest.h>

#include <cmath>
#include <iostream>
#include <numeric>
#include <vector>

#include "dcpo/oracle.hpp"
#include "dcpo/rng.hpp"
#include "dcpo/task.hpp"
#include "dcpo/verify.hpp"

using namespace dcpo;

namespace {

Policy randomized(const Task& t, std::uint64_t seed, double stddev = 0.6) {
  Policy p = t.make_policy();
  p.randomize(seed, stddev);
  return p;
}

double prob_sum(const std::vector<double>& probs) {
  return std::accumulate(probs.begin(), probs.end(), 0.0);
}

}  // namespace

TEST_CASE("enumeration probabilities are normalized at every temperature") {
  for (const Task& t : builtin_tasks()) {
    Policy p = randomized(t, 3);
    for (int q : t.queries()) {
      EnumerationResult en = enumerate_sequences(p, t, q, 1.3);
      CHECK(prob_sum(en.probs_base) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(prob_sum(en.probs_tempered) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(en.sequences.size() == en.rewards.size());
    }
  }
}

TEST_CASE("enumeration refuses to overflow the sequence-space budget") {
  Task big("big", Vocab{6, 5}, 9, {0}, {{{5}}});
  Policy p = Policy::tabular(big.vocab(), big.queries(), big.horizon());
  CHECK_THROWS(enumerate_sequences(p, big, 0, 1.0));
  // A generous budget admits the same space.
  CHECK_NOTHROW(enumerate_sequences(p, big, 0, 1.0, 1u << 26));
}

TEST_CASE("uniform-policy expected rewards have closed forms") {
  Task needle = find_task("needle");
  Policy uni = Policy::tabular(needle.vocab(), needle.queries(), needle.horizon());
  CHECK(exact_expected_reward(uni, needle) ==
        doctest::Approx(1.0 / 64.0).epsilon(1e-12));
  // Tempering a uniform policy leaves it uniform.
  CHECK(exact_expected_reward(uni, needle, 1.7) ==
        doctest::Approx(1.0 / 64.0).epsilon(1e-12));
}

TEST_CASE("finite differences recover an analytic gradient") {
  auto f = [](const std::vector<double>& x) {
    return x[0] * x[0] - 3.0 * x[0] * x[1] + std::sin(x[2]);
  };
  std::vector<double> at{0.7, -1.2, 0.4};
  std::vector<double> g = finite_diff_gradient(f, at, 1e-5);
  CHECK(g[0] == doctest::Approx(2 * 0.7 - 3 * -1.2).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(-3 * 0.7).epsilon(1e-8));
  CHECK(g[2] == doctest::Approx(std::cos(0.4)).epsilon(1e-8));
}

TEST_CASE("estimator expectation matches a brute-force group enumeration") {
  // One-token task: every G-tuple of outcomes is enumerable directly, which
  // exercises the binomial advantage expectation through an independent route.
  Task t("onetoken", Vocab{4, 3}, 1, {0}, {{{3}}});
  Policy p = randomized(t, 6, 0.8);
  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::Grpo;
  const int G = 3;
  std::vector<double> exact =
      exact_estimator_gradient(p, t, spec, 1.0, G, 0.0);

  EnumerationResult en = enumerate_sequences(p, t, 0, 1.0);
  const int n = static_cast<int>(en.sequences.size());
  std::vector<double> brute(p.param_count(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const double pw =
            en.probs_base[i] * en.probs_base[j] * en.probs_base[k];
        const int idx[3] = {i, j, k};
        double mean = 0.0;
        for (int m = 0; m < 3; ++m) mean += en.rewards[idx[m]] / 3.0;
        double var = 0.0;
        for (int m = 0; m < 3; ++m) {
          const double d = en.rewards[idx[m]] - mean;
          var += d * d / 3.0;
        }
        const double sd = std::sqrt(var);
        for (int m = 0; m < 3; ++m) {
          if (sd == 0.0) continue;
          const double adv = (en.rewards[idx[m]] - mean) / sd;
          Context ctx{0, {}};
          p.add_grad_log_prob(ctx, en.sequences[idx[m]][0], 1.0,
                              pw * adv / 3.0, brute);
        }
      }
  for (int c = 0; c < p.param_count(); ++c)
    CHECK(exact[c] == doctest::Approx(brute[c]).epsilon(1e-10));
}

TEST_CASE("regularizer oracle routes agree on a horizon-one task") {
  // With one generated token the per-token and sequence-level importance
  // weights coincide, so the rho-weighted estimator must equal the
  // direct tempered expectation exactly.
  Task t("onetoken", Vocab{5, 4}, 1, {0}, {{{4}}});
  Policy p = randomized(t, 9, 0.7);
  std::vector<double> j3 = exact_regularizer_gradient(p, t, 1.4, RegVariant::J3);
  std::vector<double> j2 = exact_regularizer_gradient(p, t, 1.4, RegVariant::J2);
  for (std::size_t i = 0; i < j3.size(); ++i)
    CHECK(j3[i] == doctest::Approx(j2[i]).epsilon(1e-12));
}

TEST_CASE("direction test separates flattening from sharpening") {
  Task t = make_multipath(5, 3, 2);
  DirectionResult hi = entropy_direction_test(t, 20, 1.5, 0.05, 31, 0.5);
  DirectionResult lo = entropy_direction_test(t, 20, 0.7, 0.05, 31, 0.5);
  CHECK(hi.fraction_increasing >= 0.9);
  CHECK(lo.fraction_increasing <= 0.1);
  CHECK(hi.increased + hi.decreased + hi.excluded == hi.total);
}

TEST_CASE("monte-carlo gradients agree with the estimator expectation") {
  Task t = find_task("needle");
  Policy p = randomized(t, 12, 0.5);
  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::Dcpo;
  McReport rep = mc_vs_exact(p, t, spec, 1.2, 4, 0.1, 4000, 51);
  CHECK(rep.coords > 0);
  CHECK(rep.violations == 0);
  CHECK(rep.within_5sigma == rep.coords);
}

TEST_CASE("monte-carlo comparison detects a genuinely biased oracle") {
  // Detection power: comparing samples drawn under one alpha against the
  // exact expectation of another must flag violations.
  Task t("onetoken", Vocab{4, 3}, 1, {0}, {{{3}}});
  Policy p = randomized(t, 14, 0.5);
  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::Dcpo;
  std::vector<double> right = exact_estimator_gradient(p, t, spec, 1.2, 4, 0.1);
  std::vector<double> wrong = exact_estimator_gradient(p, t, spec, 1.2, 4, 0.9);
  bool differs = false;
  for (std::size_t i = 0; i < right.size(); ++i)
    if (std::abs(right[i] - wrong[i]) > 1e-3) differs = true;
  REQUIRE(differs);  // the two alphas are distinguishable in expectation

  McReport ok = mc_vs_exact(p, t, spec, 1.2, 4, 0.1, 4000, 77);
  CHECK(ok.violations == 0);
  // Same draws, wrong expectation: the z-test must reject.
  McReport biased = mc_vs_exact(p, t, spec, 1.2, 4, 0.1, 4000, 77, 20, &wrong);
  CHECK(biased.violations > 0);
}

TEST_CASE("verification suites pass at reduced budgets") {
  CHECK(report_checks(std::cout, verify_gradients(1, 12)) == true);
  CHECK(report_checks(std::cout, verify_identities(1)) == true);
}
