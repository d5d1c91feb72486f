#pragma once

// Independent ground-truth machinery: exhaustive trajectory enumeration,
// exact expectations under the base and temperature-scaled policies,
// finite-difference gradients, and the statistical direction test for the
// temperature/entropy relationship.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dcpo/objectives.hpp"
#include "dcpo/policy.hpp"
#include "dcpo/rollout.hpp"
#include "dcpo/task.hpp"

namespace dcpo {

struct EnumerationResult {
  std::vector<std::vector<int>> sequences;  // every terminating sequence
  std::vector<double> probs_base;           // exact probability under pi
  std::vector<double> probs_tempered;       // exact probability under pi^T
  std::vector<int> rewards;
};

/// Exact sequence probabilities by the chain rule; sequences terminate at eos
/// or are cut at the horizon. Throws (never truncates) when the sequence
/// space exceeds `max_space`.
EnumerationResult enumerate_sequences(const Policy& params, const Task& task,
                                      int query_id, double temperature,
                                      std::size_t max_space = 1000000);

/// Mean per-token entropy along the policy's own trajectories, averaged over
/// queries: E_q E_{o~pi} (1/|o|) sum_t H_t.
double exact_policy_entropy(const Policy& params, const Task& task);

/// Exact success probability, responses drawn at `temperature`.
double exact_expected_reward(const Policy& params, const Task& task,
                             double temperature = 1.0);

enum class RegVariant { J1, J2, J3, J4, DcpoTerm };

/// Distribution-level expected gradient of the REINFORCE regularizer at
/// theta = theta_old (clipping inactive, every r = 1).
///
/// J1/J2 integrate R(o) (1/|o|) sum_t grad log pi(o_t) against the base /
/// tempered sequence distribution directly. J3/J4 integrate against their own
/// sampling distribution reweighted by the sequence-level product of the
/// per-token rho factors, i.e. the expectation the per-token weights estimate.
/// The two routes to each value are computed independently, which is what the
/// equality checks exercise. DcpoTerm is the token-level expectation of the
/// fused objective's regularizer component (its defining form).
std::vector<double> exact_regularizer_gradient(const Policy& params,
                                               const Task& task,
                                               double temperature,
                                               RegVariant variant);

/// Exact per-coordinate expectation of the *sampled* estimator for a full
/// objective at theta = theta_old: token-level rho weighting as implemented,
/// and the group-relative advantage integrated over the binomial law of the
/// other G-1 rewards. This is the quantity Monte-Carlo runs converge to.
std::vector<double> exact_estimator_gradient(const Policy& params,
                                             const Task& task,
                                             const ObjectiveSpec& spec,
                                             double temperature, int group_size,
                                             double alpha);

/// Central finite differences of a pure scalar function of the parameters.
std::vector<double> finite_diff_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& params, double step);

struct DirectionResult {
  int increased = 0;   // entropy rose relative to the T = 1 step
  int decreased = 0;
  int excluded = 0;    // degenerate reward structure
  int total = 0;
  double fraction_increasing = 0.0;
};

/// For each of `n_policies` random tabular policies, takes one exact expected
/// REINFORCE step at `temperature` and one at T = 1 (step size lr) and counts
/// how often the tempered step leaves strictly higher exact policy entropy.
DirectionResult entropy_direction_test(const Task& task, int n_policies,
                                       double temperature, double lr,
                                       std::uint64_t seed,
                                       double logit_stddev = 1.0);

struct McReport {
  std::size_t coords = 0;
  std::size_t within_3sigma = 0;
  std::size_t within_5sigma = 0;
  // Coordinates outside 3 sigma whose absolute deviation also exceeds
  // `deviation_floor`. Coordinates touched by only a handful of rare
  // rewarded rollouts have t-tailed studentized means (the sample SEM is
  // unreliable at low hit counts), so |z| > 3 alone is not evidence of bias
  // unless the deviation is also materially large.
  std::size_t violations = 0;
  double deviation_floor = 0.0;
  double max_abs_z = 0.0;
  double max_abs_deviation = 0.0;
};

/// Monte-Carlo mean of the sampled objective gradient over `samples` rollout
/// batches versus the exact estimator expectation; per-coordinate z-scores.
/// Standard errors come from batch means (`batch_size` draws per
/// observation) so rare high-advantage events do not distort the z-scores'
/// normal reference. `reference` overrides the exact expectation, which lets
/// detection-power tests feed a deliberately wrong target.
McReport mc_vs_exact(const Policy& params, const Task& task,
                     const ObjectiveSpec& spec, double temperature,
                     int group_size, double alpha, int samples,
                     std::uint64_t seed, int batch_size = 20,
                     const std::vector<double>* reference = nullptr);

}  // namespace dcpo
