#pragma once

// The clipped policy-gradient objective family over rollout groups: GRPO,
// the four REINFORCE-regularized variants (plain / tempered-sampled /
// rho-weighted / inverse-rho-weighted), the fused double-importance-sampling
// objective, its two ablations, and the entropy-bonus baseline. All return
// ascent gradients; importance weights rho are constants w.r.t. theta.

#include <span>
#include <string>
#include <vector>

#include "dcpo/policy.hpp"
#include "dcpo/rollout.hpp"

namespace dcpo {

enum class ObjectiveKind {
  Grpo,
  J1,  // + alpha * REINFORCE term, sampled and evaluated at T = 1
  J2,  // + alpha * REINFORCE term, sampled and evaluated at schedule T
  J3,  // + alpha * rho-weighted REINFORCE term, sampled at T = 1
  J4,  // + alpha * inverse-rho REINFORCE term, sampled at schedule T
  Dcpo,              // fused coefficient A + alpha * rho * R
  DcpoNoDoubleIs,    // fused coefficient A + alpha * R
  DcpoNoReinforce,   // fused coefficient (1 + alpha * rho) * A
  GrpoEntropyReg,    // GRPO + lambda * entropy bonus
};

enum class AlphaMode { Fixed, Adaptive };

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::Grpo;
  AlphaMode alpha_mode = AlphaMode::Fixed;
  double alpha = 0.1;
  double epsilon = 0.2;     // symmetric clip half-width
  double t_high = 1.2;
  double t_low = 0.8;
  double h0 = 0.25;         // target entropy for the temperature indicator
  double lambda = 0.015;    // entropy-bonus weight (GrpoEntropyReg only)

  void validate() const;
};

ObjectiveKind objective_kind_from_string(const std::string& name);
std::string to_string(ObjectiveKind kind);

/// T = T_low + (T_high - T_low) * 1[H(pi_old) < H0]; strict inequality.
double schedule_temperature(double current_entropy, const ObjectiveSpec& spec);

struct AdaptiveAlpha {
  double value = 0.0;
  bool inert = false;  // set when batch accuracy is zero
};

/// alpha = 0.1 * (H0 - H(pi_old)) / batch accuracy; may be negative. A zero
/// accuracy yields alpha = 0 flagged inert (the regularizer is annihilated by
/// R = 0 in that regime anyway).
AdaptiveAlpha adaptive_alpha(double current_entropy, double h0,
                             double batch_accuracy);

struct GradientEstimate {
  std::vector<double> grad;
  double scalar_objective = 0.0;
  double clip_fraction = 0.0;
  double mean_rho = 1.0;
  double max_rho = 1.0;
  long token_count = 0;
};

enum class RhoWeighting { None, Rho, RhoInverse };
enum class SampledAt { Base, Tempered };

/// Clipped group-relative surrogate; gradient flows through r only, tokens on
/// the active clip branch contribute zero gradient. Tokens are averaged
/// 1/|o| within a trajectory, 1/G within a group, and across groups.
GradientEstimate grpo_gradient(const Policy& params,
                               std::span<const RolloutGroup> groups,
                               const ObjectiveSpec& spec);

/// The REINFORCE regularizer with R(q,o) in place of the advantage and the
/// rho (or rho^-1) factor multiplying both clip branches. Valid pairs are
/// (None, Base), (None, Tempered), (Rho, Base), (RhoInverse, Tempered);
/// the group's sampling temperature must match `sampled_at`.
GradientEstimate reinforce_term_gradient(const Policy& params,
                                         std::span<const RolloutGroup> groups,
                                         const ObjectiveSpec& spec,
                                         RhoWeighting weighting,
                                         SampledAt sampled_at);

/// Fused surrogate with per-token coefficient A_i + alpha * rho_t * R_i;
/// branch selection follows the fused coefficient's sign.
GradientEstimate dcpo_gradient(const Policy& params,
                               std::span<const RolloutGroup> groups,
                               const ObjectiveSpec& spec, double alpha);

/// Coefficient A_i + alpha * R_i (drops the target-distribution weight).
GradientEstimate dcpo_no_double_is_gradient(const Policy& params,
                                            std::span<const RolloutGroup> groups,
                                            const ObjectiveSpec& spec,
                                            double alpha);

/// Coefficient (1 + alpha * rho_t) * A_i (drops the REINFORCE term).
GradientEstimate dcpo_no_reinforce_gradient(const Policy& params,
                                            std::span<const RolloutGroup> groups,
                                            const ObjectiveSpec& spec,
                                            double alpha);

/// GRPO plus lambda times the analytic entropy gradient at visited contexts,
/// averaged with the GRPO token weighting.
GradientEstimate entropy_reg_gradient(const Policy& params,
                                      std::span<const RolloutGroup> groups,
                                      const ObjectiveSpec& spec);

/// Full-objective dispatch used by the trainer. `main_groups` are sampled at
/// T = 1 and feed the group-relative term; `reg_groups` feed the REINFORCE
/// regularizer (may alias main_groups for the on-policy variants).
GradientEstimate objective_gradient(const Policy& params,
                                    std::span<const RolloutGroup> main_groups,
                                    std::span<const RolloutGroup> reg_groups,
                                    const ObjectiveSpec& spec,
                                    double alpha_in_effect);

}  // namespace dcpo
