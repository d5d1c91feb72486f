#include "dcpo/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dcpo {

void ObjectiveSpec::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("clip epsilon must lie in (0, 1)");
  if (!(t_low > 0.0) || !(t_high > 0.0) || t_low > t_high)
    throw std::invalid_argument("temperatures must satisfy 0 < T_low <= T_high");
  if (!std::isfinite(alpha)) throw std::invalid_argument("alpha must be finite");
  if (h0 < 0.0) throw std::invalid_argument("target entropy H0 must be >= 0");
}

ObjectiveKind objective_kind_from_string(const std::string& name) {
  if (name == "grpo") return ObjectiveKind::Grpo;
  if (name == "j1") return ObjectiveKind::J1;
  if (name == "j2") return ObjectiveKind::J2;
  if (name == "j3") return ObjectiveKind::J3;
  if (name == "j4") return ObjectiveKind::J4;
  if (name == "dcpo") return ObjectiveKind::Dcpo;
  if (name == "dcpo_no_double_is") return ObjectiveKind::DcpoNoDoubleIs;
  if (name == "dcpo_no_reinforce") return ObjectiveKind::DcpoNoReinforce;
  if (name == "grpo_entropy_reg") return ObjectiveKind::GrpoEntropyReg;
  throw std::invalid_argument("unknown objective kind: " + name);
}

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::Grpo: return "grpo";
    case ObjectiveKind::J1: return "j1";
    case ObjectiveKind::J2: return "j2";
    case ObjectiveKind::J3: return "j3";
    case ObjectiveKind::J4: return "j4";
    case ObjectiveKind::Dcpo: return "dcpo";
    case ObjectiveKind::DcpoNoDoubleIs: return "dcpo_no_double_is";
    case ObjectiveKind::DcpoNoReinforce: return "dcpo_no_reinforce";
    case ObjectiveKind::GrpoEntropyReg: return "grpo_entropy_reg";
  }
  throw std::logic_error("unreachable");
}

double schedule_temperature(double current_entropy, const ObjectiveSpec& spec) {
  return current_entropy < spec.h0 ? spec.t_high : spec.t_low;
}

AdaptiveAlpha adaptive_alpha(double current_entropy, double h0,
                             double batch_accuracy) {
  if (batch_accuracy < 0.0 || batch_accuracy > 1.0)
    throw std::invalid_argument("batch accuracy must lie in [0, 1]");
  if (batch_accuracy == 0.0) return {0.0, true};
  return {0.1 * (h0 - current_entropy) / batch_accuracy, false};
}

namespace {

// Shared clipped-surrogate kernel. `coeff` is the per-token min/clip
// coefficient and `branch_weight` the positive factor multiplying both
// branches (1, rho, or rho^-1). Both are stop-gradients.
struct TokenTerm {
  double coeff;
  double branch_weight;
};

template <typename TermFn>
GradientEstimate clipped_surrogate(const Policy& params,
                                   std::span<const RolloutGroup> groups,
                                   double epsilon, bool need_advantages,
                                   TermFn&& term) {
  if (groups.empty()) throw std::invalid_argument("empty group batch");
  GradientEstimate est;
  est.grad.assign(params.param_count(), 0.0);
  long clipped = 0;
  double rho_sum = 0.0;
  double rho_max = 0.0;
  const double group_w = 1.0 / static_cast<double>(groups.size());
  for (const RolloutGroup& group : groups) {
    if (need_advantages &&
        group.advantages.size() != group.trajectories.size())
      throw std::invalid_argument("group advantages not filled");
    const double traj_w =
        group_w / static_cast<double>(group.trajectories.size());
    for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
      const Trajectory& traj = group.trajectories[i];
      const double adv = need_advantages ? group.advantages[i] : 0.0;
      const double w = traj_w / static_cast<double>(traj.tokens.size());
      Context ctx{traj.query_id, {}};
      for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        const int token = traj.tokens[t];
        const double rho = std::exp(traj.tempered_logps[t] - traj.base_logps[t]);
        rho_sum += rho;
        rho_max = std::max(rho_max, rho);
        TokenTerm tt = term(adv, static_cast<double>(traj.reward), rho);
        const double lp = params.log_prob(ctx, token, 1.0);
        const double r = std::exp(lp - traj.base_logps[t]);
        const double rc = std::clamp(r, 1.0 - epsilon, 1.0 + epsilon);
        const double a = r * tt.coeff;
        const double b = rc * tt.coeff;
        est.token_count += 1;
        if (a <= b) {
          est.scalar_objective += w * tt.branch_weight * a;
          params.add_grad_log_prob(ctx, token, 1.0,
                                   w * tt.branch_weight * tt.coeff * r,
                                   est.grad);
        } else {
          // Clip branch strictly smaller: constant in theta, zero gradient.
          est.scalar_objective += w * tt.branch_weight * b;
          ++clipped;
        }
        if (token != params.vocab().eos) ctx.prefix.push_back(token);
      }
    }
  }
  if (est.token_count > 0) {
    est.clip_fraction = static_cast<double>(clipped) /
                        static_cast<double>(est.token_count);
    est.mean_rho = rho_sum / static_cast<double>(est.token_count);
    est.max_rho = rho_max;
  }
  return est;
}

}  // namespace

GradientEstimate grpo_gradient(const Policy& params,
                               std::span<const RolloutGroup> groups,
                               const ObjectiveSpec& spec) {
  return clipped_surrogate(params, groups, spec.epsilon, true,
                           [](double adv, double, double) {
                             return TokenTerm{adv, 1.0};
                           });
}

GradientEstimate reinforce_term_gradient(const Policy& params,
                                         std::span<const RolloutGroup> groups,
                                         const ObjectiveSpec& spec,
                                         RhoWeighting weighting,
                                         SampledAt sampled_at) {
  const bool valid = (weighting == RhoWeighting::None) ||
                     (weighting == RhoWeighting::Rho &&
                      sampled_at == SampledAt::Base) ||
                     (weighting == RhoWeighting::RhoInverse &&
                      sampled_at == SampledAt::Tempered);
  if (!valid)
    throw std::invalid_argument(
        "rho weighting / sampling distribution mismatch");
  for (const RolloutGroup& g : groups) {
    if (sampled_at == SampledAt::Base && g.sampling_temperature != 1.0)
      throw std::invalid_argument(
          "regularizer expects groups sampled at T = 1");
    if (sampled_at == SampledAt::Tempered &&
        g.sampling_temperature != g.schedule_temperature)
      throw std::invalid_argument(
          "regularizer expects groups sampled at the schedule temperature");
  }
  return clipped_surrogate(
      params, groups, spec.epsilon, false,
      [weighting](double, double reward, double rho) {
        double bw = 1.0;
        if (weighting == RhoWeighting::Rho) bw = rho;
        if (weighting == RhoWeighting::RhoInverse) bw = 1.0 / rho;
        return TokenTerm{reward, bw};
      });
}

GradientEstimate dcpo_gradient(const Policy& params,
                               std::span<const RolloutGroup> groups,
                               const ObjectiveSpec& spec, double alpha) {
  return clipped_surrogate(params, groups, spec.epsilon, true,
                           [alpha](double adv, double reward, double rho) {
                             return TokenTerm{adv + alpha * (rho * reward), 1.0};
                           });
}

GradientEstimate dcpo_no_double_is_gradient(const Policy& params,
                                            std::span<const RolloutGroup> groups,
                                            const ObjectiveSpec& spec,
                                            double alpha) {
  return clipped_surrogate(params, groups, spec.epsilon, true,
                           [alpha](double adv, double reward, double) {
                             return TokenTerm{adv + alpha * reward, 1.0};
                           });
}

GradientEstimate dcpo_no_reinforce_gradient(const Policy& params,
                                            std::span<const RolloutGroup> groups,
                                            const ObjectiveSpec& spec,
                                            double alpha) {
  return clipped_surrogate(params, groups, spec.epsilon, true,
                           [alpha](double adv, double, double rho) {
                             return TokenTerm{(1.0 + alpha * rho) * adv, 1.0};
                           });
}

GradientEstimate entropy_reg_gradient(const Policy& params,
                                      std::span<const RolloutGroup> groups,
                                      const ObjectiveSpec& spec) {
  GradientEstimate est = grpo_gradient(params, groups, spec);
  const double group_w = 1.0 / static_cast<double>(groups.size());
  for (const RolloutGroup& group : groups) {
    const double traj_w =
        group_w / static_cast<double>(group.trajectories.size());
    for (const Trajectory& traj : group.trajectories) {
      const double w =
          spec.lambda * traj_w / static_cast<double>(traj.tokens.size());
      Context ctx{traj.query_id, {}};
      for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
        est.scalar_objective += w * params.token_entropy(ctx, 1.0);
        params.add_grad_token_entropy(ctx, 1.0, w, est.grad);
        if (traj.tokens[t] != params.vocab().eos)
          ctx.prefix.push_back(traj.tokens[t]);
      }
    }
  }
  return est;
}

GradientEstimate objective_gradient(const Policy& params,
                                    std::span<const RolloutGroup> main_groups,
                                    std::span<const RolloutGroup> reg_groups,
                                    const ObjectiveSpec& spec,
                                    double alpha_in_effect) {
  spec.validate();
  switch (spec.kind) {
    case ObjectiveKind::Grpo:
      return grpo_gradient(params, main_groups, spec);
    case ObjectiveKind::GrpoEntropyReg:
      return entropy_reg_gradient(params, main_groups, spec);
    case ObjectiveKind::Dcpo:
      return dcpo_gradient(params, main_groups, spec, alpha_in_effect);
    case ObjectiveKind::DcpoNoDoubleIs:
      return dcpo_no_double_is_gradient(params, main_groups, spec,
                                        alpha_in_effect);
    case ObjectiveKind::DcpoNoReinforce:
      return dcpo_no_reinforce_gradient(params, main_groups, spec,
                                        alpha_in_effect);
    case ObjectiveKind::J1:
    case ObjectiveKind::J2:
    case ObjectiveKind::J3:
    case ObjectiveKind::J4: {
      RhoWeighting weighting = RhoWeighting::None;
      SampledAt sampled_at = SampledAt::Base;
      if (spec.kind == ObjectiveKind::J2) sampled_at = SampledAt::Tempered;
      if (spec.kind == ObjectiveKind::J3) weighting = RhoWeighting::Rho;
      if (spec.kind == ObjectiveKind::J4) {
        weighting = RhoWeighting::RhoInverse;
        sampled_at = SampledAt::Tempered;
      }
      GradientEstimate main = grpo_gradient(params, main_groups, spec);
      GradientEstimate reg = reinforce_term_gradient(params, reg_groups, spec,
                                                     weighting, sampled_at);
      GradientEstimate out;
      out.grad.resize(main.grad.size());
      for (std::size_t i = 0; i < out.grad.size(); ++i)
        out.grad[i] = main.grad[i] + alpha_in_effect * reg.grad[i];
      out.scalar_objective =
          main.scalar_objective + alpha_in_effect * reg.scalar_objective;
      out.token_count = main.token_count + reg.token_count;
      out.clip_fraction =
          (main.clip_fraction * main.token_count +
           reg.clip_fraction * reg.token_count) /
          static_cast<double>(out.token_count);
      out.mean_rho = reg.mean_rho;  // the rho-bearing component
      out.max_rho = reg.max_rho;
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace dcpo
