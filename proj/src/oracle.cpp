#include "dcpo/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dcpo/rng.hpp"

namespace dcpo {
namespace {

struct Enumerator {
  const Policy& params;
  const Task& task;
  int query_id;
  double temperature;
  std::size_t max_space;
  EnumerationResult out;
  std::vector<int> prefix;

  void emit(double log_base, double log_temp) {
    if (out.sequences.size() >= max_space)
      throw std::runtime_error("sequence space exceeds enumeration limit");
    out.sequences.push_back(prefix);
    out.probs_base.push_back(std::exp(log_base));
    out.probs_tempered.push_back(std::exp(log_temp));
    out.rewards.push_back(task.reward(query_id, prefix).value);
  }

  void walk(double log_base, double log_temp) {
    Context ctx{query_id, prefix};
    for (int a = 0; a < task.vocab().size; ++a) {
      const double lb = params.log_prob(ctx, a, 1.0);
      const double lt = temperature == 1.0
                            ? lb
                            : params.log_prob(ctx, a, temperature);
      prefix.push_back(a);
      if (a == task.vocab().eos ||
          static_cast<int>(prefix.size()) == task.horizon()) {
        emit(log_base + lb, log_temp + lt);
      } else {
        walk(log_base + lb, log_temp + lt);
      }
      prefix.pop_back();
    }
  }
};

// Mean per-token gradient of log pi at T = 1 along one sequence, scaled.
void add_sequence_score(const Policy& params, int query_id,
                        std::span<const int> tokens, double coeff,
                        std::span<double> grad) {
  const double w = coeff / static_cast<double>(tokens.size());
  Context ctx{query_id, {}};
  for (int token : tokens) {
    params.add_grad_log_prob(ctx, token, 1.0, w, grad);
    if (token != params.vocab().eos) ctx.prefix.push_back(token);
  }
}

// E[(r - mean)/std] over the binomial law of the other G-1 group rewards,
// for own reward r in {0, 1} and per-trajectory success probability p.
std::array<double, 2> expected_advantage(int group_size, double p) {
  const int n = group_size - 1;
  std::array<double, 2> out{0.0, 0.0};
  double log_fact = 0.0;
  std::vector<double> lf(n + 1);
  for (int k = 1; k <= n; ++k) {
    log_fact += std::log(static_cast<double>(k));
    lf[k] = log_fact;
  }
  for (int k = 0; k <= n; ++k) {
    double pmf;
    if (p <= 0.0) {
      pmf = k == 0 ? 1.0 : 0.0;
    } else if (p >= 1.0) {
      pmf = k == n ? 1.0 : 0.0;
    } else {
      const double logc = lf[n] - lf[k] - lf[n - k];
      pmf = std::exp(logc + k * std::log(p) + (n - k) * std::log1p(-p));
    }
    if (pmf == 0.0) continue;
    for (int r = 0; r <= 1; ++r) {
      const double m = (k + r) / static_cast<double>(group_size);
      const double var = m * (1.0 - m);
      if (var > 0.0) out[r] += pmf * (r - m) / std::sqrt(var);
    }
  }
  return out;
}

}  // namespace

EnumerationResult enumerate_sequences(const Policy& params, const Task& task,
                                      int query_id, double temperature,
                                      std::size_t max_space) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("temperature must be > 0");
  Enumerator e{params, task, query_id, temperature, max_space, {}, {}};
  e.walk(0.0, 0.0);
  return std::move(e.out);
}

double exact_policy_entropy(const Policy& params, const Task& task) {
  double total = 0.0;
  for (int q : task.queries()) {
    EnumerationResult en = enumerate_sequences(params, task, q, 1.0);
    for (std::size_t i = 0; i < en.sequences.size(); ++i) {
      const std::vector<int>& o = en.sequences[i];
      double h = 0.0;
      Context ctx{q, {}};
      for (int token : o) {
        h += params.token_entropy(ctx, 1.0);
        if (token != params.vocab().eos) ctx.prefix.push_back(token);
      }
      total += en.probs_base[i] * h / static_cast<double>(o.size());
    }
  }
  return total / static_cast<double>(task.queries().size());
}

double exact_expected_reward(const Policy& params, const Task& task,
                             double temperature) {
  // Neumaier-compensated sum: near saturation the result sits within one ulp
  // of 1, and naive accumulation noise would leak above it.
  double total = 0.0, comp = 0.0;
  for (int q : task.queries()) {
    EnumerationResult en = enumerate_sequences(params, task, q, temperature);
    for (std::size_t i = 0; i < en.sequences.size(); ++i) {
      if (!en.rewards[i]) continue;
      const double x = en.probs_tempered[i];
      const double s = total + x;
      comp += std::abs(total) >= std::abs(x) ? (total - s) + x : (x - s) + total;
      total = s;
    }
  }
  const double r = (total + comp) / static_cast<double>(task.queries().size());
  return std::min(1.0, std::max(0.0, r));
}

std::vector<double> exact_regularizer_gradient(const Policy& params,
                                               const Task& task,
                                               double temperature,
                                               RegVariant variant) {
  std::vector<double> grad(params.param_count(), 0.0);
  const double qw = 1.0 / static_cast<double>(task.queries().size());
  for (int q : task.queries()) {
    EnumerationResult en = enumerate_sequences(params, task, q, temperature);
    for (std::size_t i = 0; i < en.sequences.size(); ++i) {
      if (!en.rewards[i]) continue;
      const std::vector<int>& o = en.sequences[i];
      if (variant == RegVariant::DcpoTerm) {
        const double w = qw * en.probs_base[i] / static_cast<double>(o.size());
        Context ctx{q, {}};
        for (int token : o) {
          const double lb = params.log_prob(ctx, token, 1.0);
          const double lt = temperature == 1.0
                                ? lb
                                : params.log_prob(ctx, token, temperature);
          params.add_grad_log_prob(ctx, token, 1.0, w * std::exp(lt - lb),
                                   grad);
          if (token != params.vocab().eos) ctx.prefix.push_back(token);
        }
        continue;
      }
      double weight;
      switch (variant) {
        case RegVariant::J1:
          weight = en.probs_base[i];
          break;
        case RegVariant::J2:
          weight = en.probs_tempered[i];
          break;
        case RegVariant::J3:
        case RegVariant::J4: {
          // Sequence-level product of the per-token importance factors,
          // accumulated factor by factor so it shares no rounding path with
          // the direct tempered/base probabilities.
          double prod = 1.0;
          Context ctx{q, {}};
          for (int token : o) {
            const double lb = params.log_prob(ctx, token, 1.0);
            const double lt = temperature == 1.0
                                  ? lb
                                  : params.log_prob(ctx, token, temperature);
            prod *= variant == RegVariant::J3 ? std::exp(lt - lb)
                                              : std::exp(lb - lt);
            if (token != params.vocab().eos) ctx.prefix.push_back(token);
          }
          weight = (variant == RegVariant::J3 ? en.probs_base[i]
                                              : en.probs_tempered[i]) *
                   prod;
          break;
        }
        default:
          throw std::logic_error("unreachable");
      }
      add_sequence_score(params, q, o, qw * weight, grad);
    }
  }
  return grad;
}

std::vector<double> exact_estimator_gradient(const Policy& params,
                                             const Task& task,
                                             const ObjectiveSpec& spec,
                                             double temperature, int group_size,
                                             double alpha) {
  spec.validate();
  if (group_size < 2) throw std::invalid_argument("group size G must be >= 2");
  std::vector<double> grad(params.param_count(), 0.0);
  const double qw = 1.0 / static_cast<double>(task.queries().size());
  const bool tempered_reg = spec.kind == ObjectiveKind::J2 ||
                            spec.kind == ObjectiveKind::J4;
  for (int q : task.queries()) {
    EnumerationResult en = enumerate_sequences(params, task, q, temperature);
    double p_succ = 0.0;
    for (std::size_t i = 0; i < en.sequences.size(); ++i)
      if (en.rewards[i]) p_succ += en.probs_base[i];
    const std::array<double, 2> ea = expected_advantage(group_size, p_succ);

    for (std::size_t i = 0; i < en.sequences.size(); ++i) {
      const std::vector<int>& o = en.sequences[i];
      const int reward = en.rewards[i];
      const double adv = ea[reward];
      const double tok_w = 1.0 / static_cast<double>(o.size());

      // Group-relative component, integrated over the base distribution.
      switch (spec.kind) {
        case ObjectiveKind::Grpo:
        case ObjectiveKind::J1:
        case ObjectiveKind::J2:
        case ObjectiveKind::J3:
        case ObjectiveKind::J4:
        case ObjectiveKind::GrpoEntropyReg:
          if (adv != 0.0)
            add_sequence_score(params, q, o, qw * en.probs_base[i] * adv, grad);
          break;
        case ObjectiveKind::DcpoNoDoubleIs:
          add_sequence_score(params, q, o,
                             qw * en.probs_base[i] * (adv + alpha * reward),
                             grad);
          break;
        case ObjectiveKind::Dcpo:
        case ObjectiveKind::DcpoNoReinforce: {
          Context ctx{q, {}};
          for (int token : o) {
            const double lb = params.log_prob(ctx, token, 1.0);
            const double lt = temperature == 1.0
                                  ? lb
                                  : params.log_prob(ctx, token, temperature);
            const double rho = std::exp(lt - lb);
            const double c = spec.kind == ObjectiveKind::Dcpo
                                 ? adv + alpha * rho * reward
                                 : (1.0 + alpha * rho) * adv;
            params.add_grad_log_prob(ctx, token, 1.0,
                                     qw * en.probs_base[i] * tok_w * c, grad);
            if (token != params.vocab().eos) ctx.prefix.push_back(token);
          }
          break;
        }
      }

      // REINFORCE regularizer component, token-level weighting as sampled.
      if ((spec.kind == ObjectiveKind::J1 || spec.kind == ObjectiveKind::J2 ||
           spec.kind == ObjectiveKind::J3 || spec.kind == ObjectiveKind::J4) &&
          reward) {
        const double p_samp =
            tempered_reg ? en.probs_tempered[i] : en.probs_base[i];
        Context ctx{q, {}};
        for (int token : o) {
          double w = 1.0;
          if (spec.kind == ObjectiveKind::J3 ||
              spec.kind == ObjectiveKind::J4) {
            const double lb = params.log_prob(ctx, token, 1.0);
            const double lt = temperature == 1.0
                                  ? lb
                                  : params.log_prob(ctx, token, temperature);
            w = spec.kind == ObjectiveKind::J3 ? std::exp(lt - lb)
                                               : std::exp(lb - lt);
          }
          params.add_grad_log_prob(ctx, token, 1.0,
                                   qw * alpha * p_samp * tok_w * w, grad);
          if (token != params.vocab().eos) ctx.prefix.push_back(token);
        }
      }

      if (spec.kind == ObjectiveKind::GrpoEntropyReg) {
        Context ctx{q, {}};
        for (int token : o) {
          params.add_grad_token_entropy(
              ctx, 1.0, qw * spec.lambda * en.probs_base[i] * tok_w, grad);
          if (token != params.vocab().eos) ctx.prefix.push_back(token);
        }
      }
    }
  }
  return grad;
}

std::vector<double> finite_diff_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("step must be > 0");
  std::vector<double> grad(params.size());
  std::vector<double> x = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    x[i] = params[i] + step;
    const double hi = f(x);
    x[i] = params[i] - step;
    const double lo = f(x);
    x[i] = params[i];
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

DirectionResult entropy_direction_test(const Task& task, int n_policies,
                                       double temperature, double lr,
                                       std::uint64_t seed,
                                       double logit_stddev) {
  DirectionResult res;
  res.total = n_policies;
  for (int i = 0; i < n_policies; ++i) {
    Policy p = task.make_policy();
    p.randomize(mix_seed(seed, static_cast<std::uint64_t>(i)), logit_stddev);
    const double pr = exact_expected_reward(p, task, 1.0);
    if (pr < 1e-9 || pr > 1.0 - 1e-9) {
      ++res.excluded;
      continue;
    }
    std::vector<double> g_temp =
        exact_regularizer_gradient(p, task, temperature, RegVariant::J2);
    std::vector<double> g_base =
        exact_regularizer_gradient(p, task, 1.0, RegVariant::J2);
    Policy p_temp = p;
    Policy p_base = p;
    for (int j = 0; j < p.param_count(); ++j) {
      p_temp.values()[j] += lr * g_temp[j];
      p_base.values()[j] += lr * g_base[j];
    }
    const double h_temp = exact_policy_entropy(p_temp, task);
    const double h_base = exact_policy_entropy(p_base, task);
    if (h_temp > h_base)
      ++res.increased;
    else
      ++res.decreased;
  }
  const int counted = res.increased + res.decreased;
  res.fraction_increasing =
      counted > 0 ? static_cast<double>(res.increased) / counted : 0.0;
  return res;
}

McReport mc_vs_exact(const Policy& params, const Task& task,
                     const ObjectiveSpec& spec, double temperature,
                     int group_size, double alpha, int samples,
                     std::uint64_t seed, int batch_size,
                     const std::vector<double>* reference) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const int n_obs = samples / batch_size;
  if (n_obs < 2)
    throw std::invalid_argument("need at least 2 batch-mean observations");
  const std::vector<double> exact =
      reference ? *reference
                : exact_estimator_gradient(params, task, spec, temperature,
                                           group_size, alpha);
  const std::size_t n = exact.size();
  std::vector<double> mean(n, 0.0), m2(n, 0.0);
  const bool tempered_reg = spec.kind == ObjectiveKind::J2 ||
                            spec.kind == ObjectiveKind::J4;
  const bool wants_reg = spec.kind == ObjectiveKind::J1 ||
                         spec.kind == ObjectiveKind::J2 ||
                         spec.kind == ObjectiveKind::J3 ||
                         spec.kind == ObjectiveKind::J4;
  std::vector<double> obs(n);
  for (int o = 0; o < n_obs; ++o) {
    std::fill(obs.begin(), obs.end(), 0.0);
    for (int k = 0; k < batch_size; ++k) {
      const int s = o * batch_size + k;
      std::vector<RolloutGroup> main_groups;
      std::vector<RolloutGroup> reg_groups;
      for (std::size_t qi = 0; qi < task.queries().size(); ++qi) {
        const int q = task.queries()[qi];
        RolloutGroup g = sample_group(
            params, task, q, group_size, 1.0, temperature,
            mix_seed(seed, static_cast<std::uint64_t>(s), qi));
        group_advantages(g);
        if (wants_reg) {
          if (tempered_reg) {
            reg_groups.push_back(sample_group(
                params, task, q, group_size, temperature, temperature,
                mix_seed(seed ^ 0x517cc1b727220a95ULL,
                         static_cast<std::uint64_t>(s), qi)));
          } else {
            reg_groups.push_back(g);
          }
        }
        main_groups.push_back(std::move(g));
      }
      GradientEstimate est = objective_gradient(
          params, main_groups,
          wants_reg ? std::span<const RolloutGroup>(reg_groups)
                    : std::span<const RolloutGroup>(main_groups),
          spec, alpha);
      for (std::size_t j = 0; j < n; ++j)
        obs[j] += est.grad[j] / batch_size;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double d = obs[j] - mean[j];
      mean[j] += d / (o + 1);
      m2[j] += d * (obs[j] - mean[j]);
    }
  }
  McReport rep;
  rep.coords = n;
  rep.deviation_floor = 1e-3;
  for (std::size_t j = 0; j < n; ++j) {
    const double sd = std::sqrt(m2[j] / (n_obs - 1));
    const double sem = sd / std::sqrt(static_cast<double>(n_obs));
    const double dev = mean[j] - exact[j];
    double z;
    if (sem == 0.0) {
      z = dev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      z = dev / sem;
    }
    const double az = std::fabs(z);
    if (az <= 3.0) ++rep.within_3sigma;
    if (az <= 5.0) ++rep.within_5sigma;
    if (az > 3.0 && std::fabs(dev) > rep.deviation_floor) ++rep.violations;
    rep.max_abs_z = std::max(rep.max_abs_z, az);
    rep.max_abs_deviation = std::max(rep.max_abs_deviation, std::fabs(dev));
  }
  return rep;
}

}  // namespace dcpo
