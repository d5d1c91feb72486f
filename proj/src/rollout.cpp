#include "dcpo/rollout.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "dcpo/rng.hpp"

namespace dcpo {
namespace {

// Per-token log-probs at base, schedule and sampling temperatures from one
// logit evaluation, plus an inverse-CDF draw at the sampling temperature.
struct StepLogps {
  double base;
  double tempered;
  double behavior;
};

}  // namespace

RolloutGroup sample_group(const Policy& params, const Task& task, int query_id,
                          int group_size, double sampling_T, double schedule_T,
                          std::uint64_t seed) {
  if (group_size < 2) throw std::invalid_argument("group size G must be >= 2");
  if (!(sampling_T > 0.0) || !(schedule_T > 0.0))
    throw std::invalid_argument("temperatures must be > 0");
  RolloutGroup group;
  group.query_id = query_id;
  group.sampling_temperature = sampling_T;
  group.schedule_temperature = schedule_T;
  group.trajectories.resize(group_size);

  SplitMix64 rng(seed);
  const int eos = task.vocab().eos;
  for (int i = 0; i < group_size; ++i) {
    Trajectory& traj = group.trajectories[i];
    traj.query_id = query_id;
    Context ctx{query_id, {}};
    for (int t = 0; t < task.horizon(); ++t) {
      TokenDistribution dist = params.token_probs(ctx, sampling_T);
      double u = rng.uniform();
      int token = 0;
      double cum = 0.0;
      for (int a = 0; a < task.vocab().size; ++a) {
        cum += dist.probs[a];
        if (u < cum || a == task.vocab().size - 1) {
          token = a;
          break;
        }
      }
      StepLogps lp;
      lp.base = params.log_prob(ctx, token, 1.0);
      lp.tempered = schedule_T == 1.0 ? lp.base
                                      : params.log_prob(ctx, token, schedule_T);
      lp.behavior = sampling_T == 1.0
                        ? lp.base
                        : (sampling_T == schedule_T
                               ? lp.tempered
                               : params.log_prob(ctx, token, sampling_T));
      traj.tokens.push_back(token);
      traj.base_logps.push_back(lp.base);
      traj.tempered_logps.push_back(lp.tempered);
      traj.behavior_logps.push_back(lp.behavior);
      if (token == eos) break;
      ctx.prefix.push_back(token);
    }
    traj.reward = task.reward(query_id, traj.tokens).value;
  }
  return group;
}

void group_advantages(RolloutGroup& group) {
  const std::size_t g = group.trajectories.size();
  double mean = 0.0;
  for (const Trajectory& t : group.trajectories) mean += t.reward;
  mean /= static_cast<double>(g);
  double var = 0.0;
  for (const Trajectory& t : group.trajectories) {
    double d = t.reward - mean;
    var += d * d;
  }
  var /= static_cast<double>(g);  // population variance
  double sd = std::sqrt(var);
  group.advantages.assign(g, 0.0);
  if (sd > 0.0)
    for (std::size_t i = 0; i < g; ++i)
      group.advantages[i] = (group.trajectories[i].reward - mean) / sd;
}

void retemper(const Policy& params, RolloutGroup& group, double schedule_T) {
  if (!(schedule_T > 0.0))
    throw std::invalid_argument("temperature must be > 0");
  group.schedule_temperature = schedule_T;
  for (Trajectory& traj : group.trajectories) {
    for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
      if (schedule_T == 1.0) {
        traj.tempered_logps[t] = traj.base_logps[t];
      } else {
        Context ctx = context_at(traj, t);
        traj.tempered_logps[t] = params.log_prob(ctx, traj.tokens[t], schedule_T);
      }
    }
  }
}

Context context_at(const Trajectory& traj, std::size_t t) {
  Context ctx{traj.query_id, {}};
  ctx.prefix.assign(traj.tokens.begin(), traj.tokens.begin() + t);
  return ctx;
}

void dump_trajectories(std::ostream& out, const RolloutGroup& group) {
  char buf[32];
  for (const Trajectory& traj : group.trajectories) {
    out << traj.query_id << '\t';
    for (std::size_t i = 0; i < traj.tokens.size(); ++i) {
      if (i) out << ',';
      out << traj.tokens[i];
    }
    out << '\t' << traj.reward << '\t';
    for (std::size_t i = 0; i < traj.base_logps.size(); ++i) {
      if (i) out << ',';
      std::snprintf(buf, sizeof buf, "%.17g", traj.base_logps[i]);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace dcpo
