#pragma once

// Group sampling under the behavior policy: records behavior log-probs at the
// sampling temperature, base (T=1) log-probs, and tempered log-probs at the
// schedule temperature, all from the same forward pass, plus binary rewards
// and group-relative advantages.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "dcpo/policy.hpp"
#include "dcpo/task.hpp"

namespace dcpo {

struct Trajectory {
  int query_id = 0;
  std::vector<int> tokens;
  std::vector<double> behavior_logps;  // log pi_old^{sampling_T}(o_t | .)
  std::vector<double> base_logps;      // log pi_old(o_t | .) at T = 1
  std::vector<double> tempered_logps;  // log pi_old^{schedule_T}(o_t | .)
  int reward = 0;
};

struct RolloutGroup {
  int query_id = 0;
  double sampling_temperature = 1.0;
  double schedule_temperature = 1.0;
  std::vector<Trajectory> trajectories;  // exactly G
  std::vector<double> advantages;        // per trajectory, empty until filled
};

/// Samples G trajectories autoregressively at `sampling_T` until eos or the
/// task horizon. Deterministic in `seed`. Advantages are left unfilled.
RolloutGroup sample_group(const Policy& params, const Task& task, int query_id,
                          int group_size, double sampling_T, double schedule_T,
                          std::uint64_t seed);

/// Group-relative advantages: (R_i - mean) / population std, all zero when
/// every reward in the group is equal. Every token of trajectory i shares A_i.
void group_advantages(RolloutGroup& group);

/// Recomputes tempered_logps under a new schedule temperature. At T == 1 the
/// tempered log-probs are copied bit-exactly from the base log-probs.
void retemper(const Policy& params, RolloutGroup& group, double schedule_T);

/// Rebuilds the context of token t of a trajectory.
Context context_at(const Trajectory& traj, std::size_t t);

/// Line-delimited dump (query_id, tokens, reward, per-token logps) for
/// offline inspection and failure diagnostics.
void dump_trajectories(std::ostream& out, const RolloutGroup& group);

}  // namespace dcpo
