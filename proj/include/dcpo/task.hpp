#pragma once

// Synthetic tasks with binary verifiable rewards. Reference sets are explicit
// and small so the full sequence space stays enumerable.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dcpo/policy.hpp"

namespace dcpo {

struct RewardOutcome {
  int value = 0;  // exactly 0 or 1
};

/// A logit offset applied when a fresh policy is built for a task; used by
/// tasks whose dynamics depend on a non-uniform starting point.
struct LogitBias {
  int query_id = 0;
  std::vector<int> prefix;
  int token = 0;
  double value = 0.0;
};

class Task {
 public:
  Task(std::string name, Vocab vocab, int horizon, std::vector<int> queries,
       std::vector<std::vector<std::vector<int>>> references,
       std::vector<LogitBias> init_bias = {});

  const std::string& name() const { return name_; }
  const Vocab& vocab() const { return vocab_; }
  int horizon() const { return horizon_; }
  const std::vector<int>& queries() const { return queries_; }
  const std::vector<LogitBias>& init_bias() const { return init_bias_; }

  const std::vector<std::vector<int>>& references(int query_id) const;

  /// 1 iff the response is a member of the query's reference set.
  RewardOutcome reward(int query_id, std::span<const int> response) const;

  /// Uniform-logit tabular policy for this task with the task's init bias.
  Policy make_policy(ContextKeying keying = ContextKeying::FullPrefix,
                     int last_k = 0) const;

 private:
  int query_index(int query_id) const;

  std::string name_;
  Vocab vocab_;
  int horizon_ = 0;
  std::vector<int> queries_;
  std::vector<std::vector<std::vector<int>>> references_;  // per query index
  std::vector<LogitBias> init_bias_;
};

/// Single reference per query; sparse reward, collapse prone.
Task make_needle(int vocab_size = 4, int horizon = 3, int n_queries = 2);
/// (vocab_size - 2)^2 references per query, all two tokens plus eos with
/// differing prefixes, so sharpening on one prefix forfeits the others.
Task make_multipath(int vocab_size = 6, int horizon = 3, int n_queries = 2);
/// References reachable only through a first token that the shipped peaked
/// initialization makes rare.
Task make_staircase(int vocab_size = 4, int horizon = 3);

std::vector<Task> builtin_tasks();
Task find_task(const std::string& name);

/// Reads a task from the flat key-value config format (task.vocab, task.eos,
/// task.horizon, task.query.<q>.ref.<i> = space-separated token list).
Task load_task(std::istream& in);
Task load_task_file(const std::string& path);

}  // namespace dcpo
