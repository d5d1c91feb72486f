#pragma once

// Autoregressive softmax policies over a small token alphabet: tabular or
// linear-feature logits, temperature scaling, exact per-context entropy and
// analytic log-probability gradients. All probability math runs in log-space
// via log-sum-exp; probabilities are materialized only at API boundaries.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dcpo {

/// Token alphabet. `eos` is the designated end-of-sequence token id.
struct Vocab {
  int size = 0;
  int eos = 0;
};

/// A conditioning point for the next-token distribution: which query the
/// response answers plus the tokens generated so far.
struct Context {
  int query_id = 0;
  std::vector<int> prefix;
};

struct TokenDistribution {
  std::vector<double> probs;
  double temperature = 1.0;
};

enum class ParamKind { Tabular, LinearFeatures };
enum class ContextKeying { FullPrefix, LastK };

/// Parameter table defining the policy. Immutable during rollout; the trainer
/// mutates `values()` between rollout phases. All query operations are pure.
class Policy {
 public:
  /// One logit row per reachable (query, prefix) context. Prefixes are
  /// enumerated eagerly over non-eos tokens up to horizon-1, so the parameter
  /// space is finite and enumerable.
  static Policy tabular(const Vocab& vocab, std::span<const int> queries,
                        int horizon,
                        ContextKeying keying = ContextKeying::FullPrefix,
                        int last_k = 0);

  /// Logits are a linear function of a sparse feature vector: a bias, a query
  /// one-hot, and a one-hot per last-k prefix slot (with an "empty" bucket).
  static Policy linear_features(const Vocab& vocab, std::span<const int> queries,
                                int horizon, int last_k);

  const Vocab& vocab() const { return vocab_; }
  ParamKind kind() const { return kind_; }
  ContextKeying keying() const { return keying_; }
  int last_k() const { return last_k_; }
  int horizon() const { return horizon_; }
  const std::vector<int>& queries() const { return queries_; }

  /// Number of logit rows (contexts for tabular, features for linear).
  int rows() const { return rows_; }
  int param_count() const { return static_cast<int>(values_.size()); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// Row index of a tabular context key. Throws on unknown contexts.
  int row_of(const Context& ctx) const;

  TokenDistribution token_probs(const Context& ctx, double temperature) const;
  double log_prob(const Context& ctx, int token, double temperature) const;
  double token_entropy(const Context& ctx, double temperature) const;

  /// Sparse analytic gradient of log pi^T(token|ctx) w.r.t. the parameters.
  std::vector<std::pair<int, double>> grad_log_prob(const Context& ctx, int token,
                                                    double temperature) const;
  /// Accumulates coeff * grad log pi^T(token|ctx) into `grad`.
  void add_grad_log_prob(const Context& ctx, int token, double temperature,
                         double coeff, std::span<double> grad) const;
  /// Accumulates coeff * d/dtheta of token_entropy(ctx, T) into `grad`.
  void add_grad_token_entropy(const Context& ctx, double temperature,
                              double coeff, std::span<double> grad) const;

  /// Fills parameters with N(0, stddev^2) draws; deterministic in `seed`.
  void randomize(std::uint64_t seed, double stddev);
  /// Tabular only: overwrite one logit.
  void set_logit(const Context& ctx, int token, double value);
  void add_logit(const Context& ctx, int token, double delta);

  // Flat text snapshot: header line, then one line per (key, token, value)
  // with 17 significant digits so reload is bit-faithful.
  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static Policy load(std::istream& in);
  static Policy load_file(const std::string& path);

 private:
  Policy() = default;
  void build_rows();
  std::uint64_t context_key(const Context& ctx) const;
  // Feature indices active for a context (linear kind); all weights are 1.
  void active_features(const Context& ctx, std::vector<int>& out) const;
  // Logits for every token in `ctx`, written into `out` (size vocab).
  void logits(const Context& ctx, std::span<double> out) const;

  Vocab vocab_;
  ParamKind kind_ = ParamKind::Tabular;
  ContextKeying keying_ = ContextKeying::FullPrefix;
  int last_k_ = 0;
  int horizon_ = 0;
  std::vector<int> queries_;
  int rows_ = 0;
  std::vector<double> values_;  // rows_ x vocab_.size, row-major
  std::unordered_map<std::uint64_t, int> row_index_;  // tabular keys
  std::vector<std::uint64_t> row_keys_;               // inverse of row_index_
};

}  // namespace dcpo
