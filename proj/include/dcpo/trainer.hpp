#pragma once

// The optimization loop: rollout, advantages, temperature/alpha schedule,
// gradient, parameter update, with exact entropy telemetry and collapse
// detection. Deterministic in the run seed regardless of worker count.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dcpo/config.hpp"
#include "dcpo/objectives.hpp"
#include "dcpo/policy.hpp"
#include "dcpo/task.hpp"

namespace dcpo {

enum class OptimizerKind { Sgd, SgdMomentum, AdaptiveMoment };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_num = 1e-8;
};

struct TrainConfig {
  std::string task_name = "needle";
  ObjectiveSpec objective;
  int group_size = 8;      // G
  int batch_queries = 8;   // groups per rollout batch, cycling over queries
  int steps = 300;
  double learning_rate = 0.1;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  double entropy_floor = 0.05;
  int eval_every = 1;      // exact-telemetry refresh cadence
  int n_minibatch = 4;     // gradient updates per rollout batch
  int workers = 1;         // rollout sampling threads
  bool refresh_per_minibatch = false;  // re-derive T inside a batch
  ContextKeying keying = ContextKeying::FullPrefix;
  int last_k = 0;

  void validate() const;
};

struct MetricsRecord {
  int step = 0;
  double policy_entropy = 0.0;  // exact, from full enumeration
  double mean_reward = 0.0;     // exact expected reward at T = 1
  double batch_accuracy = 0.0;  // sampled fraction of rewarded rollouts
  double temperature_in_effect = 1.0;
  double alpha_in_effect = 0.0;
  double grad_norm = 0.0;
  double clip_fraction = 0.0;
  double mean_rho = 1.0;
  double max_rho = 1.0;
};

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  std::vector<MetricsRecord> records;  // exactly `steps` entries
  Policy params;
};

/// Runs the loop on a fresh task policy. `on_record` (optional) fires after
/// each step so callers can stream CSV rows; `diagnostics` (optional)
/// receives the offending batch dump before a non-finite-gradient abort.
TrainResult train(const Task& task, const TrainConfig& cfg,
                  const std::function<void(const MetricsRecord&)>& on_record = {},
                  std::ostream* diagnostics = nullptr);

/// True iff mean entropy over the trailing `window` records is below `floor`.
bool detect_collapse(std::span<const MetricsRecord> records, double floor,
                     int window);

std::string metrics_csv_header();
void append_metrics_csv_row(std::ostream& out, const MetricsRecord& rec);
void write_metrics_csv(std::ostream& out,
                       std::span<const MetricsRecord> records);
std::vector<MetricsRecord> read_metrics_csv(std::istream& in);

/// Builds a TrainConfig from `run.*` keys of a flat config file.
TrainConfig train_config_from(const KeyValueConfig& cfg);

}  // namespace dcpo
