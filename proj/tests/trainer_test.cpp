#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dcpo/task.hpp"
#include "dcpo/trainer.hpp"

using namespace dcpo;

namespace {

TrainConfig short_cfg(ObjectiveKind kind, int steps = 12) {
  TrainConfig cfg;
  cfg.task_name = "needle";
  cfg.objective.kind = kind;
  cfg.group_size = 4;
  cfg.batch_queries = 4;
  cfg.steps = steps;
  cfg.learning_rate = 0.1;
  cfg.seed = 7;
  return cfg;
}

std::string csv_of(const TrainResult& res) {
  std::stringstream out;
  write_metrics_csv(out, res.records);
  return out.str();
}

}  // namespace

TEST_CASE("training is bit-deterministic across reruns and worker counts") {
  Task t = find_task("needle");
  TrainConfig cfg = short_cfg(ObjectiveKind::Dcpo);
  TrainResult a = train(t, cfg);
  TrainResult b = train(t, cfg);
  CHECK(csv_of(a) == csv_of(b));
  CHECK(a.params.values() == b.params.values());

  cfg.workers = 3;
  TrainResult c = train(t, cfg);
  CHECK(csv_of(a) == csv_of(c));
  CHECK(a.params.values() == c.params.values());
}

TEST_CASE("zero learning rate leaves the policy untouched") {
  Task t = find_task("needle");
  TrainConfig cfg = short_cfg(ObjectiveKind::Grpo, 5);
  cfg.learning_rate = 0.0;
  TrainResult res = train(t, cfg);
  CHECK(res.params.values() == t.make_policy().values());
  REQUIRE(res.records.size() == 5);
  for (const MetricsRecord& r : res.records)
    CHECK(r.policy_entropy == res.records[0].policy_entropy);
}

TEST_CASE("record stream matches the returned records") {
  Task t = find_task("needle");
  TrainConfig cfg = short_cfg(ObjectiveKind::J3, 6);
  std::vector<MetricsRecord> streamed;
  TrainResult res =
      train(t, cfg, [&](const MetricsRecord& r) { streamed.push_back(r); });
  REQUIRE(streamed.size() == res.records.size());
  for (std::size_t i = 0; i < streamed.size(); ++i) {
    CHECK(streamed[i].step == res.records[i].step);
    CHECK(streamed[i].policy_entropy == res.records[i].policy_entropy);
  }
}

TEST_CASE("grpo on needle saturates reward and sheds entropy") {
  Task t = find_task("needle");
  TrainConfig cfg = short_cfg(ObjectiveKind::Grpo, 120);
  cfg.group_size = 8;
  cfg.batch_queries = 8;
  cfg.learning_rate = 0.3;
  TrainResult res = train(t, cfg);
  CHECK(res.records.back().mean_reward > 0.8);
  CHECK(res.records.back().policy_entropy < res.records.front().policy_entropy);
}

TEST_CASE("temperature schedule reacts to measured entropy") {
  Task t = find_task("multipath");
  TrainConfig cfg = short_cfg(ObjectiveKind::Dcpo, 8);
  cfg.task_name = "multipath";
  cfg.objective.h0 = 5.0;  // always below target -> exploratory temperature
  TrainResult res = train(t, cfg);
  for (const MetricsRecord& r : res.records)
    CHECK(r.temperature_in_effect == cfg.objective.t_high);
  cfg.objective.h0 = 0.0;  // never below target
  TrainResult res2 = train(t, cfg);
  for (const MetricsRecord& r : res2.records)
    CHECK(r.temperature_in_effect == cfg.objective.t_low);
}

TEST_CASE("eval_every holds telemetry between refreshes") {
  Task t = find_task("needle");
  TrainConfig cfg = short_cfg(ObjectiveKind::Grpo, 9);
  cfg.eval_every = 3;
  TrainResult res = train(t, cfg);
  CHECK(res.records[0].policy_entropy == res.records[1].policy_entropy);
  CHECK(res.records[1].policy_entropy == res.records[2].policy_entropy);
}

TEST_CASE("collapse detector thresholds the trailing window") {
  std::vector<MetricsRecord> recs(100);
  for (int i = 0; i < 100; ++i) recs[i].policy_entropy = 1.0;
  CHECK_FALSE(detect_collapse(recs, 0.05, 50));
  for (int i = 60; i < 100; ++i) recs[i].policy_entropy = 0.0;
  // Trailing-50 mean = 10 * 1.0 / 50 = 0.2.
  CHECK_FALSE(detect_collapse(recs, 0.05, 50));
  for (int i = 45; i < 100; ++i) recs[i].policy_entropy = 0.01;
  CHECK(detect_collapse(recs, 0.05, 50));
  CHECK_THROWS(detect_collapse(recs, 0.05, 200));  // window longer than run
}

TEST_CASE("metrics csv round-trips bit-faithfully") {
  Task t = find_task("needle");
  TrainConfig cfg = short_cfg(ObjectiveKind::Dcpo, 7);
  TrainResult res = train(t, cfg);
  std::stringstream buf;
  write_metrics_csv(buf, res.records);
  std::vector<MetricsRecord> back = read_metrics_csv(buf);
  REQUIRE(back.size() == res.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].step == res.records[i].step);
    CHECK(back[i].policy_entropy == res.records[i].policy_entropy);
    CHECK(back[i].mean_reward == res.records[i].mean_reward);
    CHECK(back[i].grad_norm == res.records[i].grad_norm);
    CHECK(back[i].alpha_in_effect == res.records[i].alpha_in_effect);
  }
}

TEST_CASE("train_config_from reads run keys and keeps defaults elsewhere") {
  KeyValueConfig cfg = KeyValueConfig::parse_string(
      "run.task = multipath\n"
      "run.objective = dcpo\n"
      "run.alpha_mode = fixed\n"
      "run.alpha = 0.5\n"
      "run.t_high = 1.5\n"
      "run.h0 = 0.75\n"
      "run.steps = 33\n"
      "run.learning_rate = 0.2\n"
      "run.optimizer = adaptive-moment\n"
      "run.seed = 42\n"
      "run.workers = 2\n");
  TrainConfig tc = train_config_from(cfg);
  CHECK(tc.task_name == "multipath");
  CHECK(tc.objective.kind == ObjectiveKind::Dcpo);
  CHECK(tc.objective.alpha == 0.5);
  CHECK(tc.objective.t_high == 1.5);
  CHECK(tc.objective.h0 == 0.75);
  CHECK(tc.steps == 33);
  CHECK(tc.learning_rate == 0.2);
  CHECK(tc.optimizer.kind == OptimizerKind::AdaptiveMoment);
  CHECK(tc.seed == 42);
  CHECK(tc.workers == 2);
  CHECK(tc.group_size == 8);         // untouched default
  CHECK(tc.objective.t_low == 0.8);  // untouched default
  CHECK(cfg.unused_keys().empty());
}

TEST_CASE("config validation rejects inconsistent runs") {
  TrainConfig ok = short_cfg(ObjectiveKind::Grpo);
  CHECK_NOTHROW(ok.validate());

  TrainConfig tiny_group = ok;
  tiny_group.group_size = 1;
  CHECK_THROWS(tiny_group.validate());

  TrainConfig neg_lr = ok;
  neg_lr.learning_rate = -0.1;
  CHECK_THROWS(neg_lr.validate());

  // Off-policy retempering would silently change the distribution the
  // tempered-sampled regularizers were drawn from.
  TrainConfig refresh_j2 = ok;
  refresh_j2.objective.kind = ObjectiveKind::J2;
  refresh_j2.refresh_per_minibatch = true;
  CHECK_THROWS(refresh_j2.validate());
  refresh_j2.objective.kind = ObjectiveKind::Grpo;
  CHECK_NOTHROW(refresh_j2.validate());
}

TEST_CASE("adaptive alpha telemetry reaches the records") {
  Task t = find_task("multipath");
  TrainConfig cfg = short_cfg(ObjectiveKind::Dcpo, 6);
  cfg.task_name = "multipath";
  cfg.objective.alpha_mode = AlphaMode::Adaptive;
  TrainResult res = train(t, cfg);
  bool any_nonzero = false;
  for (const MetricsRecord& r : res.records)
    if (r.alpha_in_effect != 0.0) any_nonzero = true;
  CHECK(any_nonzero);
}
