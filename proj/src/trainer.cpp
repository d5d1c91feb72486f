#include "dcpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>

#include "dcpo/oracle.hpp"
#include "dcpo/rng.hpp"
#include "dcpo/rollout.hpp"

namespace dcpo {
namespace {

constexpr std::uint64_t kRegStream = 0x9d8a75e3b1c6420fULL;

bool uses_alpha(ObjectiveKind k) {
  return k != ObjectiveKind::Grpo && k != ObjectiveKind::GrpoEntropyReg;
}

bool uses_schedule(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::J2:
    case ObjectiveKind::J3:
    case ObjectiveKind::J4:
    case ObjectiveKind::Dcpo:
    case ObjectiveKind::DcpoNoDoubleIs:
    case ObjectiveKind::DcpoNoReinforce:
      return true;
    default:
      return false;
  }
}

bool tempered_reg_sampling(ObjectiveKind k) {
  return k == ObjectiveKind::J2 || k == ObjectiveKind::J4;
}

struct Optimizer {
  OptimizerConfig cfg;
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;

  explicit Optimizer(const OptimizerConfig& c, std::size_t n)
      : cfg(c), m(n, 0.0), v(n, 0.0) {}

  void apply(std::vector<double>& theta, std::span<const double> grad,
             double lr) {
    ++t;
    switch (cfg.kind) {
      case OptimizerKind::Sgd:
        for (std::size_t i = 0; i < theta.size(); ++i)
          theta[i] += lr * grad[i];
        break;
      case OptimizerKind::SgdMomentum:
        for (std::size_t i = 0; i < theta.size(); ++i) {
          m[i] = cfg.momentum * m[i] + grad[i];
          theta[i] += lr * m[i];
        }
        break;
      case OptimizerKind::AdaptiveMoment: {
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < theta.size(); ++i) {
          m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
          v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
          theta[i] += lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps_num);
        }
        break;
      }
    }
  }
};

void sample_batch(const Policy& params, const Task& task,
                  const TrainConfig& cfg, int step, double schedule_T_main,
                  double schedule_T_reg, std::vector<RolloutGroup>& main_out,
                  std::vector<RolloutGroup>& reg_out) {
  const bool want_reg = tempered_reg_sampling(cfg.objective.kind);
  main_out.resize(cfg.batch_queries);
  if (want_reg) reg_out.resize(cfg.batch_queries);
  const auto& queries = task.queries();
  auto job = [&](int idx) {
    const int q = queries[idx % queries.size()];
    RolloutGroup g = sample_group(
        params, task, q, cfg.group_size, 1.0, schedule_T_main,
        mix_seed(cfg.seed, static_cast<std::uint64_t>(step),
                 static_cast<std::uint64_t>(idx)));
    group_advantages(g);
    main_out[idx] = std::move(g);
    if (want_reg)
      reg_out[idx] = sample_group(
          params, task, q, cfg.group_size, schedule_T_reg, schedule_T_reg,
          mix_seed(cfg.seed ^ kRegStream, static_cast<std::uint64_t>(step),
                   static_cast<std::uint64_t>(idx)));
  };
  if (cfg.workers <= 1) {
    for (int i = 0; i < cfg.batch_queries; ++i) job(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < cfg.workers; ++w)
      pool.emplace_back([&, w] {
        for (int i = w; i < cfg.batch_queries; i += cfg.workers) job(i);
      });
    for (std::thread& th : pool) th.join();
  }
}

void format_double(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

void TrainConfig::validate() const {
  objective.validate();
  if (learning_rate < 0.0)
    throw std::invalid_argument("learning rate must be >= 0");
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (group_size < 2) throw std::invalid_argument("group size G must be >= 2");
  if (batch_queries < 1)
    throw std::invalid_argument("batch_queries must be >= 1");
  if (n_minibatch < 1) throw std::invalid_argument("n_minibatch must be >= 1");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
  if (refresh_per_minibatch && tempered_reg_sampling(objective.kind))
    throw std::invalid_argument(
        "per-minibatch schedule refresh is incompatible with "
        "tempered-sampled regularizers; their samples are drawn at the "
        "batch temperature");
}

TrainResult train(const Task& task, const TrainConfig& cfg,
                  const std::function<void(const MetricsRecord&)>& on_record,
                  std::ostream* diagnostics) {
  cfg.validate();
  const ObjectiveSpec& spec = cfg.objective;
  Policy params = task.make_policy(cfg.keying, cfg.last_k);
  Optimizer opt(cfg.optimizer, params.values().size());

  TrainResult result{{}, params};
  result.records.reserve(cfg.steps);

  double entropy = 0.0;
  double expected_reward = 0.0;
  std::vector<RolloutGroup> main_groups;
  std::vector<RolloutGroup> reg_groups;

  for (int step = 0; step < cfg.steps; ++step) {
    if (step % cfg.eval_every == 0) {
      entropy = exact_policy_entropy(params, task);
      expected_reward = exact_expected_reward(params, task, 1.0);
    }
    const double T = schedule_temperature(entropy, spec);
    const double schedule_T_main = uses_schedule(spec.kind) ? T : 1.0;

    sample_batch(params, task, cfg, step, schedule_T_main, T, main_groups,
                 reg_groups);

    long rewarded = 0;
    for (const RolloutGroup& g : main_groups)
      for (const Trajectory& t : g.trajectories) rewarded += t.reward;
    const double batch_accuracy =
        static_cast<double>(rewarded) /
        static_cast<double>(cfg.batch_queries * cfg.group_size);

    double alpha = 0.0;
    if (uses_alpha(spec.kind))
      alpha = spec.alpha_mode == AlphaMode::Fixed
                  ? spec.alpha
                  : adaptive_alpha(entropy, spec.h0, batch_accuracy).value;

    // Snapshot of pi_old so per-minibatch retempering stays anchored to the
    // sampling policy rather than the drifting iterate.
    Policy params_old = params;

    const int nmb = std::min(cfg.n_minibatch, cfg.batch_queries);
    std::vector<double> batch_grad(params.values().size(), 0.0);
    double clip_w = 0.0, rho_w = 0.0, max_rho = 0.0;
    long tokens = 0;
    for (int mb = 0; mb < nmb; ++mb) {
      const int lo = static_cast<int>(
          static_cast<long>(mb) * cfg.batch_queries / nmb);
      const int hi = static_cast<int>(
          static_cast<long>(mb + 1) * cfg.batch_queries / nmb);
      if (cfg.refresh_per_minibatch && mb > 0 && uses_schedule(spec.kind)) {
        const double h_now = exact_policy_entropy(params, task);
        const double t_now = schedule_temperature(h_now, spec);
        for (int i = lo; i < hi; ++i)
          retemper(params_old, main_groups[i], t_now);
      }
      std::span<const RolloutGroup> main_span(main_groups.data() + lo,
                                              hi - lo);
      std::span<const RolloutGroup> reg_span =
          tempered_reg_sampling(spec.kind)
              ? std::span<const RolloutGroup>(reg_groups.data() + lo, hi - lo)
              : main_span;
      GradientEstimate est =
          objective_gradient(params, main_span, reg_span, spec, alpha);
      bool finite = true;
      for (double g : est.grad)
        if (!std::isfinite(g)) finite = false;
      if (!finite) {
        if (diagnostics) {
          *diagnostics << "non-finite gradient at step " << step
                       << " minibatch " << mb << "\n";
          for (int i = lo; i < hi; ++i)
            dump_trajectories(*diagnostics, main_groups[i]);
        }
        throw TrainError("non-finite gradient at step " +
                         std::to_string(step));
      }
      for (std::size_t i = 0; i < batch_grad.size(); ++i)
        batch_grad[i] += est.grad[i] / nmb;
      clip_w += est.clip_fraction * est.token_count;
      rho_w += est.mean_rho * est.token_count;
      max_rho = std::max(max_rho, est.max_rho);
      tokens += est.token_count;
      opt.apply(params.values(), est.grad, cfg.learning_rate);
    }

    MetricsRecord rec;
    rec.step = step;
    rec.policy_entropy = entropy;
    rec.mean_reward = expected_reward;
    rec.batch_accuracy = batch_accuracy;
    rec.temperature_in_effect = uses_schedule(spec.kind) ? T : 1.0;
    rec.alpha_in_effect = alpha;
    double norm = 0.0;
    for (double g : batch_grad) norm += g * g;
    rec.grad_norm = std::sqrt(norm);
    rec.clip_fraction = tokens > 0 ? clip_w / tokens : 0.0;
    rec.mean_rho = tokens > 0 ? rho_w / tokens : 1.0;
    rec.max_rho = tokens > 0 ? max_rho : 1.0;
    result.records.push_back(rec);
    if (on_record) on_record(rec);
  }
  result.params = std::move(params);
  return result;
}

bool detect_collapse(std::span<const MetricsRecord> records, double floor,
                     int window) {
  if (window < 1 || static_cast<std::size_t>(window) > records.size())
    throw std::invalid_argument("window must lie in [1, |records|]");
  double sum = 0.0;
  for (std::size_t i = records.size() - window; i < records.size(); ++i)
    sum += records[i].policy_entropy;
  return sum / window < floor;
}

std::string metrics_csv_header() {
  return "step,policy_entropy,mean_reward,batch_accuracy,"
         "temperature_in_effect,alpha_in_effect,grad_norm,clip_fraction,"
         "mean_rho,max_rho";
}

void append_metrics_csv_row(std::ostream& out, const MetricsRecord& r) {
  out << r.step << ',';
  format_double(out, r.policy_entropy);
  out << ',';
  format_double(out, r.mean_reward);
  out << ',';
  format_double(out, r.batch_accuracy);
  out << ',';
  format_double(out, r.temperature_in_effect);
  out << ',';
  format_double(out, r.alpha_in_effect);
  out << ',';
  format_double(out, r.grad_norm);
  out << ',';
  format_double(out, r.clip_fraction);
  out << ',';
  format_double(out, r.mean_rho);
  out << ',';
  format_double(out, r.max_rho);
  out << '\n';
}

void write_metrics_csv(std::ostream& out,
                       std::span<const MetricsRecord> records) {
  out << metrics_csv_header() << '\n';
  for (const MetricsRecord& r : records) append_metrics_csv_row(out, r);
}

std::vector<MetricsRecord> read_metrics_csv(std::istream& in) {
  std::vector<MetricsRecord> out;
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header())
    throw std::runtime_error("bad metrics CSV header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRecord r;
    std::istringstream ls(line);
    std::string field;
    auto next = [&]() {
      if (!std::getline(ls, field, ','))
        throw std::runtime_error("short metrics CSV row");
      return field;
    };
    r.step = std::stoi(next());
    r.policy_entropy = std::stod(next());
    r.mean_reward = std::stod(next());
    r.batch_accuracy = std::stod(next());
    r.temperature_in_effect = std::stod(next());
    r.alpha_in_effect = std::stod(next());
    r.grad_norm = std::stod(next());
    r.clip_fraction = std::stod(next());
    r.mean_rho = std::stod(next());
    r.max_rho = std::stod(next());
    out.push_back(r);
  }
  return out;
}

TrainConfig train_config_from(const KeyValueConfig& cfg) {
  TrainConfig tc;
  auto str = [&](const char* key, const std::string& fb) {
    cfg.mark_used(key);
    return cfg.get_string(key, fb);
  };
  auto num = [&](const char* key, double fb) {
    cfg.mark_used(key);
    return cfg.get_double(key, fb);
  };
  auto integer = [&](const char* key, long long fb) {
    cfg.mark_used(key);
    return cfg.get_int(key, fb);
  };
  tc.task_name = str("run.task", tc.task_name);
  tc.objective.kind =
      objective_kind_from_string(str("run.objective", "grpo"));
  const std::string am = str("run.alpha_mode", "fixed");
  if (am == "fixed")
    tc.objective.alpha_mode = AlphaMode::Fixed;
  else if (am == "adaptive")
    tc.objective.alpha_mode = AlphaMode::Adaptive;
  else
    throw ConfigError("run.alpha_mode must be fixed or adaptive");
  tc.objective.alpha = num("run.alpha", tc.objective.alpha);
  tc.objective.epsilon = num("run.epsilon", tc.objective.epsilon);
  tc.objective.t_high = num("run.t_high", tc.objective.t_high);
  tc.objective.t_low = num("run.t_low", tc.objective.t_low);
  tc.objective.h0 = num("run.h0", tc.objective.h0);
  tc.objective.lambda = num("run.lambda", tc.objective.lambda);
  tc.group_size = static_cast<int>(integer("run.group_size", tc.group_size));
  tc.batch_queries =
      static_cast<int>(integer("run.batch_queries", tc.batch_queries));
  tc.steps = static_cast<int>(integer("run.steps", tc.steps));
  tc.learning_rate = num("run.learning_rate", tc.learning_rate);
  const std::string ok = str("run.optimizer", "sgd");
  if (ok == "sgd")
    tc.optimizer.kind = OptimizerKind::Sgd;
  else if (ok == "sgd-momentum")
    tc.optimizer.kind = OptimizerKind::SgdMomentum;
  else if (ok == "adaptive-moment")
    tc.optimizer.kind = OptimizerKind::AdaptiveMoment;
  else
    throw ConfigError("run.optimizer must be sgd, sgd-momentum or "
                      "adaptive-moment");
  tc.optimizer.momentum = num("run.momentum", tc.optimizer.momentum);
  tc.optimizer.beta1 = num("run.beta1", tc.optimizer.beta1);
  tc.optimizer.beta2 = num("run.beta2", tc.optimizer.beta2);
  tc.optimizer.eps_num = num("run.eps_num", tc.optimizer.eps_num);
  tc.seed = static_cast<std::uint64_t>(integer("run.seed", 1));
  tc.entropy_floor = num("run.entropy_floor", tc.entropy_floor);
  tc.eval_every = static_cast<int>(integer("run.eval_every", tc.eval_every));
  tc.n_minibatch =
      static_cast<int>(integer("run.n_minibatch", tc.n_minibatch));
  tc.workers = static_cast<int>(integer("run.workers", tc.workers));
  cfg.mark_used("run.refresh_per_minibatch");
  tc.refresh_per_minibatch =
      cfg.get_bool("run.refresh_per_minibatch", tc.refresh_per_minibatch);
  const std::string keying = str("run.keying", "full");
  if (keying == "full")
    tc.keying = ContextKeying::FullPrefix;
  else if (keying == "last_k")
    tc.keying = ContextKeying::LastK;
  else
    throw ConfigError("run.keying must be full or last_k");
  tc.last_k = static_cast<int>(integer("run.last_k", tc.last_k));
  return tc;
}

}  // namespace dcpo
