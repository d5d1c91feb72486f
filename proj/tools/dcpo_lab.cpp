// dcpo_lab: experiment runner and verifier for the distribution-centric
// policy-optimization laboratory. Verbs: run, verify, plot, tasks.
// Exit codes: 0 success, 1 verification/runtime failure, 2 usage/config error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>

#include "dcpo/config.hpp"
#include "dcpo/svgplot.hpp"
#include "dcpo/task.hpp"
#include "dcpo/trainer.hpp"
#include "dcpo/verify.hpp"

namespace fs = std::filesystem;
using namespace dcpo;

namespace {

struct Variant {
  std::string label;
  TrainConfig config;
};

Task resolve_task(const std::string& name) {
  if (fs::exists(name)) return load_task_file(name);
  return find_task(name);
}

std::string default_out_root() {
  if (const char* env = std::getenv("DCPO_OUT")) return env;
  return "out";
}

double trailing_mean(std::span<const MetricsRecord> records, int window,
                     double MetricsRecord::* field) {
  const int w = std::min<int>(window, static_cast<int>(records.size()));
  double sum = 0.0;
  for (std::size_t i = records.size() - w; i < records.size(); ++i)
    sum += records[i].*field;
  return sum / w;
}

// Returns 0 on success, 1 on mid-run numeric failure (partial CSV kept).
int run_one(const Task& task, const Variant& var, const fs::path& dir,
            std::vector<MetricsRecord>& records_out) {
  fs::create_directories(dir);
  std::ofstream csv(dir / "metrics.csv");
  csv << metrics_csv_header() << '\n';
  csv.flush();
  TrainResult result{{}, task.make_policy()};
  try {
    std::ofstream diag(dir / "diagnostics.txt");
    result = train(task, var.config,
                   [&](const MetricsRecord& rec) {
                     append_metrics_csv_row(csv, rec);
                     csv.flush();
                   },
                   &diag);
  } catch (const TrainError& e) {
    std::cerr << "run '" << var.label << "' aborted: " << e.what() << "\n";
    return 1;
  }
  result.params.save_file((dir / "params.txt").string());
  std::ofstream summary(dir / "summary.txt");
  const int window = std::min<int>(50, var.config.steps);
  const MetricsRecord& last = result.records.back();
  summary << "label: " << var.label << '\n'
          << "task: " << task.name() << '\n'
          << "objective: " << to_string(var.config.objective.kind) << '\n'
          << "steps: " << var.config.steps << '\n'
          << "seed: " << var.config.seed << '\n'
          << "trailing_" << window << "_mean_entropy: "
          << trailing_mean(result.records, window,
                           &MetricsRecord::policy_entropy)
          << '\n'
          << "trailing_" << window << "_mean_reward: "
          << trailing_mean(result.records, window, &MetricsRecord::mean_reward)
          << '\n'
          << "collapsed: "
          << (detect_collapse(result.records, var.config.entropy_floor, window)
                  ? "true"
                  : "false")
          << '\n'
          << "final_entropy: " << last.policy_entropy << '\n'
          << "final_mean_reward: " << last.mean_reward << '\n';
  records_out = std::move(result.records);
  return 0;
}

int cmd_run(const std::string& config_path, long long seed_override,
            std::string out_override, bool parallel) {
  KeyValueConfig cfg;
  std::vector<Variant> variants;
  std::string task_name;
  try {
    cfg = KeyValueConfig::parse_file(config_path);
    TrainConfig base = train_config_from(cfg);
    cfg.mark_used("run.label");
    cfg.mark_used("run.out");
    std::string base_label =
        cfg.get_string("run.label", to_string(base.objective.kind));
    if (out_override.empty())
      out_override = cfg.get_string("run.out", default_out_root());

    // sweep.<i>.<key> overrides run.<key> for variant i.
    std::map<int, std::vector<std::pair<std::string, std::string>>> sweeps;
    for (const std::string& key : cfg.keys_with_prefix("sweep.")) {
      cfg.mark_used(key);
      const std::string rest = key.substr(6);
      const std::size_t dot = rest.find('.');
      if (dot == std::string::npos || dot == 0)
        throw ConfigError("line " + std::to_string(cfg.line_of(key)) +
                          ": malformed sweep key '" + key + "'");
      int idx;
      try {
        idx = std::stoi(rest.substr(0, dot));
      } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(cfg.line_of(key)) +
                          ": malformed sweep key '" + key + "'");
      }
      sweeps[idx].emplace_back(rest.substr(dot + 1), cfg.get_string(key));
    }
    const auto unknown = cfg.unused_keys();
    if (!unknown.empty())
      throw ConfigError("line " + std::to_string(cfg.line_of(unknown.front())) +
                        ": unknown config key '" + unknown.front() + "'");

    if (sweeps.empty()) {
      if (seed_override >= 0)
        base.seed = static_cast<std::uint64_t>(seed_override);
      variants.push_back({base_label, base});
    } else {
      for (const auto& [idx, overrides] : sweeps) {
        KeyValueConfig vc = cfg;
        std::string label = base_label + "-" + std::to_string(idx);
        for (const auto& [key, value] : overrides) {
          if (key == "label")
            label = value;
          else
            vc.set("run." + key, value);
        }
        Variant v{label, train_config_from(vc)};
        if (seed_override >= 0)
          v.config.seed = static_cast<std::uint64_t>(seed_override);
        variants.push_back(std::move(v));
      }
      for (std::size_t i = 0; i < variants.size(); ++i)
        for (std::size_t j = i + 1; j < variants.size(); ++j)
          if (variants[i].label == variants[j].label)
            throw ConfigError("duplicate sweep label '" + variants[i].label +
                              "'");
    }
    task_name = base.task_name;
    for (Variant& v : variants) {
      v.config.validate();
      if (v.config.task_name != task_name)
        throw ConfigError("sweep variants must share one task");
    }
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  Task task = resolve_task(task_name);
  const fs::path root = out_override;
  std::vector<std::vector<MetricsRecord>> all_records(variants.size());
  std::vector<int> codes(variants.size(), 0);
  auto job = [&](std::size_t i) {
    codes[i] = run_one(task, variants[i], root / variants[i].label,
                       all_records[i]);
  };
  if (parallel && variants.size() > 1) {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < variants.size(); ++i)
      pool.emplace_back(job, i);
    for (std::thread& t : pool) t.join();
  } else {
    for (std::size_t i = 0; i < variants.size(); ++i) job(i);
  }
  for (int c : codes)
    if (c != 0) return 1;

  if (variants.size() > 1) {
    std::ofstream table(root / "comparison.txt");
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-20s %-18s %14s %14s %10s\n",
                  "label", "objective", "mean_entropy", "mean_reward",
                  "collapsed");
    table << buf;
    std::vector<PlotSeries> series;
    for (std::size_t i = 0; i < variants.size(); ++i) {
      const auto& recs = all_records[i];
      const int window = std::min<int>(50, variants[i].config.steps);
      const bool collapsed =
          detect_collapse(recs, variants[i].config.entropy_floor, window);
      std::snprintf(buf, sizeof buf, "%-20s %-18s %14.6f %14.6f %10s\n",
                    variants[i].label.c_str(),
                    to_string(variants[i].config.objective.kind).c_str(),
                    trailing_mean(recs, window, &MetricsRecord::policy_entropy),
                    trailing_mean(recs, window, &MetricsRecord::mean_reward),
                    collapsed ? "true" : "false");
      table << buf;
      PlotSeries s;
      s.label = variants[i].label;
      for (const MetricsRecord& r : recs) {
        s.x.push_back(r.step);
        s.y.push_back(r.policy_entropy);
      }
      series.push_back(std::move(s));
    }
    std::ofstream svg(root / "entropy.svg");
    write_line_chart(svg, series, "policy entropy, task " + task.name(),
                     "step", "entropy");
    std::cout << "wrote " << (root / "comparison.txt").string() << " and "
              << (root / "entropy.svg").string() << "\n";
  }
  for (std::size_t i = 0; i < variants.size(); ++i)
    std::cout << "run '" << variants[i].label << "' -> "
              << (root / variants[i].label / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_verify(const std::string& suite, double t_high, double t_low,
               int trials, double lr, int cases, int samples,
               std::uint64_t seed) {
  std::vector<CheckResult> checks;
  auto extend = [&](std::vector<CheckResult> more) {
    checks.insert(checks.end(), more.begin(), more.end());
  };
  if (suite == "gradients" || suite == "all")
    extend(verify_gradients(seed, cases));
  if (suite == "identities" || suite == "all") extend(verify_identities(seed));
  if (suite == "direction" || suite == "all")
    extend(verify_direction(t_high, t_low, trials, lr, seed));
  if (suite == "mc-consistency" || suite == "all")
    extend(verify_mc_consistency(samples, seed));
  if (checks.empty()) {
    std::cerr << "unknown suite '" << suite
              << "' (gradients|identities|direction|mc-consistency|all)\n";
    return 2;
  }
  return report_checks(std::cout, checks) ? 0 : 1;
}

int cmd_plot(const std::vector<std::string>& csv_paths,
             const std::string& out_path) {
  std::vector<PlotSeries> series;
  for (const std::string& path : csv_paths) {
    std::ifstream in(path);
    if (!in) {
      std::cerr << "cannot open " << path << "\n";
      return 2;
    }
    std::vector<MetricsRecord> recs;
    try {
      recs = read_metrics_csv(in);
    } catch (const std::exception& e) {
      std::cerr << path << ": " << e.what() << "\n";
      return 2;
    }
    PlotSeries s;
    s.label = fs::path(path).stem().string();
    for (const MetricsRecord& r : recs) {
      s.x.push_back(r.step);
      s.y.push_back(r.policy_entropy);
    }
    series.push_back(std::move(s));
  }
  std::ofstream out(out_path);
  if (!out) {
    std::cerr << "cannot write " << out_path << "\n";
    return 2;
  }
  try {
    write_line_chart(out, series, "policy entropy", "step", "entropy");
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 0;
}

int cmd_tasks() {
  std::printf("%-12s %6s %4s %8s %8s %6s\n", "name", "vocab", "eos",
              "horizon", "queries", "refs");
  for (const Task& t : builtin_tasks()) {
    std::size_t refs = 0;
    for (int q : t.queries()) refs += t.references(q).size();
    std::printf("%-12s %6d %4d %8d %8zu %6zu\n", t.name().c_str(),
                t.vocab().size, t.vocab().eos, t.horizon(),
                t.queries().size(), refs);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distribution-centric policy optimization laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  long long seed_override = -1;
  std::string out_dir;
  bool parallel = false;
  CLI::App* run = app.add_subcommand("run", "execute a run or sweep");
  run->add_option("--config", config_path, "flat key-value config file")
      ->required();
  run->add_option("--seed", seed_override, "override run.seed");
  run->add_option("--out", out_dir, "output root (default $DCPO_OUT or ./out)");
  run->add_flag("--parallel", parallel, "run sweep variants in parallel");

  std::string suite = "all";
  double t_high = 1.5, t_low = 0.7, lr = 1e-3;
  int trials = 100, cases = 100, samples = 10000;
  std::uint64_t vseed = 1;
  CLI::App* verify = app.add_subcommand("verify", "run an oracle suite");
  verify->add_option("--suite", suite,
                     "gradients|identities|direction|mc-consistency|all");
  verify->add_option("--t-high", t_high, "exploratory temperature");
  verify->add_option("--t-low", t_low, "sharpening temperature");
  verify->add_option("--trials", trials, "random policies per direction");
  verify->add_option("--lr", lr, "direction-test step size");
  verify->add_option("--cases", cases, "finite-difference cases per family");
  verify->add_option("--samples", samples, "Monte-Carlo samples");
  verify->add_option("--seed", vseed, "suite seed");

  std::vector<std::string> csv_paths;
  std::string plot_out = "entropy.svg";
  CLI::App* plot = app.add_subcommand("plot", "entropy-vs-step line chart");
  plot->add_option("csvs", csv_paths, "metrics CSV files")->required();
  plot->add_option("--out", plot_out, "output SVG path");

  CLI::App* tasks = app.add_subcommand("tasks", "list builtin tasks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed())
      return cmd_run(config_path, seed_override, out_dir, parallel);
    if (verify->parsed())
      return cmd_verify(suite, t_high, t_low, trials, lr, cases, samples,
                        vseed);
    if (plot->parsed()) return cmd_plot(csv_paths, plot_out);
    if (tasks->parsed()) return cmd_tasks();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
