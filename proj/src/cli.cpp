#include "hddf/cli.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "hddf/errors.hpp"
#include "hddf/simulator.hpp"

namespace hddf {

namespace {

int worker_count(std::size_t n_tasks) {
  unsigned n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("HYBRID_DDF_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw ConfigError("HYBRID_DDF_THREADS must be a positive integer");
    }
    n = static_cast<unsigned>(v);
  }
  return static_cast<int>(std::min<std::size_t>(n, n_tasks));
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"Distributed hybrid-belief semantic SLAM simulator"};
  std::string scenario_path;
  std::string mode_str = "distributed";
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int runs = 1;
  double prune_ratio = -1.0;
  int samples = -1;
  bool quiet = false;
  app.add_option("--scenario", scenario_path, "Scenario JSON file")
      ->required();
  app.add_option("--mode", mode_str, "local|distributed|double-count|all")
      ->check(CLI::IsMember({"local", "distributed", "double-count", "all"}));
  app.add_option("--seed", seed, "Base seed; run i uses seed+i");
  app.add_option("--runs", runs, "Number of seeded runs per mode")
      ->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--prune-ratio", prune_ratio,
                 "Hypothesis pruning ratio override, in [0, 1)");
  app.add_option("--samples", samples,
                 "Monte Carlo sample count override (>= 1)");
  app.add_flag("--quiet", quiet, "Suppress progress output");

  std::vector<const char*> argv;
  argv.push_back("hddf_sim");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    ScenarioConfig cfg = load_scenario(scenario_path);
    if (prune_ratio >= 0.0) cfg.prune_ratio = prune_ratio;
    if (samples > 0) cfg.n_samples = samples;
    cfg.validate();

    std::vector<Mode> modes;
    if (mode_str == "all") {
      modes = {Mode::Local, Mode::Distributed, Mode::DoubleCount};
    } else if (mode_str == "local") {
      modes = {Mode::Local};
    } else if (mode_str == "distributed") {
      modes = {Mode::Distributed};
    } else {
      modes = {Mode::DoubleCount};
    }

    std::filesystem::create_directories(out_dir);

    struct Task {
      Mode mode;
      int run_index;
    };
    std::vector<Task> tasks;
    for (Mode m : modes) {
      for (int i = 0; i < runs; ++i) tasks.push_back({m, i});
    }
    std::vector<RunResult> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;
    auto work = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size() || failed.load()) break;
        try {
          results[i] = run(cfg, tasks[i].mode,
                           seed + static_cast<std::uint64_t>(
                                      tasks[i].run_index));
          if (!quiet) {
            std::lock_guard<std::mutex> lock(error_mutex);
            std::cerr << "done: mode=" << mode_name(tasks[i].mode)
                      << " run=" << tasks[i].run_index << "\n";
          }
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (first_error.empty()) first_error = e.what();
          failed.store(true);
        }
      }
    };
    const int n_workers = worker_count(tasks.size());
    if (n_workers <= 1) {
      work();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < n_workers; ++i) pool.emplace_back(work);
      for (auto& t : pool) t.join();
    }
    if (failed.load()) {
      std::cerr << "error: " << first_error << "\n";
      return 1;
    }

    std::vector<std::vector<MetricRow>> all_rows;
    std::map<std::string, double> wall_time;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      all_rows.push_back(results[i].rows());
      wall_time[mode_name(tasks[i].mode)] += results[i].wall_time_s;
    }

    const std::filesystem::path out_path(out_dir);
    if (modes.size() == 1) {
      std::vector<MetricRow> rows;
      for (const auto& rr : all_rows) {
        rows.insert(rows.end(), rr.begin(), rr.end());
      }
      write_metrics_csv((out_path / "metrics.csv").string(), rows);
    } else {
      for (Mode m : modes) {
        std::vector<MetricRow> rows;
        for (std::size_t i = 0; i < tasks.size(); ++i) {
          if (tasks[i].mode != m) continue;
          const auto rr = results[i].rows();
          rows.insert(rows.end(), rr.begin(), rr.end());
        }
        write_metrics_csv(
            (out_path / ("metrics_" + mode_name(m) + ".csv")).string(), rows);
      }
    }
    write_summary_json((out_path / "summary.json").string(),
                       aggregate_runs(all_rows), wall_time, seed, runs);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_main(args);
}

}  // namespace hddf
