#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "alea/engine.hpp"

namespace alea {

// Per-sample wait time, drawn as a pure function of (seed, sample ordinal).
// The draw does not depend on worker assignment or arrival order, so the same
// experiment produces the same workload under any scheduling policy.
struct WaitModel {
  double lo = 0.0;
  double hi = 0.0;

  static WaitModel fixed(double t) { return {t, t}; }
  static WaitModel uniform(double lo, double hi) { return {lo, hi}; }

  double draw(uint64_t seed, uint64_t sample) const {
    if (!(hi > lo)) return lo;
    const uint64_t x = mix64(mix64(seed ^ (sample + 0x9e3779b97f4a7c15ull)));
    const double u = (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

  int64_t draw_ns(uint64_t seed, uint64_t sample) const {
    return std::llround(draw(seed, sample) * 1e9);
  }
};

enum class ClockMode { Real, Simulated };
enum class SchedulingMode { Single, Multiple };

struct BenchExperimentSpec {
  std::string name;
  uint64_t seed = 0;
  WaitModel wait;
};

struct BenchConfig {
  int workers = 8;
  int team_size = 1;
  uint64_t generations = 5;
  uint64_t population = 0;  // 0: population_factor * workers
  double population_factor = 4.0;
  ClockMode clock = ClockMode::Simulated;
  SchedulingMode scheduling = SchedulingMode::Multiple;
  uint64_t seed = 42;
  std::vector<BenchExperimentSpec> experiments;  // empty: one balanced experiment
};

struct EfficiencyReport {
  int workers = 0;
  uint64_t samples = 0;
  int64_t makespan_ns = 0;
  int64_t busy_ns = 0;
  int64_t ideal_ns = 0;
  double e_ideal = 0.0;  // ideal work / (workers * makespan)
  double e_busy = 0.0;   // recorded busy time / (workers * makespan)
  std::vector<BusyInterval> timeline;
  std::vector<std::string> experiment_names;
};

// Alternating long and short jobs; the long/short mean ratio is 2.5.
inline std::vector<BenchExperimentSpec> default_imbalanced_specs(int count, uint64_t base_seed) {
  std::vector<BenchExperimentSpec> specs;
  for (int i = 0; i < count; ++i) {
    BenchExperimentSpec s;
    s.name = "wait" + std::to_string(i);
    s.seed = mix64(base_seed + static_cast<uint64_t>(i) + 1);
    s.wait = (i % 2 == 0) ? WaitModel::uniform(0.5, 1.25) : WaitModel::uniform(0.2, 0.5);
    specs.push_back(std::move(s));
  }
  return specs;
}

inline std::unique_ptr<Experiment> make_wait_experiment(const BenchExperimentSpec& spec,
                                                        uint64_t population, uint64_t generations,
                                                        ClockMode clock) {
  Json j;
  j["Name"] = spec.name;
  j["Random Seed"] = spec.seed;
  j["Problem"] = {{"Type", "Optimization"}};
  j["Variables"] = Json::array(
      {{{"Name", "x"}, {"Initial Value", 0.0}, {"Initial Standard Deviation", 1.0}}});
  j["Solver"] = {{"Type", "CMAES"},
                 {"Population Size", population},
                 {"Max Generations", generations}};
  auto exp = Experiment::from_json(std::move(j));
  const WaitModel wait = spec.wait;
  const uint64_t seed = spec.seed;
  if (clock == ClockMode::Real) {
    exp->bind_model([wait, seed](ModelSample& ms) {
      std::this_thread::sleep_for(std::chrono::nanoseconds(wait.draw_ns(seed, ms.id())));
      const double x = ms.params()[0];
      ms.set(kResultObjective, -x * x);
    });
  } else {
    exp->bind_model([](ModelSample& ms) {
      const double x = ms.params()[0];
      ms.set(kResultObjective, -x * x);
    });
    exp->set_sim_duration([wait, seed](const Task& t) { return wait.draw(seed, t.sample); });
  }
  return exp;
}

inline EfficiencyReport bench_run(const BenchConfig& cfg) {
  std::vector<BenchExperimentSpec> specs = cfg.experiments;
  if (specs.empty()) {
    BenchExperimentSpec s;
    s.name = "wait0";
    s.seed = mix64(cfg.seed + 1);
    s.wait = WaitModel::fixed(0.1);
    specs.push_back(std::move(s));
  }
  const uint64_t population =
      cfg.population > 0
          ? cfg.population
          : static_cast<uint64_t>(std::llround(cfg.population_factor * cfg.workers));

  std::vector<std::unique_ptr<Experiment>> exps;
  exps.reserve(specs.size());
  for (const auto& s : specs)
    exps.push_back(make_wait_experiment(s, population, cfg.generations, cfg.clock));

  EngineOptions eo;
  eo.workers = cfg.workers;
  eo.team_size = cfg.team_size;
  eo.backend = cfg.clock == ClockMode::Real ? PoolBackend::Threads : PoolBackend::Simulated;
  eo.max_generations = 0;
  eo.poll_interval_ms = 5;

  EfficiencyReport rep;
  rep.workers = cfg.workers;
  for (const auto& s : specs) rep.experiment_names.push_back(s.name);

  if (cfg.scheduling == SchedulingMode::Multiple) {
    Engine engine(eo);
    std::vector<Experiment*> ptrs;
    for (auto& e : exps) ptrs.push_back(e.get());
    engine.run(ptrs);
    rep.makespan_ns = engine.makespan_ns();
    rep.timeline = engine.conduit().busy_intervals();
  } else {
    int64_t offset = 0;
    for (size_t i = 0; i < exps.size(); ++i) {
      Engine engine(eo);
      engine.run({exps[i].get()});
      for (BusyInterval iv : engine.conduit().busy_intervals()) {
        iv.start_ns += offset;
        iv.end_ns += offset;
        iv.experiment = static_cast<uint64_t>(i);
        rep.timeline.push_back(iv);
      }
      offset += engine.makespan_ns();
    }
    rep.makespan_ns = offset;
  }

  for (const BusyInterval& iv : rep.timeline) rep.busy_ns += iv.end_ns - iv.start_ns;
  for (size_t i = 0; i < exps.size(); ++i) {
    const uint64_t evals = exps[i]->evaluations();
    rep.samples += evals;
    for (uint64_t s = 0; s < evals; ++s) rep.ideal_ns += specs[i].wait.draw_ns(specs[i].seed, s);
  }
  const double denom = static_cast<double>(rep.workers) * static_cast<double>(rep.makespan_ns);
  if (denom > 0.0) {
    rep.e_ideal = static_cast<double>(rep.ideal_ns) / denom;
    rep.e_busy = static_cast<double>(rep.busy_ns) / denom;
  }
  return rep;
}

inline void timeline_export(const EfficiencyReport& rep, const std::filesystem::path& csv_path) {
  std::string out = "worker,start_s,end_s,experiment\n";
  char row[160];
  for (const BusyInterval& iv : rep.timeline) {
    const std::string& name = iv.experiment < rep.experiment_names.size()
                                  ? rep.experiment_names[iv.experiment]
                                  : std::to_string(iv.experiment);
    std::snprintf(row, sizeof row, "%d,%.9f,%.9f,%s\n", iv.worker,
                  static_cast<double>(iv.start_ns) / 1e9, static_cast<double>(iv.end_ns) / 1e9,
                  name.c_str());
    out += row;
  }
  write_file_atomic(csv_path, out);
}

inline void write_timeline_plot_script(const std::filesystem::path& py_path) {
  write_file_atomic(py_path, R"(#!/usr/bin/env python3
"""Render a worker occupancy chart from a timeline CSV (worker,start_s,end_s,experiment)."""
import csv
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "timeline.csv"
out = sys.argv[2] if len(sys.argv) > 2 else "timeline.png"

rows = []
with open(path) as f:
    for r in csv.DictReader(f):
        rows.append((int(r["worker"]), float(r["start_s"]), float(r["end_s"]), r["experiment"]))

if not rows:
    sys.exit("no intervals in " + path)

names = sorted({r[3] for r in rows})
cmap = plt.get_cmap("tab10")
color = {n: cmap(i % 10) for i, n in enumerate(names)}

fig, ax = plt.subplots(figsize=(10, 0.4 * (max(r[0] for r in rows) + 2) + 1))
for w, s, e, n in rows:
    ax.broken_barh([(s, e - s)], (w - 0.4, 0.8), facecolors=color[n], edgecolor="none")
ax.set_xlabel("time [s]")
ax.set_ylabel("worker")
ax.set_yticks(sorted({r[0] for r in rows}))
handles = [plt.Rectangle((0, 0), 1, 1, color=color[n]) for n in names]
ax.legend(handles, names, loc="upper right", fontsize=8)
fig.tight_layout()
fig.savefig(out, dpi=150)
print(out)
)");
}

struct SweepPoint {
  int workers = 0;
  double single_median = 0.0;
  double single_min = 0.0;
  double single_max = 0.0;
  double multiple_median = 0.0;
  double multiple_min = 0.0;
  double multiple_max = 0.0;
};

namespace detail {
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

// Weak scaling: per-generation work grows with the worker count while the
// experiment mix stays fixed. Each repetition reseeds the waits.
inline std::vector<SweepPoint> weak_scaling_sweep(const BenchConfig& base,
                                                  const std::vector<int>& worker_counts,
                                                  int repetitions) {
  std::vector<SweepPoint> points;
  for (int workers : worker_counts) {
    std::vector<double> single, multiple;
    for (int rep = 0; rep < repetitions; ++rep) {
      BenchConfig cfg = base;
      cfg.workers = workers;
      cfg.population = 0;
      if (cfg.experiments.empty()) cfg.experiments = default_imbalanced_specs(5, cfg.seed);
      for (size_t i = 0; i < cfg.experiments.size(); ++i)
        cfg.experiments[i].seed =
            mix64(cfg.seed ^ (static_cast<uint64_t>(workers) * 0x100000001b3ull +
                              static_cast<uint64_t>(rep) * 8191ull + i));
      cfg.scheduling = SchedulingMode::Single;
      single.push_back(bench_run(cfg).e_busy);
      cfg.scheduling = SchedulingMode::Multiple;
      multiple.push_back(bench_run(cfg).e_busy);
    }
    SweepPoint p;
    p.workers = workers;
    p.single_median = detail::median(single);
    p.single_min = *std::min_element(single.begin(), single.end());
    p.single_max = *std::max_element(single.begin(), single.end());
    p.multiple_median = detail::median(multiple);
    p.multiple_min = *std::min_element(multiple.begin(), multiple.end());
    p.multiple_max = *std::max_element(multiple.begin(), multiple.end());
    points.push_back(p);
  }
  return points;
}

}  // namespace alea
