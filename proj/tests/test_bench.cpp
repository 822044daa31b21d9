#include "alea/bench.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace alea;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path dir;
  TempDir() {
    static std::atomic<int> counter{0};
    dir = fs::temp_directory_path() /
          ("alea_bench_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

}  // namespace

TEST(WaitModel, DrawsArePureFunctionsOfSeedAndSample) {
  const WaitModel u = WaitModel::uniform(0.2, 0.5);
  for (uint64_t s : {0ull, 1ull, 77ull}) {
    const double a = u.draw(42, s);
    EXPECT_DOUBLE_EQ(a, u.draw(42, s));  // no hidden state
    EXPECT_GE(a, 0.2);
    EXPECT_LT(a, 0.5);
    EXPECT_NE(a, u.draw(43, s));
  }
  EXPECT_NE(u.draw(42, 0), u.draw(42, 1));

  const WaitModel f = WaitModel::fixed(0.1);
  EXPECT_DOUBLE_EQ(f.draw(1, 0), 0.1);
  EXPECT_DOUBLE_EQ(f.draw(9, 123), 0.1);
  EXPECT_EQ(f.draw_ns(9, 123), 100000000);
}

TEST(Bench, SimulatedFixedWaitIsPerfectlyEfficient) {
  BenchConfig cfg;  // one Fixed(0.1) experiment, 8 workers, 32 samples/generation
  const EfficiencyReport rep = bench_run(cfg);

  EXPECT_EQ(rep.workers, 8);
  EXPECT_EQ(rep.samples, 160u);
  EXPECT_EQ(rep.makespan_ns, 2000000000);  // 5 generations x 4 waves x 0.1 s
  EXPECT_EQ(rep.ideal_ns, 16000000000);
  EXPECT_EQ(rep.busy_ns, rep.ideal_ns);
  EXPECT_EQ(rep.e_ideal, 1.0);  // exact: integer nanoseconds, perfect waves
  EXPECT_EQ(rep.e_busy, 1.0);
  EXPECT_EQ(rep.timeline.size(), 160u);
}

TEST(Bench, SimulatedBusyTimeMatchesTheDrawnWaits) {
  BenchConfig cfg;
  cfg.workers = 4;
  cfg.generations = 3;
  cfg.experiments = {{"skew", 7, WaitModel::uniform(0.1, 1.0)}};
  const EfficiencyReport rep = bench_run(cfg);

  EXPECT_EQ(rep.samples, 3u * 16u);
  // Virtual busy intervals reproduce each drawn duration exactly.
  EXPECT_EQ(rep.busy_ns, rep.ideal_ns);
  EXPECT_DOUBLE_EQ(rep.e_busy, rep.e_ideal);
  EXPECT_LT(rep.e_ideal, 1.0);  // imbalance costs something
  EXPECT_GT(rep.e_ideal, 0.3);
  EXPECT_GE(rep.makespan_ns * rep.workers, rep.ideal_ns);

  int64_t total = 0;
  for (const auto& iv : rep.timeline) {
    EXPECT_GE(iv.start_ns, 0);
    EXPECT_GT(iv.end_ns, iv.start_ns);
    EXPECT_GE(iv.worker, 0);
    EXPECT_LT(iv.worker, 4);
    total += iv.end_ns - iv.start_ns;
  }
  EXPECT_EQ(total, rep.busy_ns);
}

TEST(Bench, PopulationScalesWithTheWorkerCount) {
  BenchConfig cfg;
  cfg.workers = 4;
  cfg.population_factor = 2.5;
  cfg.generations = 2;
  const EfficiencyReport rep = bench_run(cfg);
  EXPECT_EQ(rep.samples, 20u);  // llround(2.5 * 4) * 2

  BenchConfig fixed_pop = cfg;
  fixed_pop.population = 6;
  EXPECT_EQ(bench_run(fixed_pop).samples, 12u);
}

TEST(Bench, SharedPoolBeatsSequentialEnginesOnImbalancedMixes) {
  BenchConfig cfg;
  cfg.workers = 8;
  cfg.generations = 5;
  cfg.population_factor = 1.0;
  cfg.experiments = default_imbalanced_specs(5, 42);

  cfg.scheduling = SchedulingMode::Single;
  const EfficiencyReport single = bench_run(cfg);
  cfg.scheduling = SchedulingMode::Multiple;
  const EfficiencyReport multiple = bench_run(cfg);

  // Identical workloads: the wait draws ignore scheduling entirely.
  EXPECT_EQ(single.samples, multiple.samples);
  EXPECT_EQ(single.ideal_ns, multiple.ideal_ns);

  EXPECT_GT(multiple.e_busy, single.e_busy);
  EXPECT_LT(multiple.makespan_ns, single.makespan_ns);
  EXPECT_EQ(single.experiment_names.size(), 5u);
  EXPECT_EQ(single.timeline.size(), single.samples);
  EXPECT_EQ(multiple.timeline.size(), multiple.samples);

  // Sequential timelines are offset so experiments never overlap in time.
  int64_t prev_end = 0;
  for (size_t i = 0; i < 5; ++i) {
    int64_t lo = INT64_MAX, hi = 0;
    for (const auto& iv : single.timeline) {
      if (iv.experiment != i) continue;
      lo = std::min(lo, iv.start_ns);
      hi = std::max(hi, iv.end_ns);
    }
    EXPECT_GE(lo, prev_end);
    prev_end = hi;
  }
}

TEST(Bench, TimelineExportIsAParsableCsv) {
  TempDir t;
  BenchConfig cfg;
  cfg.workers = 2;
  cfg.generations = 2;
  cfg.population = 4;
  cfg.experiments = {{"alpha", 3, WaitModel::fixed(0.05)}};
  const EfficiencyReport rep = bench_run(cfg);

  const fs::path csv = t.dir / "timeline.csv";
  timeline_export(rep, csv);
  std::ifstream in(csv);
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "worker,start_s,end_s,experiment");
  size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string worker, start, end, name;
    ASSERT_TRUE(std::getline(ss, worker, ','));
    ASSERT_TRUE(std::getline(ss, start, ','));
    ASSERT_TRUE(std::getline(ss, end, ','));
    ASSERT_TRUE(std::getline(ss, name, ','));
    EXPECT_LE(std::stod(start), std::stod(end));
    EXPECT_EQ(name, "alpha");
  }
  EXPECT_EQ(rows, rep.samples);
}

TEST(Bench, PlotScriptIsSelfContained) {
  TempDir t;
  const fs::path py = t.dir / "plot_timeline.py";
  write_timeline_plot_script(py);
  const std::string text = read_file(py);
  EXPECT_EQ(text.rfind("#!/usr/bin/env python3", 0), 0u);
  EXPECT_NE(text.find("broken_barh"), std::string::npos);
  EXPECT_NE(text.find("worker"), std::string::npos);
}

TEST(Bench, RealClockFixedWaitStaysEfficient) {
  BenchConfig cfg;
  cfg.workers = 4;
  cfg.generations = 2;
  cfg.population = 8;
  cfg.clock = ClockMode::Real;
  cfg.experiments = {{"sleepy", 11, WaitModel::fixed(0.02)}};
  const EfficiencyReport rep = bench_run(cfg);

  EXPECT_EQ(rep.samples, 16u);
  EXPECT_GT(rep.e_ideal, 0.5);  // generous: loaded CI machines stall threads
  EXPECT_LE(rep.e_ideal, 1.05);
  EXPECT_GE(rep.busy_ns, rep.ideal_ns);  // real waits can only be longer than asked
  EXPECT_EQ(rep.timeline.size(), 16u);
}

TEST(Bench, WeakScalingSweepReportsBothSchedulingModes) {
  BenchConfig base;
  base.generations = 3;
  const auto points = weak_scaling_sweep(base, {4, 8}, 3);

  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(points[0].workers, 4);
  EXPECT_EQ(points[1].workers, 8);
  for (const auto& p : points) {
    EXPECT_GT(p.single_min, 0.0);
    EXPECT_LE(p.single_min, p.single_median);
    EXPECT_LE(p.single_median, p.single_max);
    EXPECT_LE(p.single_max, 1.0);
    EXPECT_GT(p.multiple_min, 0.0);
    EXPECT_LE(p.multiple_min, p.multiple_median);
    EXPECT_LE(p.multiple_median, p.multiple_max);
    EXPECT_LE(p.multiple_max, 1.0);
    EXPECT_GT(p.multiple_median, p.single_median);
  }
}
