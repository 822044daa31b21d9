#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "alea/bench.hpp"
#include "alea/engine.hpp"
#include "alea/registry.hpp"

namespace alea {
namespace cli_detail {

// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage,
// 3 checkpoint self-check divergence.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;

struct EngineFlags {
  std::string outdir = "runs";
  int workers = 1;
  int team_size = 1;
  std::string backend;  // empty: pick by execution mode
  uint64_t max_generations = 1000;
  uint64_t max_evaluations = 0;
  double wall_clock_s = 0.0;
  uint64_t retention = 0;
  double crash_probability = 0.0;
  int poll_interval_ms = 100;
};

inline void add_engine_flags(CLI::App* cmd, EngineFlags& f) {
  cmd->add_option("--outdir", f.outdir, "Directory for checkpoints and summaries");
  cmd->add_option("--workers,-w", f.workers, "Worker pool size")->check(CLI::PositiveNumber);
  cmd->add_option("--team-size", f.team_size, "Processes per worker team")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--backend", f.backend, "Worker pool backend")
      ->check(CLI::IsMember({"threads", "processes", "simulated"}));
  cmd->add_option("--max-evaluations", f.max_evaluations, "Stop before exceeding this many model runs");
  cmd->add_option("--wall-clock", f.wall_clock_s, "Wall clock budget in seconds");
  cmd->add_option("--retention", f.retention, "Keep only the newest K generation files");
  cmd->add_option("--crash-probability", f.crash_probability, "Injected crash rate (simulated pool)")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--poll-interval", f.poll_interval_ms, "Pool wakeup guard in milliseconds")
      ->check(CLI::PositiveNumber);
}

inline PoolBackend pick_backend(const EngineFlags& f, const Experiment& e) {
  if (f.backend == "threads") return PoolBackend::Threads;
  if (f.backend == "processes") return PoolBackend::Processes;
  if (f.backend == "simulated") return PoolBackend::Simulated;
  return e.config().problem.model.mode == ModelSpec::Mode::Concurrent ? PoolBackend::Processes
                                                                      : PoolBackend::Threads;
}

inline EngineOptions engine_options(const EngineFlags& f, const Experiment& e) {
  EngineOptions o;
  o.workers = f.workers;
  o.team_size = f.team_size;
  o.backend = pick_backend(f, e);
  o.outdir = f.outdir;
  o.max_generations = f.max_generations;
  o.max_model_evaluations = f.max_evaluations;
  o.wall_clock_budget_s = f.wall_clock_s;
  o.checkpoint_retention = f.retention;
  o.crash_probability = f.crash_probability;
  o.poll_interval_ms = f.poll_interval_ms;
  return o;
}

inline void resolve_binding(Experiment& e) {
  const ExperimentConfig& cfg = e.config();
  if (cfg.problem.model.mode == ModelSpec::Mode::Concurrent) return;
  if (cfg.problem.model.model.empty())
    throw ConfigError(ConfigError::Kind::MissingRequired, "Problem/Computational Model",
                      "an In Process run needs a named model");
  e.bind_model(builtin_model(cfg.problem.model.model, cfg));
}

inline uint64_t seed_from_env_or(const Json& j) {
  if (const char* env = std::getenv("KORALI_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (!end || *end != '\0' || end == env)
      throw ConfigError(ConfigError::Kind::Invalid, "KORALI_SEED",
                        "must be an unsigned integer, got " + std::string(env));
    return v;
  }
  if (j.contains("Random Seed") && j.at("Random Seed").is_number_unsigned())
    return j.at("Random Seed").get<uint64_t>();
  if (j.contains("Random Seed") && j.at("Random Seed").is_number_integer())
    return static_cast<uint64_t>(j.at("Random Seed").get<int64_t>());
  return 42;
}

inline void print_outcome(const Experiment& e, std::ostream& os) {
  os << e.name() << ": " << experiment_status_name(e.status());
  if (!e.termination_reason().empty()) os << " (" << e.termination_reason() << ")";
  os << " generations=" << e.generation() << " evaluations=" << e.evaluations();
  const BestResult& b = e.solver().best();
  if (b.valid) {
    os << " best=" << format_real(b.value) << " at";
    for (double p : b.params) os << " " << format_real(p);
  }
  if (const auto* t = dynamic_cast<const Tmcmc*>(&e.solver()))
    os << " log_evidence=" << format_real(t->log_evidence());
  os << "\n";
}

inline int finish_run(Experiment& e, Engine& engine, bool self_check) {
  print_outcome(e, std::cout);
  if (e.failed()) {
    std::cerr << "error: " << e.error() << "\n";
    return kExitRuntime;
  }
  if (self_check) {
    if (engine.divergence()) {
      for (const auto& f : engine.divergent_files())
        std::cerr << "divergence: recomputed state differs from " << f << "\n";
      return kExitDivergence;
    }
    std::cout << "self-check passed: recomputed generations match on-disk state\n";
  }
  return kExitOk;
}

inline WaitModel parse_wait(const std::string& spec) {
  const auto colon = spec.find(':');
  try {
    if (colon == std::string::npos) return WaitModel::fixed(std::stod(spec));
    const double lo = std::stod(spec.substr(0, colon));
    const double hi = std::stod(spec.substr(colon + 1));
    if (!(hi >= lo) || lo < 0.0) throw std::invalid_argument(spec);
    return WaitModel::uniform(lo, hi);
  } catch (const std::exception&) {
    throw ConfigError(ConfigError::Kind::Invalid, "--wait",
                      "expected SECONDS or LO:HI, got " + spec);
  }
}

inline void print_report(const EfficiencyReport& r, const std::string& label, std::ostream& os) {
  char line[256];
  std::snprintf(line, sizeof line,
                "scheduling=%s workers=%d samples=%llu makespan=%.3fs busy=%.3fs ideal=%.3fs "
                "e_ideal=%.4f e_busy=%.4f\n",
                label.c_str(), r.workers, static_cast<unsigned long long>(r.samples),
                static_cast<double>(r.makespan_ns) / 1e9, static_cast<double>(r.busy_ns) / 1e9,
                static_cast<double>(r.ideal_ns) / 1e9, r.e_ideal, r.e_busy);
  os << line;
}

}  // namespace cli_detail

inline int cli_main(int argc, const char* const* argv) {
  using namespace cli_detail;

  CLI::App app{"Distributed sampling engine for optimization and Bayesian inference"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment from a configuration file");
  std::string run_config;
  EngineFlags run_flags;
  uint64_t run_seed = 0;
  uint64_t run_session = 0;
  bool run_no_checkpoints = false;
  run->add_option("config", run_config, "Experiment configuration (JSON)")->required();
  add_engine_flags(run, run_flags);
  run->add_option("--max-generations", run_flags.max_generations, "Total generation cap");
  run->add_option("--session-generations", run_session, "Generations to run before pausing");
  auto* seed_opt = run->add_option("--seed", run_seed, "Override the configured random seed");
  run->add_flag("--no-checkpoints", run_no_checkpoints, "Skip writing generation files");

  // resume
  auto* resume = app.add_subcommand("resume", "Continue an experiment from a checkpoint");
  std::string resume_target;
  EngineFlags resume_flags;
  std::string resume_generations;
  bool resume_self_check = false;
  resume->add_option("checkpoint", resume_target,
                     "Experiment directory or a specific generation file")
      ->required();
  add_engine_flags(resume, resume_flags);
  resume->add_option("--generations", resume_generations,
                     "Total generation cap, or +N to run N more generations");
  resume->add_flag("--self-check", resume_self_check,
                   "Recompute existing generations and compare byte-for-byte");

  // validate
  auto* validate = app.add_subcommand("validate", "Validate a configuration file and exit");
  std::string validate_config;
  validate->add_option("config", validate_config, "Experiment configuration (JSON)")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "Measure worker pool efficiency with timed no-op models");
  int bench_workers = 8;
  int bench_team = 1;
  uint64_t bench_generations = 5;
  int bench_experiments = 1;
  uint64_t bench_population = 0;
  double bench_factor = 4.0;
  std::string bench_clock = "sim";
  std::vector<std::string> bench_sched = {"multiple"};
  std::string bench_wait;
  uint64_t bench_seed = 42;
  std::string bench_timeline;
  std::vector<int> bench_sweep;
  int bench_reps = 3;
  bench->add_option("--workers,-w", bench_workers, "Worker pool size")->check(CLI::PositiveNumber);
  bench->add_option("--team-size", bench_team, "Processes per worker team")
      ->check(CLI::PositiveNumber);
  bench->add_option("--generations", bench_generations, "Generations per experiment")
      ->check(CLI::PositiveNumber);
  bench->add_option("--experiments", bench_experiments, "Number of concurrent experiments")
      ->check(CLI::PositiveNumber);
  bench->add_option("--population", bench_population, "Samples per generation (0: factor * workers)");
  bench->add_option("--population-factor", bench_factor, "Samples per generation per worker")
      ->check(CLI::PositiveNumber);
  bench->add_option("--clock", bench_clock, "real: threads actually sleep, sim: virtual time")
      ->check(CLI::IsMember({"real", "sim", "simulated"}));
  bench->add_option("--scheduling", bench_sched,
                    "single (experiments run back to back), multiple (shared pool), or both")
      ->expected(1, 2)
      ->check(CLI::IsMember({"single", "multiple"}));
  bench->add_option("--wait", bench_wait, "Per-sample wait: SECONDS or LO:HI uniform");
  bench->add_option("--seed", bench_seed, "Base seed for wait draws");
  bench->add_option("--timeline", bench_timeline, "Write worker occupancy CSV here");
  bench->add_option("--sweep", bench_sweep, "Worker counts for a weak scaling sweep")
      ->delimiter(',');
  bench->add_option("--repetitions", bench_reps, "Repetitions per sweep point")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*validate) {
      ExperimentConfig cfg = validate_experiment_config(ConfigTree::load(validate_config));
      std::cout << "ok: " << cfg.name << " solver=" << cfg.solver_type
                << " variables=" << cfg.variables.size() << "\n";
      return kExitOk;
    }

    if (*run) {
      Json j = Json::parse(read_file(run_config));
      if (!j.is_object())
        throw ConfigError(ConfigError::Kind::TypeMismatch, "", "configuration must be a JSON object");
      j["Random Seed"] = seed_opt->count() > 0 ? run_seed : seed_from_env_or(j);
      auto exp = Experiment::from_json(std::move(j));
      resolve_binding(*exp);
      EngineOptions eo = engine_options(run_flags, *exp);
      eo.session_generations = run_session;
      eo.write_checkpoints = !run_no_checkpoints;
      Engine engine(eo);
      engine.run({exp.get()});
      return finish_run(*exp, engine, false);
    }

    if (*resume) {
      namespace fs = std::filesystem;
      fs::path target(resume_target);
      fs::path file;
      if (fs::is_directory(target)) {
        auto latest = latest_checkpoint(target);
        if (!latest)
          throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint,
                                "no latest checkpoint under " + target.string());
        file = *latest;
      } else {
        file = target;
      }
      std::unique_ptr<Experiment> exp;
      if (resume_self_check) {
        // Replay from generation zero so every existing file is recomputed
        // and compared; a plain resume would skip past them.
        const Json state = checkpoint_decode(read_file(file));
        if (!state.contains("Config"))
          throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint,
                                "checkpoint has no Config section: " + file.string());
        exp = Experiment::from_json(state.at("Config"));
      } else {
        exp = Experiment::resume_file(file);
      }
      resolve_binding(*exp);
      resume_flags.outdir = file.parent_path().parent_path().string();
      if (resume_flags.outdir.empty()) resume_flags.outdir = ".";
      EngineOptions eo = engine_options(resume_flags, *exp);
      if (!resume_generations.empty()) {
        if (resume_generations[0] == '+')
          eo.session_generations = std::stoull(resume_generations.substr(1));
        else
          eo.max_generations = std::stoull(resume_generations);
      }
      eo.verify_existing = resume_self_check;
      Engine engine(eo);
      engine.run({exp.get()});
      return finish_run(*exp, engine, resume_self_check);
    }

    // bench
    BenchConfig base;
    base.workers = bench_workers;
    base.team_size = bench_team;
    base.generations = bench_generations;
    base.population = bench_population;
    base.population_factor = bench_factor;
    base.clock = bench_clock == "real" ? ClockMode::Real : ClockMode::Simulated;
    base.seed = bench_seed;
    if (bench_experiments > 1) base.experiments = default_imbalanced_specs(bench_experiments, bench_seed);
    if (!bench_wait.empty()) {
      const WaitModel w = parse_wait(bench_wait);
      if (base.experiments.empty()) base.experiments = default_imbalanced_specs(1, bench_seed);
      for (auto& s : base.experiments) s.wait = w;
    }

    if (!bench_sweep.empty()) {
      const auto points = weak_scaling_sweep(base, bench_sweep, bench_reps);
      std::cout << "workers,single_median,single_min,single_max,multiple_median,multiple_min,"
                   "multiple_max\n";
      char line[256];
      for (const auto& p : points) {
        std::snprintf(line, sizeof line, "%d,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n", p.workers,
                      p.single_median, p.single_min, p.single_max, p.multiple_median,
                      p.multiple_min, p.multiple_max);
        std::cout << line;
      }
      return kExitOk;
    }

    for (const std::string& mode : bench_sched) {
      BenchConfig cfg = base;
      cfg.scheduling = mode == "single" ? SchedulingMode::Single : SchedulingMode::Multiple;
      const EfficiencyReport rep = bench_run(cfg);
      print_report(rep, mode, std::cout);
      if (!bench_timeline.empty()) {
        std::filesystem::path csv(bench_timeline);
        if (bench_sched.size() > 1) {
          auto stem = csv.stem().string() + "_" + mode;
          csv = csv.parent_path() / (stem + csv.extension().string());
        }
        timeline_export(rep, csv);
        write_timeline_plot_script(csv.parent_path() / "plot_timeline.py");
        std::cout << "timeline: " << csv.string() << "\n";
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == CheckpointError::Kind::IoFailure ? kExitRuntime : kExitConfig;
  } catch (const Json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace alea
