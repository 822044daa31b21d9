#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "alea/checkpoint.hpp"
#include "alea/conduit.hpp"
#include "alea/experiment.hpp"

namespace alea {

struct EngineOptions {
  int workers = 1;
  int team_size = 1;
  PoolBackend backend = PoolBackend::Threads;
  std::string outdir;  // empty: keep everything in memory, write no files

  uint64_t max_generations = 1000;     // engine-level safety cap per experiment
  uint64_t max_model_evaluations = 0;  // 0 = unlimited; checked before each generation
  double wall_clock_budget_s = 0.0;    // 0 = unlimited
  uint64_t session_generations = 0;    // 0 = unlimited; generations per run() call

  bool write_checkpoints = true;
  uint64_t checkpoint_retention = 0;  // 0 = keep all generation files
  bool verify_existing = false;       // compare re-derived generation files against disk

  uint64_t conduit_seed = 0;
  double crash_probability = 0.0;
  int poll_interval_ms = 100;
};

struct GenerationRecord {
  std::string experiment;
  uint64_t generation = 0;
  double progress = 0.0;
  uint64_t evaluations = 0;
};

// Drives one or more experiments over a shared worker pool. Experiments whose
// solver met a termination criterion come back Finished; experiments stopped
// by an engine budget stay Running and can be resumed from their last
// checkpoint. Budget stops and generation boundaries only ever coincide, so
// every checkpoint is a complete generation.
class Engine {
 public:
  explicit Engine(EngineOptions opt) : opt_(std::move(opt)) {}

  void run(const std::vector<Experiment*>& experiments) {
    session_start_ = std::chrono::steady_clock::now();
    history_.clear();

    ConduitOptions co;
    co.workers = opt_.workers;
    co.team_size = opt_.team_size;
    co.backend = opt_.backend;
    co.seed = opt_.conduit_seed;
    co.crash_probability = opt_.crash_probability;
    co.poll_interval_ms = opt_.poll_interval_ms;
    conduit_ = std::make_unique<Conduit>(co);

    ctxs_.clear();
    ctxs_.reserve(experiments.size());
    for (size_t i = 0; i < experiments.size(); ++i) {
      Ctx c;
      c.exp = experiments[i];
      c.index = static_cast<uint64_t>(i);
      c.next_sample = c.exp->evaluations();
      ctxs_.push_back(std::move(c));
    }

    for (Ctx& c : ctxs_) {
      if (c.exp->status() == ExperimentStatus::Finished) {
        c.done = true;
        continue;
      }
      conduit_->bind(c.index, c.exp->binding());
      c.bound = true;
      c.exp->set_status(ExperimentStatus::Running);
      prepare_output(c);
    }

    for (Ctx& c : ctxs_)
      if (!c.done) advance(c);

    while (true) {
      bool waiting = false;
      for (const Ctx& c : ctxs_)
        if (c.outstanding > 0) waiting = true;
      if (!waiting) break;
      for (const TaskResult& r : conduit_->wait()) route(r);
    }

    for (Ctx& c : ctxs_) release(c);
    makespan_ns_ = conduit_->now_ns();
  }

  Conduit& conduit() { return *conduit_; }
  const Conduit& conduit() const { return *conduit_; }
  int64_t makespan_ns() const { return makespan_ns_; }
  const std::vector<GenerationRecord>& history() const { return history_; }

  bool divergence() const { return divergence_; }
  const std::vector<std::string>& divergent_files() const { return divergent_; }

 private:
  struct Ctx {
    Experiment* exp = nullptr;
    uint64_t index = 0;
    std::vector<std::vector<double>> batch;
    std::vector<EvaluatedSample> results;
    uint64_t batch_base = 0;
    uint64_t next_sample = 0;
    size_t outstanding = 0;
    uint64_t batch_in_gen = 0;
    uint64_t session_gens = 0;
    bool draining = false;
    bool done = false;
    bool bound = false;
  };

  std::filesystem::path exp_dir(const Experiment& e) const {
    return std::filesystem::path(opt_.outdir) / e.name();
  }

  void prepare_output(Ctx& c) {
    if (opt_.outdir.empty()) return;
    const auto dir = exp_dir(*c.exp);
    std::filesystem::create_directories(dir);
    const auto summary = dir / "summary.csv";
    if (c.exp->generation() == 0 || !std::filesystem::exists(summary)) {
      std::ofstream out(summary, std::ios::trunc);
      out << "generation,best_or_rho,evaluations,wall_time_s\n";
      if (!out) throw CheckpointError(CheckpointError::Kind::IoFailure, summary.string());
    }
  }

  double elapsed_s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - session_start_).count();
  }

  void advance(Ctx& c) {
    try {
      while (true) {
        Experiment& e = *c.exp;
        Solver& s = e.solver();
        if (e.status() == ExperimentStatus::Finished) {
          release(c);
          return;
        }
        if (s.terminated()) {
          e.set_termination(s.termination_reason(), s.stopped_short());
          e.set_status(ExperimentStatus::Finished);
          release(c);
          return;
        }
        if (c.batch_in_gen == 0 && check_budgets(c)) return;
        auto batch = s.next_batch();
        if (batch.empty()) {
          s.finish_generation();
          c.batch_in_gen = 0;
          ++c.session_gens;
          boundary(c);
          continue;
        }
        submit(c, std::move(batch));
        ++c.batch_in_gen;
        return;
      }
    } catch (const SolverError& err) {
      fail(c, err.what());
    } catch (const ProblemError& err) {
      fail(c, err.what());
    }
  }

  // True when an engine budget pauses the experiment at this generation
  // boundary. The experiment stays Running so a later session can pick it up.
  bool check_budgets(Ctx& c) {
    Experiment& e = *c.exp;
    const Solver& s = e.solver();
    const char* reason = nullptr;
    if (opt_.session_generations > 0 && c.session_gens >= opt_.session_generations)
      reason = "Session Generations";
    else if (opt_.wall_clock_budget_s > 0.0 && elapsed_s() >= opt_.wall_clock_budget_s)
      reason = "Wall Clock Budget";
    else if (opt_.max_generations > 0 && s.generation() >= opt_.max_generations)
      reason = "Generation Budget";
    else if (opt_.max_model_evaluations > 0 &&
             e.evaluations() + s.population_size() > opt_.max_model_evaluations)
      reason = "Evaluation Budget";
    if (!reason) return false;
    e.set_termination(reason, true);
    release(c);
    return true;
  }

  void submit(Ctx& c, std::vector<std::vector<double>> batch) {
    const VariableSpace& vars = c.exp->config().variables;
    std::vector<Task> tasks;
    tasks.reserve(batch.size());
    c.batch_base = c.next_sample;
    for (const auto& p : batch) {
      Task t;
      t.experiment = c.index;
      t.sample = c.next_sample++;
      t.params = p;
      t.named.reserve(p.size());
      for (size_t d = 0; d < p.size(); ++d) t.named.emplace_back(vars[d].name, p[d]);
      tasks.push_back(std::move(t));
    }
    c.results.assign(batch.size(), EvaluatedSample{});
    for (auto& ev : c.results) ev.failed = true;
    c.batch = std::move(batch);
    c.outstanding = tasks.size();
    c.exp->add_evaluations(tasks.size());
    conduit_->submit(c.index, std::move(tasks));
  }

  void route(const TaskResult& r) {
    if (r.experiment >= ctxs_.size()) throw Error("result for unknown experiment");
    Ctx& c = ctxs_[r.experiment];
    if (c.outstanding == 0) throw Error("unexpected result for idle experiment");
    --c.outstanding;
    if (c.draining) {
      if (c.outstanding == 0) release(c);
      return;
    }
    const uint64_t slot = r.sample - c.batch_base;
    if (slot >= c.results.size()) throw Error("result sample id out of range");
    EvaluatedSample& ev = c.results[slot];
    if (ev.sample == r.sample && !ev.params.empty()) throw Error("duplicate result for sample");
    ev.sample = r.sample;
    ev.params = c.batch[slot];
    if (r.ok) {
      try {
        ev.dq = c.exp->derive(ev.params, r.result);
        ev.failed = false;
      } catch (const ProblemError& err) {
        fail(c, err.what());
        return;
      }
    }
    if (c.outstanding == 0) {
      try {
        c.exp->solver().absorb(c.results);
      } catch (const SolverError& err) {
        fail(c, err.what());
        return;
      }
      c.batch.clear();
      c.results.clear();
      advance(c);
    }
  }

  void boundary(Ctx& c) {
    Experiment& e = *c.exp;
    Solver& s = e.solver();
    if (s.terminated()) {
      e.set_termination(s.termination_reason(), s.stopped_short());
      e.set_status(ExperimentStatus::Finished);
    }
    history_.push_back({e.name(), s.generation(), s.progress(), e.evaluations()});
    if (opt_.outdir.empty()) return;
    const auto dir = exp_dir(e);
    {
      char row[160];
      std::snprintf(row, sizeof row, "%llu,%s,%llu,%.3f\n",
                    static_cast<unsigned long long>(s.generation()), format_real(s.progress()).c_str(),
                    static_cast<unsigned long long>(e.evaluations()), elapsed_s());
      std::ofstream out(dir / "summary.csv", std::ios::app);
      out << row;
      if (!out) throw CheckpointError(CheckpointError::Kind::IoFailure, (dir / "summary.csv").string());
    }
    if (!opt_.write_checkpoints) return;
    const uint64_t index = s.generation() - 1;
    const auto file = dir / checkpoint_filename(index);
    if (opt_.verify_existing && std::filesystem::exists(file)) {
      const std::string fresh = checkpoint_encode(e.serialize_state());
      if (fresh != read_file(file)) {
        divergence_ = true;
        divergent_.push_back(file.string());
      }
      return;
    }
    checkpoint_write(dir, index, e.serialize_state());
    if (opt_.checkpoint_retention > 0 && index >= opt_.checkpoint_retention) {
      std::error_code ec;
      std::filesystem::remove(dir / checkpoint_filename(index - opt_.checkpoint_retention), ec);
    }
  }

  void fail(Ctx& c, const std::string& err) {
    c.exp->mark_failed(err);
    if (c.outstanding > 0) {
      c.draining = true;  // discard whatever is still in flight, then unbind
      c.batch.clear();
      c.results.clear();
      return;
    }
    release(c);
  }

  void release(Ctx& c) {
    if (c.done) return;
    c.done = true;
    c.draining = false;
    if (c.bound && c.outstanding == 0) {
      conduit_->unbind(c.index);
      c.bound = false;
    }
  }

  EngineOptions opt_;
  std::unique_ptr<Conduit> conduit_;
  std::vector<Ctx> ctxs_;
  std::vector<GenerationRecord> history_;
  std::chrono::steady_clock::time_point session_start_{};
  int64_t makespan_ns_ = 0;
  bool divergence_ = false;
  std::vector<std::string> divergent_;
};

}  // namespace alea
