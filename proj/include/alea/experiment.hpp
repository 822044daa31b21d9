#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "alea/checkpoint.hpp"
#include "alea/cmaes.hpp"
#include "alea/config.hpp"
#include "alea/model.hpp"
#include "alea/problem.hpp"
#include "alea/tmcmc.hpp"

namespace alea {

enum class ExperimentStatus { Initialized, Running, Finished };

inline const char* experiment_status_name(ExperimentStatus s) {
  switch (s) {
    case ExperimentStatus::Initialized: return "Initialized";
    case ExperimentStatus::Running: return "Running";
    case ExperimentStatus::Finished: return "Finished";
  }
  return "?";
}

struct ExperimentConfig {
  std::string name = "experiment";
  uint64_t seed = 42;
  Problem problem;
  VariableSpace variables;
  std::vector<Distribution> distributions;
  std::string solver_type;
  CmaesSettings cmaes;
  TmcmcSettings tmcmc;
  Json effective;  // validated configuration with defaults filled in
};

// Full validation pass over a raw configuration tree: every module consumes
// the keys it understands, anything left over is an UnknownKey error.
inline ExperimentConfig validate_experiment_config(ConfigTree t) {
  ExperimentConfig c;
  c.name = t.get_string_or("/Name", "experiment");
  if (c.name.empty() || c.name.find('/') != std::string::npos)
    throw ConfigError(ConfigError::Kind::Invalid, "Name", "must be a non-empty path-safe string");
  c.seed = static_cast<uint64_t>(t.get_int_or("/Random Seed", 42));
  c.distributions = parse_distributions(t);
  c.variables = VariableSpace::parse(t, c.distributions);
  c.problem = Problem::parse(t);
  c.solver_type = t.get_string("/Solver/Type");
  if (c.solver_type == "CMAES") {
    c.cmaes = CmaesSettings::parse(t);
  } else if (c.solver_type == "TMCMC") {
    c.tmcmc = TmcmcSettings::parse(t);
    if (c.problem.type != ProblemType::BayesianInference)
      throw ConfigError(ConfigError::Kind::Invalid, "Solver/Type",
                        "TMCMC requires a Bayesian Inference problem");
  } else {
    throw ConfigError(ConfigError::Kind::TypeMismatch, "Solver/Type",
                      "unsupported solver " + c.solver_type);
  }
  t.require_all_consumed();
  c.effective = t.effective();
  return c;
}

// One unit of work for the engine: configuration, solver state, and the rng
// streams that feed it. Not movable; the solver holds pointers into the
// config, so experiments live behind unique_ptr.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    streams_.emplace("Solver", RngStream(cfg_.seed, "Solver"));
    for (const auto& d : cfg_.distributions) {
      const std::string key = "Distribution/" + d.name();
      streams_.emplace(key, RngStream(cfg_.seed, key));
    }
    build_solver();
  }

  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  static std::unique_ptr<Experiment> from_json(Json j) {
    return std::make_unique<Experiment>(validate_experiment_config(ConfigTree::from_json(std::move(j))));
  }

  static std::unique_ptr<Experiment> from_file(const std::filesystem::path& path) {
    return std::make_unique<Experiment>(validate_experiment_config(ConfigTree::load(path)));
  }

  // Rebuild an experiment exactly as it was at a generation boundary.
  static std::unique_ptr<Experiment> resume_state(const Json& state) {
    auto e = std::make_unique<Experiment>(
        validate_experiment_config(ConfigTree::from_json(state.at("Config"))));
    e->load_state(state);
    return e;
  }

  static std::unique_ptr<Experiment> resume_file(const std::filesystem::path& checkpoint) {
    return resume_state(checkpoint_read(checkpoint));
  }

  // Attach an in-process model, overriding whatever the config declares.
  void bind_model(InProcessModel fn) { override_fn_ = std::move(fn); }
  void set_sim_duration(std::function<double(const Task&)> fn) { sim_duration_ = std::move(fn); }

  ModelBinding binding() const {
    ModelBinding b;
    if (override_fn_) {
      b.fn = override_fn_;
    } else if (cfg_.problem.model.mode == ModelSpec::Mode::Concurrent) {
      ConcurrentModel m;
      m.command = cfg_.problem.model.command;
      m.result_file = cfg_.problem.model.result_file;
      m.timeout_s = cfg_.problem.model.timeout_s;
      b.command = std::move(m);
    } else {
      throw Error("experiment " + cfg_.name +
                  " has no model bound; bind one programmatically or configure a Concurrent command");
    }
    b.sim_duration = sim_duration_;
    return b;
  }

  bool has_model() const {
    return static_cast<bool>(override_fn_) || cfg_.problem.model.mode == ModelSpec::Mode::Concurrent;
  }

  const ExperimentConfig& config() const { return cfg_; }
  const std::string& name() const { return cfg_.name; }
  uint64_t seed() const { return cfg_.seed; }
  Solver& solver() { return *solver_; }
  const Solver& solver() const { return *solver_; }
  StreamSet& streams() { return streams_; }

  ExperimentStatus status() const { return status_; }
  void set_status(ExperimentStatus s) { status_ = s; }
  uint64_t generation() const { return solver_->generation(); }
  uint64_t evaluations() const { return evaluations_; }
  void add_evaluations(uint64_t n) { evaluations_ += n; }

  const std::string& termination_reason() const { return termination_reason_; }
  bool stopped_short() const { return stopped_short_; }
  void set_termination(const std::string& reason, bool short_stop) {
    termination_reason_ = reason;
    stopped_short_ = short_stop;
  }

  bool failed() const { return failed_; }
  const std::string& error() const { return error_; }
  void mark_failed(const std::string& err) {
    failed_ = true;
    error_ = err;
    status_ = ExperimentStatus::Finished;
    termination_reason_ = "Error";
    stopped_short_ = true;
  }

  DerivedQuantity derive(std::span<const double> params, const nlohmann::json& result) const {
    return derive_quantity(cfg_.problem, params, result, cfg_.variables, cfg_.distributions);
  }

  // Complete snapshot at a generation boundary. Deliberately contains no
  // wall-clock data or absolute paths: (seed, config) fully determine these
  // bytes, which is what makes interrupted and straight runs comparable.
  Json serialize_state() const {
    Json streams = Json::object();
    for (const auto& [k, s] : streams_) streams[k] = s.serialize();
    Json j;
    j["Config"] = cfg_.effective;
    j["Name"] = cfg_.name;
    j["Seed"] = cfg_.seed;
    j["Generation"] = solver_->generation();
    j["Evaluations"] = evaluations_;
    j["Status"] = experiment_status_name(status_);
    j["Termination Reason"] = termination_reason_;
    j["Stopped Short"] = stopped_short_;
    j["Rng Streams"] = streams;
    j["Solver"] = solver_->serialize();
    const BestResult& b = solver_->best();
    j["Best"] = {{"Valid", b.valid}, {"Value", b.value}, {"Parameters", b.params}};
    return j;
  }

  void load_state(const Json& state) {
    evaluations_ = state.at("Evaluations").get<uint64_t>();
    const std::string st = state.at("Status").get<std::string>();
    status_ = st == "Finished" ? ExperimentStatus::Finished
              : st == "Running" ? ExperimentStatus::Running
                                : ExperimentStatus::Initialized;
    termination_reason_ = state.value("Termination Reason", std::string());
    stopped_short_ = state.value("Stopped Short", false);
    const Json& streams = state.at("Rng Streams");
    for (auto& [k, s] : streams_) {
      if (!streams.contains(k))
        throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint, "missing rng stream " + k);
      s = RngStream::deserialize(streams.at(k));
    }
    solver_->deserialize(state.at("Solver"));
  }

 private:
  void build_solver() {
    if (cfg_.solver_type == "CMAES") {
      solver_ = std::make_unique<Cmaes>(cfg_.cmaes, &cfg_.variables, &cfg_.distributions,
                                        &streams_.at("Solver"));
    } else {
      solver_ = std::make_unique<Tmcmc>(cfg_.tmcmc, &cfg_.variables, &cfg_.distributions,
                                        &streams_.at("Solver"), &streams_);
    }
  }

  ExperimentConfig cfg_;
  StreamSet streams_;
  std::unique_ptr<Solver> solver_;
  InProcessModel override_fn_;
  std::function<double(const Task&)> sim_duration_;

  ExperimentStatus status_ = ExperimentStatus::Initialized;
  uint64_t evaluations_ = 0;
  std::string termination_reason_;
  bool stopped_short_ = false;
  bool failed_ = false;
  std::string error_;
};

}  // namespace alea
