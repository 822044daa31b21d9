#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "alea/common.hpp"
#include "alea/config.hpp"
#include "alea/distribution.hpp"
#include "alea/variable.hpp"

namespace alea {

// Keys a computational model writes into its result document.
inline constexpr const char* kResultObjective = "F(x)";
inline constexpr const char* kResultLogDensity = "logP(x)";
inline constexpr const char* kResultEvaluations = "Reference Evaluations";
inline constexpr const char* kResultStdDev = "Standard Deviation";

enum class ProblemType { Optimization, Sampling, BayesianInference };

inline const char* problem_type_name(ProblemType t) {
  switch (t) {
    case ProblemType::Optimization: return "Optimization";
    case ProblemType::Sampling: return "Sampling";
    case ProblemType::BayesianInference: return "Bayesian Inference";
  }
  return "?";
}

// How the model is executed. In-process models are looked up in a registry
// (or bound programmatically); concurrent models are external commands run
// per sample with variable values substituted into the argv template.
struct ModelSpec {
  enum class Mode { InProcess, Concurrent };
  Mode mode = Mode::InProcess;
  std::string model;        // registry name, may be empty for programmatic bindings
  std::string command;      // argv template, Concurrent only
  std::string result_file;  // if set, result is read from this file instead of stdout
  double timeout_s = 0.0;   // 0 = no timeout
};

struct Problem {
  ProblemType type = ProblemType::Optimization;
  std::vector<double> reference_data;  // Bayesian only
  std::string sigma_variable = "Sigma";
  ModelSpec model;

  static Problem parse(ConfigTree& t) {
    Problem p;
    const std::string type = t.get_string("/Problem/Type");
    if (type == "Optimization") p.type = ProblemType::Optimization;
    else if (type == "Sampling") p.type = ProblemType::Sampling;
    else if (type == "Bayesian Inference") p.type = ProblemType::BayesianInference;
    else
      throw ConfigError(ConfigError::Kind::TypeMismatch, "Problem/Type", "unsupported problem type " + type);

    const std::string mode = t.get_string_or("/Problem/Execution Mode", "In Process");
    if (mode == "In Process") {
      p.model.mode = ModelSpec::Mode::InProcess;
      p.model.model = t.get_string_or("/Problem/Computational Model", "");
    } else if (mode == "Concurrent") {
      p.model.mode = ModelSpec::Mode::Concurrent;
      p.model.command = t.get_string("/Problem/Command");
      p.model.result_file = t.get_string_or("/Problem/Result File", "");
      p.model.timeout_s = t.get_real_or("/Problem/Timeout", 0.0);
    } else {
      throw ConfigError(ConfigError::Kind::TypeMismatch, "Problem/Execution Mode",
                        "expected In Process or Concurrent");
    }

    if (p.type == ProblemType::BayesianInference) {
      p.reference_data = t.get_real_array("/Problem/Reference Data");
      if (p.reference_data.empty())
        throw ConfigError(ConfigError::Kind::Invalid, "Problem/Reference Data", "must not be empty");
      const std::string lik = t.get_string_or("/Problem/Likelihood Model", "Normal");
      if (lik != "Normal")
        throw ConfigError(ConfigError::Kind::TypeMismatch, "Problem/Likelihood Model",
                          "unsupported likelihood " + lik);
      p.sigma_variable = t.get_string_or("/Problem/Standard Deviation Variable", "Sigma");
    }
    return p;
  }
};

// Independent Gaussian observation noise around the model predictions.
// Structural violations (length mismatch) throw; bad values (non-finite
// entries, non-positive deviations) yield the log-zero sentinel so a single
// rotten sample cannot abort a run.
inline double log_likelihood_normal(std::span<const double> data, std::span<const double> evals,
                                    std::span<const double> sdevs) {
  if (data.size() != evals.size() || data.size() != sdevs.size())
    throw ProblemError(ProblemError::Kind::LengthMismatch,
                       "data " + std::to_string(data.size()) + ", evaluations " + std::to_string(evals.size()) +
                           ", deviations " + std::to_string(sdevs.size()));
  double sum = 0.0;
  for (size_t i = 0; i < data.size(); ++i) {
    const double y = data[i], f = evals[i], s = sdevs[i];
    if (!std::isfinite(y) || !std::isfinite(f) || !std::isfinite(s) || !(s > 0.0)) return kLogZero;
    const double z = (y - f) / s;
    sum += -0.5 * z * z - std::log(s) - kHalfLog2Pi;
  }
  return std::isfinite(sum) ? sum : kLogZero;
}

// Sum of prior log densities over all variables that declare one, with hard
// bound truncation on top.
inline double log_prior(std::span<const double> params, const VariableSpace& vs,
                        const std::vector<Distribution>& dists) {
  double sum = 0.0;
  for (size_t i = 0; i < vs.size(); ++i) {
    const Variable& v = vs[i];
    const double x = params[i];
    if (v.lower_bound && x < *v.lower_bound) return kLogZero;
    if (v.upper_bound && x > *v.upper_bound) return kLogZero;
    if (v.prior_name) {
      if (v.prior_index < 0)
        throw ProblemError(ProblemError::Kind::UnresolvedPrior, v.name);
      const double lp = dists[static_cast<size_t>(v.prior_index)].log_pdf(x);
      if (is_log_zero(lp)) return kLogZero;
      sum += lp;
    }
  }
  return sum;
}

struct DerivedQuantity {
  double value = kLogZero;           // the quantity the solver consumes
  double log_likelihood = kLogZero;  // Bayesian split, equals value for the rest
  double log_prior = 0.0;
};

inline double result_number(const nlohmann::json& result, const char* key) {
  if (!result.is_object() || !result.contains(key) || !result.at(key).is_number())
    throw ProblemError(ProblemError::Kind::MissingResultKey, key);
  return result.at(key).get<double>();
}

inline std::vector<double> result_vector(const nlohmann::json& result, const char* key) {
  if (!result.is_object() || !result.contains(key) || !result.at(key).is_array())
    throw ProblemError(ProblemError::Kind::MissingResultKey, key);
  std::vector<double> out;
  out.reserve(result.at(key).size());
  for (const auto& e : result.at(key)) {
    if (!e.is_number()) throw ProblemError(ProblemError::Kind::MissingResultKey, std::string(key) + " entry");
    out.push_back(e.get<double>());
  }
  return out;
}

// Turns a raw model result into the scalar the solver consumes. The value is
// always the exact sum log_likelihood + log_prior, so downstream splits
// recompose without drift.
inline DerivedQuantity derive_quantity(const Problem& problem, std::span<const double> params,
                                       const nlohmann::json& result, const VariableSpace& vs,
                                       const std::vector<Distribution>& dists) {
  DerivedQuantity dq;
  switch (problem.type) {
    case ProblemType::Optimization:
    case ProblemType::Sampling: {
      const char* key = problem.type == ProblemType::Optimization ? kResultObjective : kResultLogDensity;
      double v = result_number(result, key);
      if (!std::isfinite(v) || is_log_zero(v)) v = kLogZero;
      std::vector<double> p(params.begin(), params.end());
      if (!vs.in_bounds(p)) v = kLogZero;
      dq.log_likelihood = v;
      dq.log_prior = 0.0;
      dq.value = dq.log_likelihood + dq.log_prior;
      return dq;
    }
    case ProblemType::BayesianInference: {
      dq.log_prior = log_prior(params, vs, dists);
      std::vector<double> evals = result_vector(result, kResultEvaluations);
      if (evals.size() != problem.reference_data.size())
        throw ProblemError(ProblemError::Kind::LengthMismatch,
                           std::string(kResultEvaluations) + " has " + std::to_string(evals.size()) +
                               " entries, reference data has " + std::to_string(problem.reference_data.size()));
      std::vector<double> sdevs;
      if (result.is_object() && result.contains(kResultStdDev)) {
        sdevs = result_vector(result, kResultStdDev);
        if (sdevs.size() != problem.reference_data.size())
          throw ProblemError(ProblemError::Kind::LengthMismatch,
                             std::string(kResultStdDev) + " has " + std::to_string(sdevs.size()) +
                                 " entries, reference data has " +
                                 std::to_string(problem.reference_data.size()));
      } else {
        const int idx = vs.index_of(problem.sigma_variable);
        if (idx < 0) throw ProblemError(ProblemError::Kind::MissingResultKey, kResultStdDev);
        sdevs.assign(problem.reference_data.size(), params[static_cast<size_t>(idx)]);
      }
      dq.log_likelihood = log_likelihood_normal(problem.reference_data, evals, sdevs);
      dq.value = dq.log_likelihood + dq.log_prior;
      return dq;
    }
  }
  return dq;
}

}  // namespace alea
