#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "alea/experiment.hpp"

namespace alea {

inline const std::vector<std::string>& builtin_model_names() {
  static const std::vector<std::string> names = {
      "Builtin/Sphere", "Builtin/ShiftedParabola", "Builtin/Rosenbrock",
      "Builtin/GaussMean", "Builtin/LogDensityStdNormal"};
  return names;
}

inline bool is_builtin_model(const std::string& name) {
  for (const auto& n : builtin_model_names())
    if (n == name) return true;
  return false;
}

// Resolve a named in-process model. GaussMean needs the experiment around it:
// it emits one prediction per reference point.
inline InProcessModel builtin_model(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "Builtin/Sphere") {
    return [](ModelSample& ms) {
      double s = 0.0;
      for (double x : ms.params()) s += x * x;
      ms.set(kResultObjective, -s);
    };
  }
  if (name == "Builtin/ShiftedParabola") {
    return [](ModelSample& ms) {
      double s = 0.0;
      for (double x : ms.params()) s += (x - 3.0) * (x - 3.0);
      ms.set(kResultObjective, -s);
    };
  }
  if (name == "Builtin/Rosenbrock") {
    return [](ModelSample& ms) {
      const auto& x = ms.params();
      double s = 0.0;
      for (size_t i = 0; i + 1 < x.size(); ++i) {
        const double a = x[i + 1] - x[i] * x[i];
        const double b = 1.0 - x[i];
        s += 100.0 * a * a + b * b;
      }
      ms.set(kResultObjective, -s);
    };
  }
  if (name == "Builtin/GaussMean") {
    const size_t n = cfg.problem.reference_data.size();
    return [n](ModelSample& ms) {
      const double theta = ms.params()[0];
      ms.set(kResultEvaluations, std::vector<double>(n, theta));
      ms.set(kResultStdDev, std::vector<double>(n, 1.0));
    };
  }
  if (name == "Builtin/LogDensityStdNormal") {
    return [](ModelSample& ms) {
      double s = 0.0;
      for (double x : ms.params()) s += x * x;
      const double n = static_cast<double>(ms.params().size());
      ms.set(kResultLogDensity, -0.5 * s - n * kHalfLog2Pi);
    };
  }
  std::string known;
  for (const auto& k : builtin_model_names()) known += (known.empty() ? "" : ", ") + k;
  throw ConfigError(ConfigError::Kind::Invalid, "Problem/Computational Model",
                    "unknown model " + name + " (available: " + known + ")");
}

}  // namespace alea
