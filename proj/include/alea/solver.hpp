#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "alea/common.hpp"
#include "alea/distribution.hpp"
#include "alea/problem.hpp"
#include "alea/rng.hpp"
#include "alea/variable.hpp"

namespace alea {

struct EvaluatedSample {
  uint64_t sample = 0;
  std::vector<double> params;
  DerivedQuantity dq;
  bool failed = false;  // evaluation never produced a result (crash, parse error, exception)
};

struct BestResult {
  bool valid = false;
  double value = kLogZero;
  std::vector<double> params;
};

inline double logsumexp(std::span<const double> xs) {
  double m = kLogZero;
  for (double x : xs)
    if (x > m) m = x;
  if (is_log_zero(m)) return kLogZero;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// A population solver advances in generations. Within one generation it may
// need several evaluation rounds: next_batch() returns candidate parameter
// vectors until it returns empty, each batch is answered through absorb(),
// and finish_generation() folds the results into the state. Checkpoints are
// taken only at generation boundaries.
class Solver {
 public:
  virtual ~Solver() = default;

  virtual std::string type() const = 0;
  virtual size_t population_size() const = 0;

  virtual std::vector<std::vector<double>> next_batch() = 0;
  virtual void absorb(const std::vector<EvaluatedSample>& evals) = 0;
  virtual void finish_generation() = 0;

  virtual bool terminated() const = 0;
  virtual std::string termination_reason() const = 0;
  // True when the run stopped without meeting a convergence criterion.
  virtual bool stopped_short() const { return false; }

  virtual uint64_t generation() const = 0;
  virtual double progress() const = 0;
  virtual const BestResult& best() const = 0;

  virtual nlohmann::json serialize() const = 0;
  virtual void deserialize(const nlohmann::json& j) = 0;
};

}  // namespace alea
