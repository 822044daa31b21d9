#pragma once

#include <optional>
#include <string>
#include <vector>

#include "alea/common.hpp"
#include "alea/config.hpp"
#include "alea/distribution.hpp"

namespace alea {

struct Variable {
  std::string name;
  std::optional<double> lower_bound;
  std::optional<double> upper_bound;
  std::optional<std::string> prior_name;
  std::optional<double> initial_value;
  std::optional<double> initial_sigma;
  int prior_index = -1;  // resolved against the distribution table
};

// The ordered set of problem variables plus their resolved priors.
class VariableSpace {
 public:
  static VariableSpace parse(ConfigTree& t, const std::vector<Distribution>& dists) {
    VariableSpace vs;
    const size_t n = t.array_size("/Variables");
    if (n == 0) throw ConfigError(ConfigError::Kind::MissingRequired, "Variables");
    for (size_t i = 0; i < n; ++i) {
      const std::string base = "/Variables/" + std::to_string(i);
      Variable v;
      v.name = t.get_string(base + "/Name");
      v.lower_bound = t.get_real_opt(base + "/Lower Bound");
      v.upper_bound = t.get_real_opt(base + "/Upper Bound");
      v.prior_name = t.get_string_opt(base + "/Prior Distribution");
      v.initial_value = t.get_real_opt(base + "/Initial Value");
      v.initial_sigma = t.get_real_opt(base + "/Initial Standard Deviation");
      if (v.lower_bound && v.upper_bound && !(*v.lower_bound < *v.upper_bound))
        throw ConfigError(ConfigError::Kind::Invalid, ConfigTree::display(base),
                          "Lower Bound must be below Upper Bound");
      if (v.initial_sigma && !(*v.initial_sigma > 0.0))
        throw ConfigError(ConfigError::Kind::Invalid, ConfigTree::display(base + "/Initial Standard Deviation"),
                          "must be positive");
      if (v.prior_name) {
        for (size_t d = 0; d < dists.size(); ++d)
          if (dists[d].name() == *v.prior_name) v.prior_index = static_cast<int>(d);
        if (v.prior_index < 0)
          throw ProblemError(ProblemError::Kind::UnresolvedPrior,
                             v.name + " references unknown distribution " + *v.prior_name);
      }
      vs.vars_.push_back(std::move(v));
    }
    for (size_t i = 0; i < vs.vars_.size(); ++i)
      for (size_t j = i + 1; j < vs.vars_.size(); ++j)
        if (vs.vars_[i].name == vs.vars_[j].name)
          throw ConfigError(ConfigError::Kind::Invalid, "Variables/" + std::to_string(j) + "/Name",
                            "duplicate variable name " + vs.vars_[j].name);
    return vs;
  }

  size_t size() const { return vars_.size(); }
  const Variable& operator[](size_t i) const { return vars_[i]; }
  const std::vector<Variable>& all() const { return vars_; }

  int index_of(const std::string& name) const {
    for (size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  bool in_bounds(const std::vector<double>& params) const {
    for (size_t i = 0; i < vars_.size() && i < params.size(); ++i) {
      if (vars_[i].lower_bound && params[i] < *vars_[i].lower_bound) return false;
      if (vars_[i].upper_bound && params[i] > *vars_[i].upper_bound) return false;
    }
    return true;
  }

 private:
  std::vector<Variable> vars_;
};

}  // namespace alea
