#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "alea/common.hpp"
#include "alea/config.hpp"
#include "alea/rng.hpp"

namespace alea {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // ln(2*pi)/2

// Univariate prior building block. Knows how to evaluate its log density
// (sentinel outside the support) and how to draw from a stream.
class Distribution {
 public:
  enum class Kind { Normal, Uniform };

  static Distribution normal(std::string name, double mean, double sigma) {
    if (!(sigma > 0.0))
      throw ConfigError(ConfigError::Kind::Invalid, name, "Sigma must be positive");
    Distribution d;
    d.kind_ = Kind::Normal;
    d.name_ = std::move(name);
    d.a_ = mean;
    d.b_ = sigma;
    return d;
  }

  static Distribution uniform(std::string name, double minimum, double maximum) {
    if (!(minimum < maximum))
      throw ConfigError(ConfigError::Kind::Invalid, name, "Minimum must be below Maximum");
    Distribution d;
    d.kind_ = Kind::Uniform;
    d.name_ = std::move(name);
    d.a_ = minimum;
    d.b_ = maximum;
    return d;
  }

  static Distribution parse(ConfigTree& t, size_t index) {
    const std::string base = "/Distributions/" + std::to_string(index);
    std::string name = t.get_string(base + "/Name");
    std::string type = t.get_string(base + "/Type");
    if (type == "Univariate/Normal")
      return normal(std::move(name), t.get_real(base + "/Mean"), t.get_real(base + "/Sigma"));
    if (type == "Univariate/Uniform")
      return uniform(std::move(name), t.get_real(base + "/Minimum"), t.get_real(base + "/Maximum"));
    throw ConfigError(ConfigError::Kind::TypeMismatch, ConfigTree::display(base + "/Type"),
                      "unsupported distribution type " + type);
  }

  double log_pdf(double x) const {
    switch (kind_) {
      case Kind::Normal: {
        const double z = (x - a_) / b_;
        return -0.5 * z * z - std::log(b_) - kHalfLog2Pi;
      }
      case Kind::Uniform:
        if (x < a_ || x > b_) return kLogZero;
        return -std::log(b_ - a_);
    }
    return kLogZero;
  }

  double sample(RngStream& rng) const {
    switch (kind_) {
      case Kind::Normal: return rng.normal(a_, b_);
      case Kind::Uniform: return rng.uniform(a_, b_);
    }
    return 0.0;
  }

  double mean() const { return kind_ == Kind::Normal ? a_ : 0.5 * (a_ + b_); }

  // A representative spread, used to seed optimizer step sizes.
  double scale() const { return kind_ == Kind::Normal ? b_ : 0.3 * (b_ - a_); }

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  double param_a() const { return a_; }
  double param_b() const { return b_; }

 private:
  Kind kind_ = Kind::Uniform;
  std::string name_;
  double a_ = 0.0, b_ = 1.0;
};

inline std::vector<Distribution> parse_distributions(ConfigTree& t) {
  std::vector<Distribution> out;
  const size_t n = t.array_size("/Distributions");
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(Distribution::parse(t, i));
  for (size_t i = 0; i < out.size(); ++i)
    for (size_t j = i + 1; j < out.size(); ++j)
      if (out[i].name() == out[j].name())
        throw ConfigError(ConfigError::Kind::Invalid, "Distributions/" + std::to_string(j) + "/Name",
                          "duplicate distribution name " + out[j].name());
  return out;
}

}  // namespace alea
