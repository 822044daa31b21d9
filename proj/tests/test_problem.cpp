#include "alea/problem.hpp"

#include <gtest/gtest.h>

using namespace alea;
using nlohmann::json;

namespace {

struct Fixture {
  std::vector<Distribution> dists;
  VariableSpace vars;
  Problem bayes;

  Fixture() {
    auto t = ConfigTree::parse(R"({
      "Distributions": [{"Name": "Prior", "Type": "Univariate/Normal", "Mean": 0.0, "Sigma": 1.0}],
      "Variables": [{"Name": "theta", "Prior Distribution": "Prior"}],
      "Problem": {"Type": "Bayesian Inference", "Reference Data": [0.0]}
    })");
    dists = parse_distributions(t);
    vars = VariableSpace::parse(t, dists);
    bayes = Problem::parse(t);
    t.require_all_consumed();
  }
};

}  // namespace

// Values below were computed independently from the closed-form Gaussian
// log density sum and are frozen here.
TEST(Likelihood, MatchesClosedFormSums) {
  const double d1[] = {0.0}, e1[] = {0.0}, s1[] = {1.0};
  EXPECT_NEAR(log_likelihood_normal(d1, e1, s1), -0.9189385332046727, 1e-14);

  const double d2[] = {0.0, 0.0}, e2[] = {0.0, 0.0}, s2[] = {1.0, 1.0};
  EXPECT_NEAR(log_likelihood_normal(d2, e2, s2), -1.8378770664093453, 1e-14);

  const double d3[] = {1.0}, e3[] = {0.0}, s3[] = {1.0};
  EXPECT_NEAR(log_likelihood_normal(d3, e3, s3), -1.4189385332046727, 1e-14);

  const double d4[] = {0.0}, e4[] = {0.0}, s4[] = {2.0};
  EXPECT_NEAR(log_likelihood_normal(d4, e4, s4), -1.612085713764618, 1e-14);

  const double d5[] = {1.2, -0.7, 3.0}, e5[] = {1.0, -1.0, 2.5}, s5[] = {0.5, 1.0, 2.0};
  EXPECT_NEAR(log_likelihood_normal(d5, e5, s5), -2.913065599614018, 1e-14);
}

TEST(Likelihood, BadValuesYieldTheSentinelNotAnError) {
  const double d[] = {1.0};
  const double e_nan[] = {NAN}, e_inf[] = {INFINITY}, e_ok[] = {0.0};
  const double s_ok[] = {1.0}, s_zero[] = {0.0}, s_neg[] = {-1.0};
  EXPECT_TRUE(is_log_zero(log_likelihood_normal(d, e_nan, s_ok)));
  EXPECT_TRUE(is_log_zero(log_likelihood_normal(d, e_inf, s_ok)));
  EXPECT_TRUE(is_log_zero(log_likelihood_normal(d, e_ok, s_zero)));
  EXPECT_TRUE(is_log_zero(log_likelihood_normal(d, e_ok, s_neg)));
}

TEST(Likelihood, LengthMismatchIsStructuralAndThrows) {
  const double d[] = {1.0, 2.0}, e[] = {1.0}, s[] = {1.0, 1.0};
  EXPECT_THROW(log_likelihood_normal(d, e, s), ProblemError);
  const double e2[] = {1.0, 2.0}, s2[] = {1.0};
  EXPECT_THROW(log_likelihood_normal(d, e2, s2), ProblemError);
}

TEST(Prior, SumsDensitiesAndTruncatesAtBounds) {
  auto t = ConfigTree::parse(R"({
    "Distributions": [
      {"Name": "N", "Type": "Univariate/Normal", "Mean": 0.0, "Sigma": 1.0},
      {"Name": "U", "Type": "Univariate/Uniform", "Minimum": -2.0, "Maximum": 3.0}
    ],
    "Variables": [
      {"Name": "a", "Prior Distribution": "N", "Lower Bound": -1.0, "Upper Bound": 1.0},
      {"Name": "b", "Prior Distribution": "U"},
      {"Name": "c"}
    ]})");
  auto dists = parse_distributions(t);
  auto vars = VariableSpace::parse(t, dists);

  const double inside[] = {0.0, 0.0, 123.0};  // unbounded prior-free c contributes nothing
  EXPECT_NEAR(log_prior(inside, vars, dists), -0.9189385332046727 - 1.6094379124341003, 1e-14);

  const double clipped[] = {1.5, 0.0, 0.0};  // violates a's upper bound
  EXPECT_TRUE(is_log_zero(log_prior(clipped, vars, dists)));

  const double off_support[] = {0.0, 4.0, 0.0};  // outside the uniform prior
  EXPECT_TRUE(is_log_zero(log_prior(off_support, vars, dists)));
}

TEST(ProblemParse, ReadsEachTypeAndRejectsJunk) {
  auto opt = ConfigTree::parse(R"({"Problem": {"Type": "Optimization"}})");
  EXPECT_EQ(Problem::parse(opt).type, ProblemType::Optimization);
  opt.require_all_consumed();

  auto conc = ConfigTree::parse(R"({"Problem": {
    "Type": "Sampling", "Execution Mode": "Concurrent",
    "Command": "./model {x}", "Result File": "out.json", "Timeout": 5.0}})");
  Problem pc = Problem::parse(conc);
  EXPECT_EQ(pc.model.mode, ModelSpec::Mode::Concurrent);
  EXPECT_EQ(pc.model.command, "./model {x}");
  EXPECT_DOUBLE_EQ(pc.model.timeout_s, 5.0);
  conc.require_all_consumed();

  auto badtype = ConfigTree::parse(R"({"Problem": {"Type": "Dreaming"}})");
  EXPECT_THROW(Problem::parse(badtype), ConfigError);

  auto badmode = ConfigTree::parse(R"({"Problem": {"Type": "Optimization", "Execution Mode": "Remote"}})");
  EXPECT_THROW(Problem::parse(badmode), ConfigError);

  auto nocmd = ConfigTree::parse(R"({"Problem": {"Type": "Optimization", "Execution Mode": "Concurrent"}})");
  EXPECT_THROW(Problem::parse(nocmd), ConfigError);

  auto nodata = ConfigTree::parse(R"({"Problem": {"Type": "Bayesian Inference", "Reference Data": []}})");
  EXPECT_THROW(Problem::parse(nodata), ConfigError);

  auto badlik = ConfigTree::parse(R"({"Problem": {"Type": "Bayesian Inference",
    "Reference Data": [1.0], "Likelihood Model": "Cauchy"}})");
  EXPECT_THROW(Problem::parse(badlik), ConfigError);
}

TEST(Derive, OptimizationReadsObjectiveAndAppliesBounds) {
  auto t = ConfigTree::parse(R"({
    "Variables": [{"Name": "x", "Lower Bound": -1.0, "Upper Bound": 1.0}],
    "Problem": {"Type": "Optimization"}})");
  auto vars = VariableSpace::parse(t, {});
  Problem p = Problem::parse(t);

  const double in[] = {0.5};
  DerivedQuantity dq = derive_quantity(p, in, json{{"F(x)", 3.25}}, vars, {});
  EXPECT_DOUBLE_EQ(dq.value, 3.25);
  EXPECT_DOUBLE_EQ(dq.log_prior, 0.0);

  const double out[] = {1.5};
  EXPECT_TRUE(is_log_zero(derive_quantity(p, out, json{{"F(x)", 3.25}}, vars, {}).value));

  EXPECT_TRUE(is_log_zero(derive_quantity(p, in, json{{"F(x)", NAN}}, vars, {}).value));
  EXPECT_THROW(derive_quantity(p, in, json{{"g(x)", 1.0}}, vars, {}), ProblemError);
  EXPECT_THROW(derive_quantity(p, in, json::array(), vars, {}), ProblemError);
}

TEST(Derive, SamplingReadsLogDensity) {
  auto t = ConfigTree::parse(R"({
    "Variables": [{"Name": "x"}],
    "Problem": {"Type": "Sampling"}})");
  auto vars = VariableSpace::parse(t, {});
  Problem p = Problem::parse(t);
  const double in[] = {0.0};
  EXPECT_DOUBLE_EQ(derive_quantity(p, in, json{{"logP(x)", -0.5}}, vars, {}).value, -0.5);
  EXPECT_THROW(derive_quantity(p, in, json{{"F(x)", -0.5}}, vars, {}), ProblemError);
}

TEST(Derive, BayesianValueIsExactlyLikelihoodPlusPrior) {
  Fixture f;
  const double params[] = {1.0};
  json result = {{"Reference Evaluations", {1.0}}, {"Standard Deviation", {1.0}}};
  DerivedQuantity dq = derive_quantity(f.bayes, params, result, f.vars, f.dists);
  EXPECT_NEAR(dq.log_likelihood, -1.4189385332046727, 1e-14);
  EXPECT_NEAR(dq.log_prior, -1.4189385332046727, 1e-14);
  EXPECT_DOUBLE_EQ(dq.value, dq.log_likelihood + dq.log_prior);
  EXPECT_NEAR(dq.value, -2.8378770664093453, 1e-14);
}

TEST(Derive, BayesianBroadcastsTheSigmaVariable) {
  auto t = ConfigTree::parse(R"({
    "Distributions": [
      {"Name": "P", "Type": "Univariate/Normal", "Mean": 0.0, "Sigma": 1.0},
      {"Name": "S", "Type": "Univariate/Uniform", "Minimum": 0.01, "Maximum": 5.0}
    ],
    "Variables": [
      {"Name": "theta", "Prior Distribution": "P"},
      {"Name": "Sigma", "Prior Distribution": "S"}
    ],
    "Problem": {"Type": "Bayesian Inference", "Reference Data": [0.0, 0.0]}})");
  auto dists = parse_distributions(t);
  auto vars = VariableSpace::parse(t, dists);
  Problem p = Problem::parse(t);

  const double params[] = {0.0, 2.0};  // predictions at 0, sigma variable 2
  json result = {{"Reference Evaluations", {0.0, 0.0}}};
  DerivedQuantity dq = derive_quantity(p, params, result, vars, dists);
  EXPECT_NEAR(dq.log_likelihood, 2.0 * -1.612085713764618, 1e-14);

  // Explicit deviations in the result take precedence over the variable.
  json with_sd = {{"Reference Evaluations", {0.0, 0.0}}, {"Standard Deviation", {1.0, 1.0}}};
  EXPECT_NEAR(derive_quantity(p, params, with_sd, vars, dists).log_likelihood,
              -1.8378770664093453, 1e-14);
}

TEST(Derive, BayesianStructuralProblemsThrow) {
  Fixture f;
  const double params[] = {0.0};
  json short_evals = {{"Reference Evaluations", json::array()}};
  EXPECT_THROW(derive_quantity(f.bayes, params, short_evals, f.vars, f.dists), ProblemError);

  json no_evals = {{"Standard Deviation", {1.0}}};
  EXPECT_THROW(derive_quantity(f.bayes, params, no_evals, f.vars, f.dists), ProblemError);

  json bad_sd_len = {{"Reference Evaluations", {0.0}}, {"Standard Deviation", {1.0, 1.0}}};
  EXPECT_THROW(derive_quantity(f.bayes, params, bad_sd_len, f.vars, f.dists), ProblemError);

  // No Standard Deviation key and no Sigma variable: the contract is broken.
  json evals_only = {{"Reference Evaluations", {0.0}}};
  EXPECT_THROW(derive_quantity(f.bayes, params, evals_only, f.vars, f.dists), ProblemError);
}

TEST(Derive, BayesianOffSupportSampleKeepsFiniteSentinels) {
  auto t = ConfigTree::parse(R"({
    "Distributions": [{"Name": "U", "Type": "Univariate/Uniform", "Minimum": 0.0, "Maximum": 1.0}],
    "Variables": [{"Name": "theta", "Prior Distribution": "U"}],
    "Problem": {"Type": "Bayesian Inference", "Reference Data": [0.0]}})");
  auto dists = parse_distributions(t);
  auto vars = VariableSpace::parse(t, dists);
  Problem p = Problem::parse(t);
  const double params[] = {2.0};  // outside the prior support
  json result = {{"Reference Evaluations", {2.0}}, {"Standard Deviation", {1.0}}};
  DerivedQuantity dq = derive_quantity(p, params, result, vars, dists);
  EXPECT_TRUE(is_log_zero(dq.log_prior));
  EXPECT_TRUE(is_log_zero(dq.value));
  EXPECT_TRUE(std::isfinite(dq.value));
}
