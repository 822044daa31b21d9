#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "alea/config.hpp"
#include "alea/solver.hpp"

namespace alea {

using StreamSet = std::map<std::string, RngStream>;

struct TmcmcSettings {
  size_t population = 0;
  double cov_scaling = 0.04;  // beta^2 multiplier on the weighted sample covariance
  int64_t chain_length = 1;   // 1 = single rejuvenation step per particle
  double target_cov = 1.0;
  uint64_t max_generations = 0;

  static TmcmcSettings parse(ConfigTree& t) {
    TmcmcSettings s;
    s.population = static_cast<size_t>(t.get_int("/Solver/Population Size"));
    if (s.population < 2)
      throw ConfigError(ConfigError::Kind::Invalid, "Solver/Population Size", "must be at least 2");
    s.cov_scaling = t.get_real_or("/Solver/Covariance Scaling Factor", 0.04);
    if (!(s.cov_scaling > 0.0))
      throw ConfigError(ConfigError::Kind::Invalid, "Solver/Covariance Scaling Factor", "must be positive");
    s.chain_length = t.get_int_or("/Solver/Chain Length", 1);
    if (s.chain_length < 1)
      throw ConfigError(ConfigError::Kind::Invalid, "Solver/Chain Length", "must be at least 1");
    s.target_cov = t.get_real_or("/Solver/Target Coefficient Of Variation", 1.0);
    if (!(s.target_cov > 0.0))
      throw ConfigError(ConfigError::Kind::Invalid, "Solver/Target Coefficient Of Variation",
                        "must be positive");
    s.max_generations = static_cast<uint64_t>(t.get_int_or("/Solver/Max Generations", 0));
    return s;
  }
};

// Coefficient of variation (sample std over mean, N-1 normalization) of the
// annealing weights exp(delta * loglike), evaluated in max-shifted form.
inline double tmcmc_weight_cov(std::span<const double> loglikes, double lmax, double delta) {
  const size_t n = loglikes.size();
  double mean = 0.0;
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i) {
    w[i] = std::exp(delta * (loglikes[i] - lmax));
    if (!std::isfinite(w[i])) w[i] = 0.0;
    mean += w[i];
  }
  mean /= static_cast<double>(n);
  if (!(mean > 0.0)) return HUGE_VAL;
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) ss += (w[i] - mean) * (w[i] - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return sd / mean;
}

// Next annealing exponent: the largest step whose importance weights keep
// their coefficient of variation at the target, found by bisection on the
// increment (tolerance 1e-8) and clamped at 1.
inline double tmcmc_anneal_exponent(std::span<const double> loglikes, double rho_prev, double target_cov) {
  if (loglikes.size() < 2) throw Error("annealing needs at least two samples");
  if (!(rho_prev >= 0.0) || rho_prev >= 1.0) throw Error("previous exponent must lie in [0,1)");
  double lmax = kLogZero;
  size_t finite = 0;
  for (double l : loglikes) {
    if (!is_log_zero(l)) {
      ++finite;
      if (l > lmax) lmax = l;
    }
  }
  if (finite == 0)
    throw SolverError(SolverError::Kind::AllLikelihoodsNonFinite,
                      "no finite log-likelihood in the population");

  double lo = 0.0, hi = 1.0 - rho_prev;
  if (tmcmc_weight_cov(loglikes, lmax, hi) <= target_cov) return 1.0;
  while (hi - lo > 1e-8) {
    const double mid = 0.5 * (lo + hi);
    if (tmcmc_weight_cov(loglikes, lmax, mid) > target_cov) hi = mid;
    else lo = mid;
  }
  return rho_prev + 0.5 * (lo + hi);
}

// Transitional MCMC: anneal from prior to posterior through tempered stages,
// resampling by importance weight and rejuvenating each particle with a short
// Metropolis chain. Accumulates the log-evidence across stages.
class Tmcmc final : public Solver {
 public:
  Tmcmc(TmcmcSettings settings, const VariableSpace* vars, const std::vector<Distribution>* dists,
        RngStream* stream, StreamSet* streams)
      : settings_(settings), vars_(vars), dists_(dists), stream_(stream), streams_(streams) {
    for (const auto& v : vars_->all()) {
      if (!v.prior_name || v.prior_index < 0)
        throw ProblemError(ProblemError::Kind::UnresolvedPrior,
                           "variable " + v.name + " has no prior distribution");
    }
    sigma_w_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vars_->size()),
                                     static_cast<Eigen::Index>(vars_->size()));
    chol_ = sigma_w_;
  }

  std::string type() const override { return "TMCMC"; }
  size_t population_size() const override { return settings_.population; }

  std::vector<std::vector<double>> next_batch() override {
    if (terminated() || batch_out_) return {};
    const size_t n = vars_->size();
    const size_t P = settings_.population;
    if (generation_ == 0) {
      if (init_evaluated_) return {};
      candidates_.assign(P, std::vector<double>(n));
      for (size_t i = 0; i < P; ++i)
        for (size_t d = 0; d < n; ++d) {
          const Variable& v = (*vars_)[d];
          const Distribution& prior = (*dists_)[static_cast<size_t>(v.prior_index)];
          candidates_[i][d] = prior.sample(streams_->at("Distribution/" + prior.name()));
        }
      batch_out_ = true;
      return candidates_;
    }
    if (step_ >= settings_.chain_length) return {};
    candidates_.assign(P, std::vector<double>(n));
    for (size_t i = 0; i < P; ++i) {
      Eigen::VectorXd z(static_cast<Eigen::Index>(n));
      for (Eigen::Index d = 0; d < z.size(); ++d) z[d] = stream_->normal();
      const Eigen::VectorXd step = chol_ * z;
      for (size_t d = 0; d < n; ++d) candidates_[i][d] = leaders_[i][d] + step[static_cast<Eigen::Index>(d)];
    }
    batch_out_ = true;
    return candidates_;
  }

  void absorb(const std::vector<EvaluatedSample>& evals) override {
    if (!batch_out_ || evals.size() != candidates_.size()) throw Error("evaluation batch mismatch");
    const size_t P = settings_.population;
    if (generation_ == 0) {
      leaders_ = candidates_;
      leader_ll_.assign(P, kLogZero);
      leader_lp_.assign(P, kLogZero);
      for (size_t i = 0; i < P; ++i) {
        if (!evals[i].failed) {
          leader_ll_[i] = evals[i].dq.log_likelihood;
          leader_lp_[i] = evals[i].dq.log_prior;
        }
      }
      init_evaluated_ = true;
      batch_out_ = false;
      return;
    }
    for (size_t i = 0; i < P; ++i) {
      // One uniform per chain regardless of outcome keeps draw counts fixed.
      const double u = stream_->uniform01();
      if (evals[i].failed) continue;  // failed evaluation rejects the proposal
      const double ll = evals[i].dq.log_likelihood;
      const double lp = evals[i].dq.log_prior;
      if (is_log_zero(lp)) continue;  // outside the prior support
      const double log_ratio = exponent_ * (ll - leader_ll_[i]) + (lp - leader_lp_[i]);
      ++proposed_;
      if (std::log(u) < log_ratio) {
        leaders_[i] = candidates_[i];
        leader_ll_[i] = ll;
        leader_lp_[i] = lp;
        ++accepted_;
      }
    }
    ++step_;
    batch_out_ = false;
  }

  void finish_generation() override {
    if (generation_ == 0) {
      if (!init_evaluated_) throw Error("initial population is not evaluated");
    } else if (step_ < settings_.chain_length || batch_out_) {
      throw Error("generation is not fully evaluated");
    }

    for (size_t i = 0; i < leaders_.size(); ++i) {
      const double v = leader_ll_[i] + leader_lp_[i];
      if (!is_log_zero(leader_ll_[i]) && !is_log_zero(v) && (!best_.valid || v > best_.value)) {
        best_.valid = true;
        best_.value = v;
        best_.params = leaders_[i];
      }
    }

    if (exponent_ >= 1.0) {
      // This generation was the rejuvenation pass at the posterior itself.
      final_pass_done_ = true;
      ++generation_;
      return;
    }

    const double rho_next = tmcmc_anneal_exponent(leader_ll_, exponent_, settings_.target_cov);
    const double delta = rho_next - exponent_;
    const size_t P = settings_.population;

    std::vector<double> scaled(P);
    for (size_t i = 0; i < P; ++i) scaled[i] = delta * leader_ll_[i];
    log_evidence_ += logsumexp(scaled) - std::log(static_cast<double>(P));

    double lmax = kLogZero;
    for (double l : leader_ll_)
      if (!is_log_zero(l) && l > lmax) lmax = l;
    std::vector<double> w(P);
    double wsum = 0.0;
    for (size_t i = 0; i < P; ++i) {
      w[i] = std::exp(delta * (leader_ll_[i] - lmax));
      if (!std::isfinite(w[i])) w[i] = 0.0;
      wsum += w[i];
    }
    for (auto& x : w) x /= wsum;

    const size_t n = vars_->size();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (size_t i = 0; i < P; ++i)
      for (size_t d = 0; d < n; ++d) m[static_cast<Eigen::Index>(d)] += w[i] * leaders_[i][d];
    sigma_w_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (size_t i = 0; i < P; ++i) {
      Eigen::VectorXd d(static_cast<Eigen::Index>(n));
      for (size_t k = 0; k < n; ++k) d[static_cast<Eigen::Index>(k)] = leaders_[i][k] - m[static_cast<Eigen::Index>(k)];
      sigma_w_.noalias() += w[i] * (d * d.transpose());
    }
    sigma_w_ = 0.5 * (sigma_w_ + sigma_w_.transpose()).eval();

    // Weight-proportional multinomial selection of the next stage's chains.
    std::vector<double> cum(P);
    double acc = 0.0;
    for (size_t i = 0; i < P; ++i) {
      acc += w[i];
      cum[i] = acc;
    }
    cum[P - 1] = 1.0;
    std::vector<std::vector<double>> new_leaders(P);
    std::vector<double> new_ll(P), new_lp(P);
    for (size_t i = 0; i < P; ++i) {
      const double u = stream_->uniform01();
      const size_t k = static_cast<size_t>(
          std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
      new_leaders[i] = leaders_[k];
      new_ll[i] = leader_ll_[k];
      new_lp[i] = leader_lp_[k];
    }
    leaders_ = std::move(new_leaders);
    leader_ll_ = std::move(new_ll);
    leader_lp_ = std::move(new_lp);

    refresh_proposal();
    exponent_ = rho_next;
    step_ = 0;
    ++generation_;
  }

  bool terminated() const override { return !reason_().empty(); }
  std::string termination_reason() const override { return reason_(); }
  bool stopped_short() const override {
    return terminated() && !final_pass_done_;
  }

  uint64_t generation() const override { return generation_; }
  double progress() const override { return exponent_; }
  const BestResult& best() const override { return best_; }

  double annealing_exponent() const { return exponent_; }
  double log_evidence() const { return log_evidence_; }
  const std::vector<std::vector<double>>& samples() const { return leaders_; }
  const std::vector<double>& sample_log_likelihoods() const { return leader_ll_; }
  const Eigen::MatrixXd& chain_covariance() const { return sigma_w_; }
  double acceptance_rate() const {
    return proposed_ == 0 ? 0.0 : static_cast<double>(accepted_) / static_cast<double>(proposed_);
  }

  nlohmann::json serialize() const override {
    nlohmann::json j;
    j["Type"] = type();
    j["Generation"] = generation_;
    j["Annealing Exponent"] = exponent_;
    j["Log Evidence"] = log_evidence_;
    j["Initial Population Evaluated"] = init_evaluated_;
    j["Final Pass Done"] = final_pass_done_;
    j["Leaders"] = leaders_;
    j["Leader Log Likelihoods"] = leader_ll_;
    j["Leader Log Priors"] = leader_lp_;
    j["Proposed"] = proposed_;
    j["Accepted"] = accepted_;
    nlohmann::json cov = nlohmann::json::array();
    for (Eigen::Index r = 0; r < sigma_w_.rows(); ++r) {
      std::vector<double> row(static_cast<size_t>(sigma_w_.cols()));
      for (Eigen::Index c = 0; c < sigma_w_.cols(); ++c) row[static_cast<size_t>(c)] = sigma_w_(r, c);
      cov.push_back(row);
    }
    j["Chain Covariance"] = cov;
    j["Best"] = {{"Valid", best_.valid}, {"Value", best_.value}, {"Parameters", best_.params}};
    return j;
  }

  void deserialize(const nlohmann::json& j) override {
    if (j.value("Type", std::string()) != type())
      throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint, "solver state is not TMCMC");
    generation_ = j.at("Generation").get<uint64_t>();
    exponent_ = j.at("Annealing Exponent").get<double>();
    log_evidence_ = j.at("Log Evidence").get<double>();
    init_evaluated_ = j.at("Initial Population Evaluated").get<bool>();
    final_pass_done_ = j.at("Final Pass Done").get<bool>();
    leaders_ = j.at("Leaders").get<std::vector<std::vector<double>>>();
    leader_ll_ = j.at("Leader Log Likelihoods").get<std::vector<double>>();
    leader_lp_ = j.at("Leader Log Priors").get<std::vector<double>>();
    proposed_ = j.at("Proposed").get<uint64_t>();
    accepted_ = j.at("Accepted").get<uint64_t>();
    const auto& cov = j.at("Chain Covariance");
    const size_t n = vars_->size();
    sigma_w_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (size_t r = 0; r < cov.size(); ++r)
      for (size_t c = 0; c < cov.at(r).size(); ++c)
        sigma_w_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cov.at(r).at(c).get<double>();
    best_.valid = j.at("Best").at("Valid").get<bool>();
    best_.value = j.at("Best").at("Value").get<double>();
    best_.params = j.at("Best").at("Parameters").get<std::vector<double>>();
    step_ = 0;
    batch_out_ = false;
    candidates_.clear();
    refresh_proposal();
  }

 private:
  std::string reason_() const {
    if (final_pass_done_) return "Annealing Complete";
    if (settings_.max_generations > 0 && generation_ >= settings_.max_generations)
      return "Max Generations";
    return "";
  }

  // Cholesky factor of beta^2 * Sigma_w for proposal draws. A collapsed
  // population (zero covariance) degenerates to zero-length steps; otherwise
  // a small escalating ridge bridges borderline indefiniteness.
  void refresh_proposal() {
    const Eigen::MatrixXd scaled = settings_.cov_scaling * sigma_w_;
    const double base = scaled.trace() / static_cast<double>(std::max<Eigen::Index>(scaled.rows(), 1));
    if (!(base > 0.0)) {
      chol_ = Eigen::MatrixXd::Zero(scaled.rows(), scaled.cols());
      return;
    }
    for (double jitter : {0.0, 1e-12, 1e-9, 1e-6}) {
      Eigen::MatrixXd attempt = scaled;
      attempt.diagonal().array() += jitter * base;
      Eigen::LLT<Eigen::MatrixXd> llt(attempt);
      if (llt.info() == Eigen::Success) {
        chol_ = llt.matrixL();
        return;
      }
    }
    throw SolverError(SolverError::Kind::DegenerateCovariance,
                      "chain proposal covariance is not positive definite");
  }

  TmcmcSettings settings_;
  const VariableSpace* vars_;
  const std::vector<Distribution>* dists_;
  RngStream* stream_;
  StreamSet* streams_;

  uint64_t generation_ = 0;
  double exponent_ = 0.0;
  double log_evidence_ = 0.0;
  bool init_evaluated_ = false;
  bool final_pass_done_ = false;
  int64_t step_ = 0;
  bool batch_out_ = false;

  std::vector<std::vector<double>> leaders_;
  std::vector<double> leader_ll_, leader_lp_;
  std::vector<std::vector<double>> candidates_;
  Eigen::MatrixXd sigma_w_, chol_;
  uint64_t proposed_ = 0, accepted_ = 0;
  BestResult best_;
};

}  // namespace alea
