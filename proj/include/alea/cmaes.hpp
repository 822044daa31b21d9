#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "alea/config.hpp"
#include "alea/solver.hpp"

namespace alea {

struct CmaesSettings {
  size_t population = 0;  // 0 = pick 4 + floor(3 ln n)
  uint64_t max_generations = 0;
  double min_step_size = 0.0;
  std::optional<double> target_value;
  std::optional<double> min_value_variation;
  int64_t variation_window = 10;

  static CmaesSettings parse(ConfigTree& t) {
    CmaesSettings s;
    s.population = static_cast<size_t>(t.get_int_or("/Solver/Population Size", 0));
    s.max_generations = static_cast<uint64_t>(t.get_int_or("/Solver/Max Generations", 0));
    s.min_step_size = t.get_real_or("/Solver/Min Step Size", 0.0);
    if (t.has("/Solver/Target Value")) s.target_value = t.get_real("/Solver/Target Value");
    if (t.has("/Solver/Min Value Variation")) {
      s.min_value_variation = t.get_real("/Solver/Min Value Variation");
      s.variation_window = t.get_int_or("/Solver/Value Variation Window", 10);
      if (s.variation_window < 2)
        throw ConfigError(ConfigError::Kind::Invalid, "Solver/Value Variation Window", "must be at least 2");
    }
    return s;
  }
};

inline std::vector<double> cmaes_selection_weights(size_t mu) {
  std::vector<double> w(mu);
  for (size_t i = 0; i < mu; ++i) w[i] = std::log(static_cast<double>(mu) + 0.5) - std::log(static_cast<double>(i) + 1.0);
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= sum;
  return w;
}

// Rank-based evolution strategy with cumulative step-size adaptation and
// rank-one plus rank-mu covariance updates, maximizing the objective.
class Cmaes final : public Solver {
 public:
  Cmaes(CmaesSettings settings, const VariableSpace* vars, const std::vector<Distribution>* dists,
        RngStream* stream)
      : settings_(settings), vars_(vars), dists_(dists), stream_(stream) {
    const size_t n = vars_->size();
    if (n == 0) throw ConfigError(ConfigError::Kind::MissingRequired, "Variables");
    lambda_ = settings_.population > 0
                  ? settings_.population
                  : 4 + static_cast<size_t>(std::floor(3.0 * std::log(static_cast<double>(n))));
    if (lambda_ < 2)
      throw ConfigError(ConfigError::Kind::Invalid, "Solver/Population Size", "must be at least 2");
    mu_ = lambda_ / 2;
    weights_ = cmaes_selection_weights(mu_);
    double sq = 0.0;
    for (double w : weights_) sq += w * w;
    mueff_ = 1.0 / sq;

    const double nd = static_cast<double>(n);
    cs_ = (mueff_ + 2.0) / (nd + mueff_ + 5.0);
    ds_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (nd + 1.0)) - 1.0) + cs_;
    cc_ = (4.0 + mueff_ / nd) / (nd + 4.0 + 2.0 * mueff_ / nd);
    c1_ = 2.0 / ((nd + 1.3) * (nd + 1.3) + mueff_);
    cmu_ = std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((nd + 2.0) * (nd + 2.0) + mueff_));
    chi_n_ = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

    mean_.resize(static_cast<Eigen::Index>(n));
    Eigen::VectorXd scales(static_cast<Eigen::Index>(n));
    for (size_t i = 0; i < n; ++i) {
      const Variable& v = (*vars_)[i];
      const Distribution* prior =
          v.prior_index >= 0 ? &(*dists_)[static_cast<size_t>(v.prior_index)] : nullptr;
      if (v.initial_value) mean_[static_cast<Eigen::Index>(i)] = *v.initial_value;
      else if (v.lower_bound && v.upper_bound)
        mean_[static_cast<Eigen::Index>(i)] = 0.5 * (*v.lower_bound + *v.upper_bound);
      else if (prior) mean_[static_cast<Eigen::Index>(i)] = prior->mean();
      else
        throw ConfigError(ConfigError::Kind::MissingRequired,
                          "Variables/" + std::to_string(i) + "/Initial Value",
                          "no bounds or prior to derive a starting point from");
      if (v.initial_sigma) scales[static_cast<Eigen::Index>(i)] = *v.initial_sigma;
      else if (v.lower_bound && v.upper_bound)
        scales[static_cast<Eigen::Index>(i)] = 0.3 * (*v.upper_bound - *v.lower_bound);
      else if (prior) scales[static_cast<Eigen::Index>(i)] = prior->scale();
      else
        throw ConfigError(ConfigError::Kind::MissingRequired,
                          "Variables/" + std::to_string(i) + "/Initial Standard Deviation",
                          "no bounds or prior to derive a step size from");
    }
    sigma_ = scales.maxCoeff();
    cov_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < cov_.rows(); ++i) {
      const double r = scales[i] / sigma_;
      cov_(i, i) = r * r;
    }
    pc_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    ps_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    update_eigen();
  }

  std::string type() const override { return "CMAES"; }
  size_t population_size() const override { return lambda_; }

  std::vector<std::vector<double>> next_batch() override {
    if (terminated() || batch_out_) return {};
    const size_t n = vars_->size();
    candidates_.assign(lambda_, std::vector<double>(n));
    values_.assign(lambda_, kLogZero);
    resamples_ = 0;
    for (size_t k = 0; k < lambda_; ++k) {
      Eigen::VectorXd x;
      bool inside = false;
      for (int attempt = 0; attempt < 100 && !inside; ++attempt) {
        if (attempt > 0) ++resamples_;
        Eigen::VectorXd z(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = stream_->normal();
        x = mean_ + sigma_ * (eigen_basis_ * (eigen_scale_.asDiagonal() * z));
        inside = true;
        for (size_t i = 0; i < n; ++i) {
          const Variable& v = (*vars_)[i];
          if ((v.lower_bound && x[static_cast<Eigen::Index>(i)] < *v.lower_bound) ||
              (v.upper_bound && x[static_cast<Eigen::Index>(i)] > *v.upper_bound)) {
            inside = false;
            break;
          }
        }
      }
      if (!inside) {
        for (size_t i = 0; i < n; ++i) {
          const Variable& v = (*vars_)[i];
          auto& xi = x[static_cast<Eigen::Index>(i)];
          if (v.lower_bound && xi < *v.lower_bound) xi = *v.lower_bound;
          if (v.upper_bound && xi > *v.upper_bound) xi = *v.upper_bound;
        }
      }
      for (size_t i = 0; i < n; ++i) candidates_[k][i] = x[static_cast<Eigen::Index>(i)];
    }
    batch_out_ = true;
    return candidates_;
  }

  void absorb(const std::vector<EvaluatedSample>& evals) override {
    if (evals.size() != candidates_.size())
      throw Error("evaluation batch size mismatch");
    for (size_t i = 0; i < evals.size(); ++i)
      values_[i] = evals[i].failed ? kLogZero : evals[i].dq.value;
    batch_absorbed_ = true;
  }

  void finish_generation() override {
    if (!batch_out_ || !batch_absorbed_) throw Error("generation is not fully evaluated");
    update(candidates_, values_);
    batch_out_ = false;
    batch_absorbed_ = false;
    candidates_.clear();
    values_.clear();
  }

  // One full covariance/step-size update from an evaluated population.
  void update(const std::vector<std::vector<double>>& xs, const std::vector<double>& values) {
    const size_t n = vars_->size();
    size_t finite = 0;
    for (double v : values)
      if (!is_log_zero(v)) ++finite;
    if (finite == 0)
      throw SolverError(SolverError::Kind::NonFiniteObjectiveCount,
                        "all " + std::to_string(values.size()) + " candidates evaluated non-finite");

    std::vector<size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return values[a] > values[b]; });

    const double gen_best = values[idx[0]];
    if (!is_log_zero(gen_best) && (!best_.valid || gen_best > best_.value)) {
      best_.valid = true;
      best_.value = gen_best;
      best_.params = xs[idx[0]];
    }
    window_.push_back(gen_best);
    while (window_.size() > static_cast<size_t>(std::max<int64_t>(settings_.variation_window, 2)))
      window_.pop_front();

    const Eigen::VectorXd mean_old = mean_;
    Eigen::VectorXd mean_new = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (size_t i = 0; i < mu_; ++i) {
      const auto& x = xs[idx[i]];
      for (size_t d = 0; d < n; ++d) mean_new[static_cast<Eigen::Index>(d)] += weights_[i] * x[d];
    }

    Eigen::VectorXd y_w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    if (sigma_ > 0.0) y_w = (mean_new - mean_old) / sigma_;

    ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * (inv_sqrt_cov_ * y_w);
    const double ps_norm = ps_.norm();
    const double expected =
        std::sqrt(1.0 - std::pow(1.0 - cs_, 2.0 * static_cast<double>(generation_ + 1)));
    const bool hsig =
        ps_norm / expected / chi_n_ < 1.4 + 2.0 / (static_cast<double>(n) + 1.0);

    pc_ = (1.0 - cc_) * pc_ + (hsig ? std::sqrt(cc_ * (2.0 - cc_) * mueff_) : 0.0) * y_w;

    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(cov_.rows(), cov_.cols());
    if (sigma_ > 0.0) {
      for (size_t i = 0; i < mu_; ++i) {
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        const auto& x = xs[idx[i]];
        for (size_t d = 0; d < n; ++d)
          y[static_cast<Eigen::Index>(d)] = (x[d] - mean_old[static_cast<Eigen::Index>(d)]) / sigma_;
        rank_mu.noalias() += weights_[i] * (y * y.transpose());
      }
    }

    cov_ = (1.0 - c1_ - cmu_) * cov_ +
           c1_ * (pc_ * pc_.transpose() + (hsig ? 0.0 : 1.0) * cc_ * (2.0 - cc_) * cov_) +
           cmu_ * rank_mu;
    cov_ = 0.5 * (cov_ + cov_.transpose()).eval();

    sigma_ *= std::exp(cs_ / ds_ * (ps_norm / chi_n_ - 1.0));
    mean_ = mean_new;
    ++generation_;
    update_eigen();
  }

  bool terminated() const override { return !termination_reason_().empty(); }

  std::string termination_reason() const override { return termination_reason_(); }

  uint64_t generation() const override { return generation_; }
  double progress() const override { return best_.valid ? best_.value : kLogZero; }
  const BestResult& best() const override { return best_; }

  nlohmann::json serialize() const override {
    nlohmann::json j;
    j["Type"] = type();
    j["Generation"] = generation_;
    j["Mean"] = eig_to_json(mean_);
    j["Step Size"] = sigma_;
    j["Covariance"] = mat_to_json(cov_);
    j["Path Sigma"] = eig_to_json(ps_);
    j["Path Covariance"] = eig_to_json(pc_);
    j["Best"] = {{"Valid", best_.valid}, {"Value", best_.value}, {"Parameters", best_.params}};
    j["Value Window"] = std::vector<double>(window_.begin(), window_.end());
    return j;
  }

  void deserialize(const nlohmann::json& j) override {
    if (j.value("Type", std::string()) != type())
      throw CheckpointError(CheckpointError::Kind::CorruptCheckpoint, "solver state is not CMAES");
    generation_ = j.at("Generation").get<uint64_t>();
    mean_ = eig_from_json(j.at("Mean"));
    sigma_ = j.at("Step Size").get<double>();
    cov_ = mat_from_json(j.at("Covariance"));
    ps_ = eig_from_json(j.at("Path Sigma"));
    pc_ = eig_from_json(j.at("Path Covariance"));
    best_.valid = j.at("Best").at("Valid").get<bool>();
    best_.value = j.at("Best").at("Value").get<double>();
    best_.params = j.at("Best").at("Parameters").get<std::vector<double>>();
    window_.assign(j.at("Value Window").begin(), j.at("Value Window").end());
    batch_out_ = false;
    batch_absorbed_ = false;
    update_eigen();
  }

  // Introspection (mostly for tests and reporting).
  struct StrategyConstants {
    double cs, ds, cc, c1, cmu, chi_n;
  };
  StrategyConstants strategy() const { return {cs_, ds_, cc_, c1_, cmu_, chi_n_}; }
  const std::vector<double>& weights() const { return weights_; }
  double mueff() const { return mueff_; }
  double step_size() const { return sigma_; }
  void set_step_size(double s) { sigma_ = s; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  size_t bound_resamples() const { return resamples_; }
  const std::vector<std::vector<double>>& candidates() const { return candidates_; }

 private:
  std::string termination_reason_() const {
    if (settings_.max_generations > 0 && generation_ >= settings_.max_generations)
      return "Max Generations";
    if (settings_.min_step_size > 0.0 && sigma_ < settings_.min_step_size) return "Min Step Size";
    if (settings_.target_value && best_.valid && best_.value >= *settings_.target_value)
      return "Target Value";
    if (settings_.min_value_variation && window_.size() >= static_cast<size_t>(settings_.variation_window)) {
      const auto [lo, hi] = std::minmax_element(window_.begin(), window_.end());
      if (std::isfinite(*lo) && *hi - *lo < *settings_.min_value_variation) return "Min Value Variation";
    }
    return "";
  }

  // Refresh the eigendecomposition cache; clamp the spectrum when the
  // condition number exceeds 1e14 and give up if it is not positive at all.
  void update_eigen() {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_);
    Eigen::VectorXd d = es.eigenvalues();
    const double dmax = d.maxCoeff();
    if (!(dmax > 0.0) || !std::isfinite(dmax))
      throw SolverError(SolverError::Kind::DegenerateCovariance,
                        "covariance has no positive eigenvalue");
    const double floor = dmax / 1e14;
    bool clamped = false;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (d[i] < floor) {
        d[i] = floor;
        clamped = true;
      }
    }
    eigen_basis_ = es.eigenvectors();
    if (clamped)
      cov_ = eigen_basis_ * d.asDiagonal() * eigen_basis_.transpose();
    eigen_scale_ = d.cwiseSqrt();
    inv_sqrt_cov_ =
        eigen_basis_ * eigen_scale_.cwiseInverse().asDiagonal() * eigen_basis_.transpose();
  }

  static nlohmann::json eig_to_json(const Eigen::VectorXd& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    return out;
  }
  static Eigen::VectorXd eig_from_json(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  static nlohmann::json mat_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      std::vector<double> row(static_cast<size_t>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<size_t>(c)] = m(r, c);
      rows.push_back(row);
    }
    return rows;
  }
  static Eigen::MatrixXd mat_from_json(const nlohmann::json& j) {
    const size_t rows = j.size();
    const size_t cols = rows ? j.at(0).size() : 0;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          j.at(r).at(c).get<double>();
    return m;
  }

  CmaesSettings settings_;
  const VariableSpace* vars_;
  const std::vector<Distribution>* dists_;
  RngStream* stream_;

  size_t lambda_ = 0, mu_ = 0;
  std::vector<double> weights_;
  double mueff_ = 0, cs_ = 0, ds_ = 0, cc_ = 0, c1_ = 0, cmu_ = 0, chi_n_ = 0;

  uint64_t generation_ = 0;
  Eigen::VectorXd mean_;
  double sigma_ = 1.0;
  Eigen::MatrixXd cov_;
  Eigen::VectorXd pc_, ps_;
  Eigen::MatrixXd eigen_basis_;
  Eigen::VectorXd eigen_scale_;
  Eigen::MatrixXd inv_sqrt_cov_;
  BestResult best_;
  std::deque<double> window_;

  std::vector<std::vector<double>> candidates_;
  std::vector<double> values_;
  bool batch_out_ = false;
  bool batch_absorbed_ = false;
  size_t resamples_ = 0;
};

}  // namespace alea
