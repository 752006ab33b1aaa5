#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dirlap/composition.hpp"
#include "dirlap/design.hpp"
#include "dirlap/errors.hpp"
#include "dirlap/fitter.hpp"
#include "dirlap/rng.hpp"
#include "dirlap/special_functions.hpp"

// Ground-truth comparator: coordinate-wise Gaussian random-walk Metropolis on
// the exact posterior. Proposal scales adapt (Robbins-Monro on the log scale)
// toward 25% acceptance during warmup and are frozen afterwards. Likelihood
// changes are evaluated incrementally per coordinate; caches are rebuilt
// periodically to cancel floating-point drift.

namespace dirlap {

struct ChainConfig {
  std::int64_t n_iterations = 10000;
  std::int64_t n_warmup = 2000;
  std::int64_t thin = 1;
  int n_chains = 2;
  Eigen::VectorXd proposal_scale =
      Eigen::VectorXd::Constant(1, 0.1);  // scalar or one entry per coordinate
  std::uint64_t seed = 1;

  void validate() const {
    if (n_iterations < 1) throw domain_error("ChainConfig: n_iterations must be positive");
    if (n_warmup < 0 || n_warmup >= n_iterations)
      throw domain_error("ChainConfig: need 0 <= n_warmup < n_iterations");
    if (thin < 1) throw domain_error("ChainConfig: thin must be >= 1");
    if (n_chains < 1) throw domain_error("ChainConfig: n_chains must be >= 1");
    for (Eigen::Index j = 0; j < proposal_scale.size(); ++j)
      if (!(proposal_scale[j] > 0.0))
        throw domain_error("ChainConfig: proposal scales must be positive");
  }
};

struct ChainOutput {
  Eigen::MatrixXd draws;  // (kept_per_chain * n_chains) x J, chains stacked
  std::vector<double> acceptance_rate;  // per chain, post-warmup
  Eigen::VectorXd mean, sd;             // per coefficient, all chains pooled
  Eigen::VectorXd rhat;                 // split-chain R-hat per coefficient
  std::int64_t kept_per_chain = 0;
  int n_chains = 0;
};

// log posterior density (up to a constant): the negated fitter objective.
// The overflow guard maps to -infinity so such proposals are rejected.
inline double exact_log_posterior(const Eigen::VectorXd& x,
                                  const CompositionMatrix& Y,
                                  const DesignMatrix& A, double tau) {
  try {
    return -objective(x, Y, A, tau);
  } catch (const numeric_range_error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

namespace detail {

// Model interface used by the chain driver:
//   dimension(); x(); reset(x0); delta(j, v): log-posterior change of moving
//   coordinate j to v; commit(j, v): apply the move priced by the last delta.

// Dirichlet regression target with O(N) incremental coordinate updates.
class DirichletChainModel {
 public:
  DirichletChainModel(const CompositionMatrix& Y, const DesignMatrix& A,
                      double tau)
      : C_(Y.n_categories()),
        N_(Y.n_observations()),
        J_(A.entries.cols()),
        tau_(tau),
        log_y_(Y.data.array().log()) {
    if (A.entries.rows() != C_ * N_)
      throw shape_error("DirichletChainModel: design rows != C*N");
    column_values_.assign(static_cast<std::size_t>(J_),
                          Eigen::VectorXd::Zero(N_));
    column_category_.assign(static_cast<std::size_t>(J_), 0);
    for (int c = 0; c < static_cast<int>(C_); ++c)
      for (int col = A.category_offset[c]; col < A.category_offset[c + 1]; ++col)
        column_category_[col] = c;
    for (Eigen::Index j = 0; j < J_; ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(A.entries, j); it; ++it)
        column_values_[j][it.row() / C_] = it.value();
    prop_eta_.resize(N_);
    prop_alpha_.resize(N_);
    prop_alpha0_.resize(N_);
    prop_lga_.resize(N_);
    prop_lga0_.resize(N_);
    reset(Eigen::VectorXd::Zero(J_));
  }

  Eigen::Index dimension() const { return J_; }
  const Eigen::VectorXd& x() const { return x_; }

  void reset(const Eigen::VectorXd& x0) {
    x_ = x0;
    rebuild_caches();
  }

  double delta(Eigen::Index j, double v) {
    const double dx = v - x_[j];
    const Eigen::Index c = column_category_[j];
    const Eigen::VectorXd& col = column_values_[j];
    double out = -0.5 * tau_ * (v * v - x_[j] * x_[j]);
    for (Eigen::Index n = 0; n < N_; ++n) {
      const double e = eta_(c, n) + col[n] * dx;
      if (!(std::fabs(e) <= 700.0))
        return -std::numeric_limits<double>::infinity();
      const double a = std::exp(e);
      const double a0 = alpha0_[n] - alpha_(c, n) + a;
      if (!(a0 > 0.0)) return -std::numeric_limits<double>::infinity();
      prop_eta_[n] = e;
      prop_alpha_[n] = a;
      prop_alpha0_[n] = a0;
      prop_lga_[n] = sf::lgamma(a);
      prop_lga0_[n] = sf::lgamma(a0);
      out += (prop_lga0_[n] - lga0_[n]) - (prop_lga_[n] - lga_(c, n)) +
             (a - alpha_(c, n)) * log_y_(c, n);
    }
    return out;
  }

  void commit(Eigen::Index j, double v) {
    const Eigen::Index c = column_category_[j];
    x_[j] = v;
    for (Eigen::Index n = 0; n < N_; ++n) {
      eta_(c, n) = prop_eta_[n];
      alpha_(c, n) = prop_alpha_[n];
      alpha0_[n] = prop_alpha0_[n];
      lga_(c, n) = prop_lga_[n];
      lga0_[n] = prop_lga0_[n];
    }
    if (++commits_since_rebuild_ >= rebuild_interval_) rebuild_caches();
  }

 private:
  void rebuild_caches() {
    eta_.setZero(C_, N_);
    for (Eigen::Index j = 0; j < J_; ++j)
      eta_.row(column_category_[j]) += x_[j] * column_values_[j].transpose();
    alpha_ = eta_.array().exp();
    alpha0_ = alpha_.colwise().sum().transpose();
    lga_.resize(C_, N_);
    for (Eigen::Index n = 0; n < N_; ++n)
      for (Eigen::Index c = 0; c < C_; ++c) lga_(c, n) = sf::lgamma(alpha_(c, n));
    lga0_.resize(N_);
    for (Eigen::Index n = 0; n < N_; ++n) lga0_[n] = sf::lgamma(alpha0_[n]);
    commits_since_rebuild_ = 0;
  }

  Eigen::Index C_, N_, J_;
  double tau_;
  Eigen::MatrixXd log_y_;
  std::vector<Eigen::VectorXd> column_values_;  // per column: value by obs
  std::vector<Eigen::Index> column_category_;
  Eigen::VectorXd x_;
  Eigen::MatrixXd eta_, alpha_, lga_;  // C x N caches
  Eigen::VectorXd alpha0_, lga0_;      // per-observation caches
  Eigen::VectorXd prop_eta_, prop_alpha_, prop_alpha0_, prop_lga_, prop_lga0_;
  long commits_since_rebuild_ = 0;
  static constexpr long rebuild_interval_ = 4096;
};

// Full-evaluation adapter around an arbitrary log-density, for sanity checks
// of the driver on closed-form targets.
template <class LogDensity>
class GenericDensityModel {
 public:
  GenericDensityModel(Eigen::Index J, LogDensity f)
      : J_(J), f_(std::move(f)), x_(Eigen::VectorXd::Zero(J)) {
    lp_ = f_(x_);
  }
  Eigen::Index dimension() const { return J_; }
  const Eigen::VectorXd& x() const { return x_; }
  void reset(const Eigen::VectorXd& x0) {
    x_ = x0;
    lp_ = f_(x_);
  }
  double delta(Eigen::Index j, double v) {
    Eigen::VectorXd xn = x_;
    xn[j] = v;
    lp_prop_ = f_(xn);
    return lp_prop_ - lp_;
  }
  void commit(Eigen::Index j, double v) {
    x_[j] = v;
    lp_ = lp_prop_;
  }

 private:
  Eigen::Index J_;
  LogDensity f_;
  Eigen::VectorXd x_;
  double lp_ = 0.0, lp_prop_ = 0.0;
};

inline Eigen::VectorXd resolve_scales(const ChainConfig& config,
                                      Eigen::Index J) {
  if (config.proposal_scale.size() == 1)
    return Eigen::VectorXd::Constant(J, config.proposal_scale[0]);
  if (config.proposal_scale.size() == J) return config.proposal_scale;
  throw shape_error("ChainConfig: proposal_scale must be scalar or length J");
}

// Split-chain R-hat for one coefficient. Kept draws of each chain are split in
// half, giving 2*n_chains sequences.
inline double split_rhat(const Eigen::MatrixXd& draws, Eigen::Index coef,
                         std::int64_t kept_per_chain, int n_chains) {
  const std::int64_t L = kept_per_chain / 2;
  if (L < 2) return std::numeric_limits<double>::quiet_NaN();
  const int M = 2 * n_chains;
  std::vector<double> means, vars;
  means.reserve(M);
  vars.reserve(M);
  for (int chain = 0; chain < n_chains; ++chain)
    for (int half = 0; half < 2; ++half) {
      const Eigen::VectorXd seq =
          draws.col(coef).segment(chain * kept_per_chain + half * L, L);
      const double mu = seq.mean();
      means.push_back(mu);
      vars.push_back((seq.array() - mu).square().sum() /
                     static_cast<double>(L - 1));
    }
  double W = 0.0;
  for (double v : vars) W += v;
  W /= M;
  double mean_of_means = 0.0;
  for (double m : means) mean_of_means += m;
  mean_of_means /= M;
  double B = 0.0;
  for (double m : means) B += (m - mean_of_means) * (m - mean_of_means);
  B *= static_cast<double>(L) / (M - 1);
  const double var_plus =
      (static_cast<double>(L - 1) / L) * W + B / static_cast<double>(L);
  return std::sqrt(var_plus / W);
}

template <class Model>
inline ChainOutput run_chains_with_model(Model model, const ChainConfig& config) {
  config.validate();
  const Eigen::Index J = model.dimension();
  const Eigen::VectorXd base_scales = resolve_scales(config, J);
  const std::int64_t kept_per_chain =
      (config.n_iterations - config.n_warmup) / config.thin;
  if (kept_per_chain < 1)
    throw domain_error("ChainConfig: no kept draws after warmup and thinning");

  ChainOutput out;
  out.n_chains = config.n_chains;
  out.kept_per_chain = kept_per_chain;
  out.draws.resize(kept_per_chain * config.n_chains, J);
  out.acceptance_rate.resize(config.n_chains, 0.0);

  constexpr std::int64_t adapt_batch = 50;
  for (int chain = 0; chain < config.n_chains; ++chain) {
    Rng rng(Rng::derive_stream(config.seed, static_cast<std::uint64_t>(chain)));
    model.reset(Eigen::VectorXd::Zero(J));
    Eigen::VectorXd log_scale = base_scales.array().log();
    Eigen::VectorXd batch_accepts = Eigen::VectorXd::Zero(J);
    std::int64_t batch_index = 0;
    std::int64_t post_accepts = 0, post_proposals = 0;
    std::int64_t kept = 0;

    for (std::int64_t iter = 1; iter <= config.n_iterations; ++iter) {
      const bool warm = iter <= config.n_warmup;
      for (Eigen::Index j = 0; j < J; ++j) {
        const double prop = model.x()[j] + std::exp(log_scale[j]) * rng.normal();
        const double dlp = model.delta(j, prop);
        const bool accept = (dlp >= 0.0) || (std::log(rng.uniform()) < dlp);
        if (accept) model.commit(j, prop);
        if (warm) {
          if (accept) batch_accepts[j] += 1.0;
        } else {
          ++post_proposals;
          if (accept) ++post_accepts;
        }
      }
      if (warm && iter % adapt_batch == 0) {
        ++batch_index;
        const double gain = 2.0 * std::pow(static_cast<double>(batch_index), -0.6);
        for (Eigen::Index j = 0; j < J; ++j) {
          const double rate = batch_accepts[j] / static_cast<double>(adapt_batch);
          log_scale[j] =
              std::clamp(log_scale[j] + gain * (rate - 0.25), -20.0, 5.0);
        }
        batch_accepts.setZero();
      }
      if (!warm && (iter - config.n_warmup) % config.thin == 0 &&
          kept < kept_per_chain) {
        out.draws.row(chain * kept_per_chain + kept) = model.x().transpose();
        ++kept;
      }
    }
    out.acceptance_rate[chain] =
        static_cast<double>(post_accepts) / static_cast<double>(post_proposals);
  }

  out.mean = out.draws.colwise().mean().transpose();
  out.sd.resize(J);
  for (Eigen::Index j = 0; j < J; ++j)
    out.sd[j] = std::sqrt(
        (out.draws.col(j).array() - out.mean[j]).square().sum() /
        static_cast<double>(out.draws.rows() - 1));
  out.rhat.resize(J);
  for (Eigen::Index j = 0; j < J; ++j)
    out.rhat[j] = split_rhat(out.draws, j, kept_per_chain, config.n_chains);
  return out;
}

}  // namespace detail

inline ChainOutput run_chains(const CompositionMatrix& Y, const DesignMatrix& A,
                              double tau, const ChainConfig& config) {
  validate_composition_matrix(Y.data, simplex_tol_external);
  detail::DirichletChainModel model(Y, A, tau);
  return detail::run_chains_with_model(std::move(model), config);
}

// Driver on an arbitrary log density; used to validate the sampler against
// closed-form targets.
template <class LogDensity>
inline ChainOutput run_chains_on_density(Eigen::Index n_dim, LogDensity f,
                                         const ChainConfig& config) {
  detail::GenericDensityModel<LogDensity> model(n_dim, std::move(f));
  return detail::run_chains_with_model(std::move(model), config);
}

struct AgreementMetrics {
  Eigen::VectorXd mean_delta_in_sd_units;  // |laplace mean - mcmc mean| / mcmc sd
  Eigen::VectorXd sd_ratio;                // laplace sd / mcmc sd
  Eigen::VectorXd ks_statistic;  // draws vs fitted Gaussian marginal, per coef
};

inline AgreementMetrics agreement_metrics(const PosteriorFit& laplace,
                                          const ChainOutput& mcmc) {
  const Eigen::Index J = laplace.posterior_mean.size();
  if (mcmc.draws.cols() != J)
    throw shape_error("agreement_metrics: coefficient layouts differ");
  AgreementMetrics m;
  m.mean_delta_in_sd_units.resize(J);
  m.sd_ratio.resize(J);
  m.ks_statistic.resize(J);
  const Eigen::Index n = mcmc.draws.rows();
  std::vector<double> sorted(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < J; ++j) {
    m.mean_delta_in_sd_units[j] =
        std::fabs(laplace.posterior_mean[j] - mcmc.mean[j]) / mcmc.sd[j];
    m.sd_ratio[j] = laplace.marginal_sd[j] / mcmc.sd[j];
    for (Eigen::Index i = 0; i < n; ++i) sorted[i] = mcmc.draws(i, j);
    std::sort(sorted.begin(), sorted.end());
    double d = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double F = sf::norm_cdf((sorted[i] - laplace.posterior_mean[j]) /
                                    laplace.marginal_sd[j]);
      d = std::max(d, std::fabs(F - static_cast<double>(i) / n));
      d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - F));
    }
    m.ks_statistic[j] = d;
  }
  return m;
}

}  // namespace dirlap
