#pragma once

#include <Eigen/Cholesky>
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
#include "dirlap/formula.hpp"
#include "dirlap/likelihood.hpp"
#include "dirlap/rng.hpp"
#include "dirlap/special_functions.hpp"

// Posterior inference for the Dirichlet regression model:
//  1. find the mode of the exact negative log-posterior by damped Newton with
//     Armijo backtracking (per-observation Hessian blocks, expected-Hessian
//     fallback when a block is not positive definite);
//  2. build the Gaussian pseudo-observations at the mode;
//  3. solve the resulting conjugate Gaussian model exactly:
//     Q_post = A' H0 A + Q_x, with Gaussian marginals, model criteria, and
//     prediction on top.

namespace dirlap {

struct FitConfig {
  double prior_precision = 1e-4;  // tau; prior is N(0, (tau I)^{-1})
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;  // on the infinity norm
  double armijo_c1 = 1e-4;
  double backtrack_factor = 0.5;
  double min_step = 1e-10;
  std::uint64_t seed = 1;  // criteria / prediction sampling
  int n_posterior_draws = 4000;

  void validate() const {
    if (!(prior_precision > 0.0)) throw domain_error("FitConfig: prior_precision must be positive");
    if (max_iterations < 1) throw domain_error("FitConfig: max_iterations must be positive");
    if (!(gradient_tolerance > 0.0)) throw domain_error("FitConfig: gradient_tolerance must be positive");
    if (!(armijo_c1 > 0.0 && armijo_c1 < 0.5)) throw domain_error("FitConfig: armijo_c1 must lie in (0, 0.5)");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) throw domain_error("FitConfig: backtrack_factor must lie in (0,1)");
    if (!(min_step > 0.0)) throw domain_error("FitConfig: min_step must be positive");
    if (n_posterior_draws < 2) throw domain_error("FitConfig: n_posterior_draws must be at least 2");
  }
};

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;      // value after the accepted step
  double gradient_norm = 0.0;  // infinity norm before the step
  double step_length = 0.0;    // 0 when the iteration only tested convergence
  int fallback_count = 0;      // blocks on the expected Hessian this iteration
};

struct ModelCriteria {
  double dic = 0.0;
  double waic = 0.0;
  double lcpo = 0.0;
  bool waic_degenerate = false;  // some per-observation variance came out 0/NaN
};

struct PosteriorFit {
  Eigen::VectorXd mode;                  // x0
  Eigen::MatrixXd posterior_precision;   // Q_post = A' H0 A + tau I
  Eigen::VectorXd posterior_mean;
  Eigen::VectorXd marginal_sd;
  Eigen::VectorXd q025, q50, q975;       // Gaussian marginal quantiles
  std::vector<IterationRecord> iteration_trace;
  ModelCriteria criteria;
};

struct ModeResult {
  Eigen::VectorXd x0;
  std::vector<IterationRecord> trace;
  double final_gradient_norm = 0.0;
  // True when the search stopped because objective decreases fell below
  // floating-point resolution while the gradient no longer contracted.
  bool fp_resolution_stop = false;
};

// Non-convergence carrying the iteration trace for post-mortems.
class mode_nonconvergence_error : public nonconvergence_error {
 public:
  mode_nonconvergence_error(const std::string& what,
                            std::vector<IterationRecord> trace_in)
      : nonconvergence_error(what), trace(std::move(trace_in)) {}
  std::vector<IterationRecord> trace;
};

namespace detail {

// Dense per-observation C x J design blocks, extracted once per fit.
inline std::vector<Eigen::MatrixXd> dense_design_blocks(const DesignMatrix& A) {
  const Eigen::Index C = A.n_cat;
  const Eigen::Index N = A.n_obs;
  const Eigen::Index J = A.entries.cols();
  std::vector<Eigen::MatrixXd> blocks(static_cast<std::size_t>(N),
                                      Eigen::MatrixXd::Zero(C, J));
  for (Eigen::Index j = 0; j < J; ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A.entries, j); it; ++it)
      blocks[static_cast<std::size_t>(it.row() / C)](it.row() % C, j) = it.value();
  return blocks;
}

inline double logsumexp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

inline double sample_variance(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
}

// Linear-interpolated empirical quantile of an already sorted vector.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double h = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double w = h - static_cast<double>(lo);
  return sorted[lo] * (1.0 - w) + sorted[lo + 1] * w;
}

}  // namespace detail

// Exact negative log-posterior (up to a constant):
//   sum_n l(y_n | eta_n) + tau/2 ||x||^2.
inline double objective(const Eigen::VectorXd& x, const CompositionMatrix& Y,
                        const DesignMatrix& A, double tau) {
  if (x.size() != A.entries.cols())
    throw shape_error("objective: coefficient length mismatch");
  const Eigen::Index C = Y.n_categories();
  const Eigen::Index N = Y.n_observations();
  if (A.entries.rows() != C * N)
    throw shape_error("objective: design rows != C*N");
  const Eigen::VectorXd eta = A.entries * x;
  double out = 0.5 * tau * x.squaredNorm();
  for (Eigen::Index n = 0; n < N; ++n)
    out += neg_log_lik(Composition{Y.data.col(n)},
                       PredictorBlock{eta.segment(n * C, C)});
  return out;
}

namespace detail {

// Line-search variant: the overflow guard means "reject this step".
inline double objective_or_inf(const Eigen::VectorXd& x,
                               const CompositionMatrix& Y,
                               const DesignMatrix& A, double tau) {
  try {
    return objective(x, Y, A, tau);
  } catch (const numeric_range_error&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct NewtonState {
  Eigen::VectorXd gradient;  // J
  Eigen::MatrixXd hessian;   // J x J, always positive definite
  int fallback_count = 0;
};

// Gradient A' g~ + tau x and Hessian A' H~ A + tau I with per-block
// exact-or-fallback Hessians (force_expected switches every block to the
// expected Hessian).
inline NewtonState newton_state(const Eigen::VectorXd& x,
                                const CompositionMatrix& Y,
                                const std::vector<Eigen::MatrixXd>& blocks,
                                const DesignMatrix& A, double tau,
                                bool force_expected = false) {
  const Eigen::Index C = Y.n_categories();
  const Eigen::Index N = Y.n_observations();
  const Eigen::Index J = A.entries.cols();
  const Eigen::VectorXd eta = A.entries * x;
  NewtonState st;
  st.gradient = tau * x;
  st.hessian = tau * Eigen::MatrixXd::Identity(J, J);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Composition y{Y.data.col(n)};
    const PredictorBlock block{eta.segment(n * C, C)};
    const Eigen::VectorXd g = gradient(y, block);
    Eigen::MatrixXd H;
    if (force_expected) {
      H = expected_hessian(block);
      ++st.fallback_count;
    } else {
      Eigen::MatrixXd L;
      HessianKind kind;
      choose_and_factor(y, block, H, L, kind);
      if (kind == HessianKind::expected) ++st.fallback_count;
    }
    const Eigen::MatrixXd& An = blocks[static_cast<std::size_t>(n)];
    st.gradient.noalias() += An.transpose() * g;
    st.hessian.noalias() += An.transpose() * H * An;
  }
  return st;
}

inline Eigen::VectorXd gradient_only(const Eigen::VectorXd& x,
                                     const CompositionMatrix& Y,
                                     const std::vector<Eigen::MatrixXd>& blocks,
                                     const DesignMatrix& A, double tau) {
  const Eigen::Index C = Y.n_categories();
  const Eigen::Index N = Y.n_observations();
  const Eigen::VectorXd eta = A.entries * x;
  Eigen::VectorXd g = tau * x;
  for (Eigen::Index n = 0; n < N; ++n)
    g.noalias() += blocks[static_cast<std::size_t>(n)].transpose() *
                   gradient(Composition{Y.data.col(n)},
                            PredictorBlock{eta.segment(n * C, C)});
  return g;
}

}  // namespace detail

// Gradient and Hessian of the objective at x. The Hessian uses the same
// per-block exact-or-fallback rule as the mode search, so it is always
// positive definite.
struct ObjectiveDerivatives {
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  int fallback_count = 0;
};

inline ObjectiveDerivatives objective_derivatives(const Eigen::VectorXd& x,
                                                  const CompositionMatrix& Y,
                                                  const DesignMatrix& A,
                                                  double tau) {
  if (x.size() != A.entries.cols())
    throw shape_error("objective_derivatives: coefficient length mismatch");
  const auto blocks = detail::dense_design_blocks(A);
  auto st = detail::newton_state(x, Y, blocks, A, tau);
  return ObjectiveDerivatives{std::move(st.gradient), std::move(st.hessian),
                              st.fallback_count};
}

// Damped Newton search for the posterior mode, starting from x = 0.
// Stops when the gradient infinity norm reaches the tolerance, when the line
// search underflows min_step, or - the endgame - when the predicted decrease
// falls below floating-point resolution of the objective, in which case full
// Newton steps are accepted while they still contract the gradient.
inline ModeResult posterior_mode(const CompositionMatrix& Y,
                                 const DesignMatrix& A,
                                 const FitConfig& config) {
  config.validate();
  validate_composition_matrix(Y.data, simplex_tol_external);
  const Eigen::Index J = A.entries.cols();
  const double tau = config.prior_precision;
  const auto blocks = detail::dense_design_blocks(A);

  ModeResult result;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(J);
  double f0 = objective(x, Y, A, tau);
  constexpr double eps = std::numeric_limits<double>::epsilon();

  for (int it = 1; it <= config.max_iterations; ++it) {
    auto st = detail::newton_state(x, Y, blocks, A, tau);
    const double ginf = st.gradient.lpNorm<Eigen::Infinity>();
    if (ginf <= config.gradient_tolerance) {
      result.trace.push_back({it, f0, ginf, 0.0, st.fallback_count});
      result.x0 = x;
      result.final_gradient_norm = ginf;
      return result;
    }

    Eigen::LLT<Eigen::MatrixXd> llt(st.hessian);
    Eigen::VectorXd d;
    double gd = 0.0;
    bool descent = false;
    if (llt.info() == Eigen::Success) {
      d = llt.solve(-st.gradient);
      gd = st.gradient.dot(d);
      descent = gd < 0.0;
    }
    if (!descent) {
      // Retry the whole iteration on the expected Hessian.
      st = detail::newton_state(x, Y, blocks, A, tau, /*force_expected=*/true);
      llt.compute(st.hessian);
      if (llt.info() != Eigen::Success)
        throw mode_nonconvergence_error(
            "posterior_mode: Newton system not positive definite", result.trace);
      d = llt.solve(-st.gradient);
      gd = st.gradient.dot(d);
      if (!(gd < 0.0))
        throw mode_nonconvergence_error(
            "posterior_mode: no descent direction", result.trace);
    }

    // Endgame: the true decrease (~ |g.d|/2) is below what the objective can
    // resolve in floating point, so Armijo comparisons are noise. Take full
    // Newton steps while they contract the gradient, then stop.
    if (0.5 * std::fabs(gd) <= 64.0 * eps * (1.0 + std::fabs(f0))) {
      const Eigen::VectorXd xn = x + d;
      const double fn = detail::objective_or_inf(xn, Y, A, tau);
      if (std::isfinite(fn)) {
        const double gn =
            detail::gradient_only(xn, Y, blocks, A, tau).lpNorm<Eigen::Infinity>();
        if (gn < ginf) {
          x = xn;
          f0 = fn;
          result.trace.push_back({it, f0, ginf, 1.0, st.fallback_count});
          continue;
        }
      }
      result.trace.push_back({it, f0, ginf, 0.0, st.fallback_count});
      result.x0 = x;
      result.final_gradient_norm = ginf;
      result.fp_resolution_stop = true;
      return result;
    }

    double s = 1.0;
    bool accepted = false;
    double f1 = f0;
    while (s >= config.min_step) {
      f1 = detail::objective_or_inf(x + s * d, Y, A, tau);
      if (f1 <= f0 + config.armijo_c1 * s * gd) {
        accepted = true;
        break;
      }
      s *= config.backtrack_factor;
    }
    if (!accepted) {
      // Step underflow: a stop condition, not an error.
      result.trace.push_back({it, f0, ginf, 0.0, st.fallback_count});
      result.x0 = x;
      result.final_gradient_norm = ginf;
      result.fp_resolution_stop = true;
      return result;
    }
    x += s * d;
    f0 = f1;
    result.trace.push_back({it, f0, ginf, s, st.fallback_count});
  }
  throw mode_nonconvergence_error(
      "posterior_mode: no convergence within " +
          std::to_string(config.max_iterations) + " iterations",
      result.trace);
}

// Exact conjugate Gaussian posterior at the mode: precision A' H0 A + tau I,
// mean from A' L0 z0, marginal sd from the inverse diagonal, Gaussian
// quantiles. (Criteria are filled in separately by model_criteria.)
inline PosteriorFit gaussian_posterior(const Eigen::VectorXd& x0,
                                       const CompositionMatrix& Y,
                                       const DesignMatrix& A, double tau) {
  const Eigen::Index C = Y.n_categories();
  const Eigen::Index N = Y.n_observations();
  const Eigen::Index J = A.entries.cols();
  if (x0.size() != J) throw shape_error("gaussian_posterior: mode length mismatch");
  const Eigen::VectorXd eta0 = A.entries * x0;
  const PseudoObservationSet pobs = pseudo_observations(Y, eta0);
  const auto blocks = detail::dense_design_blocks(A);

  PosteriorFit fit;
  fit.mode = x0;
  fit.posterior_precision = tau * Eigen::MatrixXd::Identity(J, J);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(J);
  for (Eigen::Index n = 0; n < N; ++n) {
    const Eigen::MatrixXd& An = blocks[static_cast<std::size_t>(n)];
    const Eigen::MatrixXd& Hn = pobs.hessian_blocks[static_cast<std::size_t>(n)];
    const Eigen::MatrixXd& Ln = pobs.cholesky_blocks[static_cast<std::size_t>(n)];
    fit.posterior_precision.noalias() += An.transpose() * Hn * An;
    rhs.noalias() += An.transpose() * (Ln * pobs.z0.segment(n * C, C));
  }
  Eigen::LLT<Eigen::MatrixXd> llt(fit.posterior_precision);
  if (llt.info() != Eigen::Success)
    throw internal_error("gaussian_posterior: posterior precision not PD");
  fit.posterior_mean = llt.solve(rhs);
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(J, J));
  fit.marginal_sd = cov.diagonal().cwiseSqrt();
  const double z = sf::norm_quantile(0.975);
  fit.q025 = fit.posterior_mean - z * fit.marginal_sd;
  fit.q50 = fit.posterior_mean;
  fit.q975 = fit.posterior_mean + z * fit.marginal_sd;
  return fit;
}

// DIC, WAIC, and LCPO from seeded draws of the Gaussian posterior.
inline ModelCriteria model_criteria(const PosteriorFit& fit,
                                    const CompositionMatrix& Y,
                                    const DesignMatrix& A,
                                    const FitConfig& config) {
  config.validate();
  const Eigen::Index C = Y.n_categories();
  const Eigen::Index N = Y.n_observations();
  const Eigen::Index J = A.entries.cols();
  const int S = config.n_posterior_draws;
  Eigen::LLT<Eigen::MatrixXd> llt(fit.posterior_precision);
  if (llt.info() != Eigen::Success)
    throw internal_error("model_criteria: posterior precision not PD");

  Rng rng(config.seed);
  Eigen::MatrixXd lp(S, N);  // log-likelihood per (draw, observation)
  Eigen::VectorXd xi(J);
  for (int s = 0; s < S; ++s) {
    for (Eigen::Index j = 0; j < J; ++j) xi[j] = rng.normal();
    // x = mean + L^{-T} xi has covariance Q^{-1}.
    const Eigen::VectorXd xs =
        fit.posterior_mean + llt.matrixU().solve(xi);
    const Eigen::VectorXd eta = A.entries * xs;
    for (Eigen::Index n = 0; n < N; ++n)
      lp(s, n) = -neg_log_lik(Composition{Y.data.col(n)},
                              PredictorBlock{eta.segment(n * C, C)});
  }

  ModelCriteria crit;
  const double log_S = std::log(static_cast<double>(S));
  const Eigen::VectorXd deviance = -2.0 * lp.rowwise().sum();
  const Eigen::VectorXd eta_mean = A.entries * fit.posterior_mean;
  double dev_at_mean = 0.0;
  for (Eigen::Index n = 0; n < N; ++n)
    dev_at_mean += 2.0 * neg_log_lik(Composition{Y.data.col(n)},
                                     PredictorBlock{eta_mean.segment(n * C, C)});
  crit.dic = 2.0 * deviance.mean() - dev_at_mean;

  double lppd = 0.0, p_waic = 0.0, lcpo_sum = 0.0;
  for (Eigen::Index n = 0; n < N; ++n) {
    const Eigen::VectorXd col = lp.col(n);
    lppd += detail::logsumexp(col) - log_S;
    const double var_n = detail::sample_variance(col);
    if (!(var_n > 0.0) || !std::isfinite(var_n)) crit.waic_degenerate = true;
    p_waic += var_n;
    lcpo_sum += detail::logsumexp(-col) - log_S;  // = -log CPO_n
  }
  crit.waic = -2.0 * (lppd - p_waic);
  crit.lcpo = lcpo_sum / static_cast<double>(N);
  return crit;
}

// A complete fitted model: formula, configuration, and posterior. This is the
// unit the CLI serializes and prediction consumes.
struct FittedModel {
  FormulaSpec formula;
  FitConfig config;
  Eigen::Index n_categories = 0;
  Eigen::Index n_obs = 0;
  bool transform_applied = false;
  std::vector<std::string> column_labels;
  PosteriorFit fit;
};

inline FittedModel fit_model(const FormulaSpec& formula,
                             const CompositionMatrix& Y, const DesignMatrix& A,
                             const FitConfig& config,
                             bool transform_applied = false) {
  ModeResult mode = posterior_mode(Y, A, config);
  PosteriorFit fit = gaussian_posterior(mode.x0, Y, A, config.prior_precision);
  fit.iteration_trace = std::move(mode.trace);
  fit.criteria = model_criteria(fit, Y, A, config);
  FittedModel model;
  model.formula = formula;
  model.config = config;
  model.n_categories = Y.n_categories();
  model.n_obs = Y.n_observations();
  model.transform_applied = transform_applied;
  model.column_labels = A.column_labels;
  model.fit = fit;
  return model;
}

struct PredictiveSummary {
  double mean = 0.0, sd = 0.0, q025 = 0.0, q50 = 0.0, q975 = 0.0;
};

// Per new observation: Gaussian eta marginals, induced lognormal alpha
// marginals, and sampling-based summaries of the composition mean alpha/alpha0
// and the precision alpha0.
struct PredictiveResult {
  std::vector<std::vector<PredictiveSummary>> eta;               // [row][cat]
  std::vector<std::vector<PredictiveSummary>> alpha;             // [row][cat]
  std::vector<std::vector<PredictiveSummary>> mean_composition;  // [row][cat]
  std::vector<PredictiveSummary> precision;                      // [row]
};

inline PredictiveResult predict(const FittedModel& model,
                                const CovariateTable& new_covariates) {
  const DesignMatrix A_new =
      build_design_matrix(model.formula, new_covariates);  // lookup_error on miss
  const Eigen::Index R = new_covariates.n_rows();
  const Eigen::Index C = model.n_categories;
  const Eigen::Index J = A_new.entries.cols();
  if (J != model.fit.posterior_mean.size())
    throw shape_error("predict: design width mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(model.fit.posterior_precision);
  if (llt.info() != Eigen::Success)
    throw internal_error("predict: posterior precision not PD");
  const double z = sf::norm_quantile(0.975);

  PredictiveResult out;
  out.eta.resize(R);
  out.alpha.resize(R);
  out.mean_composition.resize(R);
  out.precision.resize(R);

  // Closed-form eta (Gaussian) and alpha (lognormal) marginals.
  const Eigen::MatrixXd A_dense(A_new.entries);
  for (Eigen::Index r = 0; r < R; ++r) {
    out.eta[r].resize(C);
    out.alpha[r].resize(C);
    for (Eigen::Index c = 0; c < C; ++c) {
      const Eigen::VectorXd a = A_dense.row(r * C + c).transpose();
      const double mu = a.dot(model.fit.posterior_mean);
      const double var = a.dot(llt.solve(a));
      const double sd = std::sqrt(var);
      out.eta[r][c] = {mu, sd, mu - z * sd, mu, mu + z * sd};
      const double a_mean = std::exp(mu + 0.5 * var);
      const double a_sd = a_mean * std::sqrt(std::expm1(var));
      out.alpha[r][c] = {a_mean, a_sd, std::exp(mu - z * sd), std::exp(mu),
                         std::exp(mu + z * sd)};
    }
  }

  // Seeded joint draws for the composition mean and the precision.
  const int S = model.config.n_posterior_draws;
  Rng rng(model.config.seed);
  Eigen::VectorXd xi(J);
  std::vector<std::vector<std::vector<double>>> mean_draws(
      static_cast<std::size_t>(R));
  std::vector<std::vector<double>> prec_draws(static_cast<std::size_t>(R));
  for (Eigen::Index r = 0; r < R; ++r) {
    mean_draws[r].assign(static_cast<std::size_t>(C), {});
    for (auto& v : mean_draws[r]) v.reserve(S);
    prec_draws[r].reserve(S);
  }
  for (int s = 0; s < S; ++s) {
    for (Eigen::Index j = 0; j < J; ++j) xi[j] = rng.normal();
    const Eigen::VectorXd xs = model.fit.posterior_mean + llt.matrixU().solve(xi);
    const Eigen::VectorXd eta = A_new.entries * xs;
    for (Eigen::Index r = 0; r < R; ++r) {
      const Eigen::ArrayXd alpha = eta.segment(r * C, C).array().exp();
      const double a0 = alpha.sum();
      prec_draws[r].push_back(a0);
      for (Eigen::Index c = 0; c < C; ++c)
        mean_draws[r][c].push_back(alpha[c] / a0);
    }
  }
  auto summarize = [](std::vector<double>& v) {
    PredictiveSummary s;
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= (n - 1.0);
    std::sort(v.begin(), v.end());
    s.mean = mean;
    s.sd = std::sqrt(var);
    s.q025 = detail::sorted_quantile(v, 0.025);
    s.q50 = detail::sorted_quantile(v, 0.5);
    s.q975 = detail::sorted_quantile(v, 0.975);
    return s;
  };
  for (Eigen::Index r = 0; r < R; ++r) {
    out.mean_composition[r].resize(C);
    for (Eigen::Index c = 0; c < C; ++c)
      out.mean_composition[r][c] = summarize(mean_draws[r][c]);
    out.precision[r] = summarize(prec_draws[r]);
  }
  return out;
}

}  // namespace dirlap
