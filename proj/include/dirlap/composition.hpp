#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "dirlap/errors.hpp"
#include "dirlap/rng.hpp"
#include "dirlap/special_functions.hpp"

// Dirichlet fundamentals: density, moments, sampling, simplex validation, and
// the boundary-compression transform for data containing exact 0s or 1s.

namespace dirlap {

// One composition: proportions over C categories, strictly inside the open
// simplex.
struct Composition {
  Eigen::VectorXd values;
};

// C x N matrix whose columns are compositions.
struct CompositionMatrix {
  Eigen::MatrixXd data;  // C rows, N columns

  Eigen::Index n_categories() const { return data.rows(); }
  Eigen::Index n_observations() const { return data.cols(); }
};

struct DirichletParams {
  Eigen::VectorXd alpha;
  double alpha0 = 0.0;  // sum of alpha (the precision)

  static DirichletParams from_alpha(Eigen::VectorXd a) {
    for (Eigen::Index c = 0; c < a.size(); ++c)
      if (!(a[c] > 0.0))
        throw domain_error("DirichletParams: alpha[" + std::to_string(c) +
                           "] must be positive");
    const double a0 = a.sum();
    return DirichletParams{std::move(a), a0};
  }
};

struct DirichletMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::MatrixXd covariance;
};

// Validation tolerances: looser for external data (CSV round-trip noise),
// tighter for internally generated values.
inline constexpr double simplex_tol_external = 1e-8;
inline constexpr double simplex_tol_internal = 1e-12;

inline void validate_composition(const Eigen::VectorXd& y,
                                 double sum_tol = simplex_tol_internal) {
  if (y.size() < 2) throw shape_error("Composition: need at least 2 categories");
  for (Eigen::Index c = 0; c < y.size(); ++c)
    if (!(y[c] > 0.0 && y[c] < 1.0))
      throw domain_error("Composition: entry " + std::to_string(c) +
                         " not strictly inside (0,1)");
  if (std::fabs(y.sum() - 1.0) > sum_tol)
    throw simplex_error("Composition: entries sum to " +
                        std::to_string(y.sum()) + ", expected 1");
}

inline void validate_composition_matrix(const Eigen::MatrixXd& Y,
                                        double sum_tol = simplex_tol_internal) {
  if (Y.rows() < 2 || Y.cols() < 1)
    throw shape_error("CompositionMatrix: need >= 2 categories and >= 1 column");
  for (Eigen::Index n = 0; n < Y.cols(); ++n) {
    try {
      validate_composition(Y.col(n), sum_tol);
    } catch (const validation_error& e) {
      throw simplex_error("column " + std::to_string(n) + ": " + e.what());
    }
  }
}

// Compress closed-interval proportions into the open interval:
//   y* = (y*(N-1) + 1/C) / N,  elementwise,
// so exact 0s and 1s become interior while column sums stay 1. Input is a
// n_cat x n_obs matrix with entries in [0,1] and unit column sums.
inline CompositionMatrix transform_to_open_interval(const Eigen::MatrixXd& y,
                                                    Eigen::Index n_obs,
                                                    Eigen::Index n_cat) {
  if (y.rows() != n_cat || y.cols() != n_obs)
    throw shape_error("transform_to_open_interval: matrix is " +
                      std::to_string(y.rows()) + "x" + std::to_string(y.cols()) +
                      ", expected " + std::to_string(n_cat) + "x" +
                      std::to_string(n_obs));
  for (Eigen::Index n = 0; n < y.cols(); ++n)
    for (Eigen::Index c = 0; c < y.rows(); ++c)
      if (!(y(c, n) >= 0.0 && y(c, n) <= 1.0))
        throw domain_error("transform_to_open_interval: entry at row " +
                           std::to_string(c) + ", column " + std::to_string(n) +
                           " outside [0,1]");
  for (Eigen::Index n = 0; n < y.cols(); ++n)
    if (std::fabs(y.col(n).sum() - 1.0) > simplex_tol_external)
      throw simplex_error("transform_to_open_interval: column " +
                          std::to_string(n) + " sums to " +
                          std::to_string(y.col(n).sum()));
  const double N = static_cast<double>(n_obs);
  const double C = static_cast<double>(n_cat);
  CompositionMatrix out;
  out.data = (y.array() * (N - 1.0) + 1.0 / C) / N;
  return out;
}

// log p(y | alpha) for y on the open simplex.
inline double log_density(const Composition& y, const DirichletParams& params) {
  validate_composition(y.values);
  if (y.values.size() != params.alpha.size())
    throw shape_error("log_density: composition and alpha lengths differ");
  double out = sf::lgamma(params.alpha0);
  for (Eigen::Index c = 0; c < params.alpha.size(); ++c) {
    out -= sf::lgamma(params.alpha[c]);
    out += (params.alpha[c] - 1.0) * std::log(y.values[c]);
  }
  return out;
}

// Mean, variance, and covariance of a Dirichlet composition.
inline DirichletMoments moments(const DirichletParams& params) {
  const Eigen::Index C = params.alpha.size();
  for (Eigen::Index c = 0; c < C; ++c)
    if (!(params.alpha[c] > 0.0))
      throw domain_error("moments: alpha must be positive");
  const double a0 = params.alpha0;
  DirichletMoments m;
  m.mean = params.alpha / a0;
  const double denom = a0 * a0 * (a0 + 1.0);
  m.variance =
      (params.alpha.array() * (a0 - params.alpha.array()) / denom).matrix();
  m.covariance = -(params.alpha * params.alpha.transpose()) / denom;
  m.covariance.diagonal() = m.variance;
  return m;
}

// n independent draws, one per column: normalized Gamma(alpha_c, 1) variates.
// Deterministic given the seed. Columns are redrawn in the (rare) event that
// normalization produces an exact 0 or 1 in double precision.
inline CompositionMatrix sample_dirichlet(const DirichletParams& params,
                                          Eigen::Index n, std::uint64_t seed) {
  const Eigen::Index C = params.alpha.size();
  if (n < 1) throw domain_error("sample_dirichlet: need n >= 1");
  for (Eigen::Index c = 0; c < C; ++c)
    if (!(params.alpha[c] > 0.0))
      throw domain_error("sample_dirichlet: alpha must be positive");
  Rng rng(seed);
  CompositionMatrix out;
  out.data.resize(C, n);
  Eigen::VectorXd g(C);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 100)
        throw internal_error("sample_dirichlet: degenerate draws persist");
      for (Eigen::Index c = 0; c < C; ++c) g[c] = rng.gamma(params.alpha[c]);
      const double total = g.sum();
      if (!(total > 0.0) || !std::isfinite(total)) continue;
      g /= total;
      bool interior = true;
      for (Eigen::Index c = 0; c < C; ++c)
        if (!(g[c] > 0.0 && g[c] < 1.0)) interior = false;
      if (!interior) continue;
      out.data.col(j) = g;
      break;
    }
  }
  return out;
}

}  // namespace dirlap
