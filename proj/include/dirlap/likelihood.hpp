#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dirlap/composition.hpp"
#include "dirlap/errors.hpp"
#include "dirlap/special_functions.hpp"

// Per-observation Dirichlet likelihood kernels in linear-predictor space
// (alpha = exp(eta), log link), their derivatives, and the pseudo-observation
// construction that turns the second-order expansion of the likelihood into a
// unit-variance Gaussian model:
//   z0 = L0' eta0 - L0^{-1} g0,   H0 = L0 L0',
// so that  l(y|eta) ~= const + 1/2 ||z0 - L0' eta||^2  around eta0.

namespace dirlap {

// Linear predictor for one observation.
struct PredictorBlock {
  Eigen::VectorXd eta;
};

enum class HessianKind { exact, expected };

struct ObservationDerivatives {
  double value = 0.0;           // negative log-likelihood l
  Eigen::VectorXd gradient;     // dl/deta
  Eigen::MatrixXd hessian;      // d2l/deta2
  HessianKind hessian_kind = HessianKind::exact;
};

struct PseudoObservationSet {
  Eigen::VectorXd z0;                            // length CN
  std::vector<Eigen::MatrixXd> cholesky_blocks;  // N lower-triangular C x C
  std::vector<Eigen::MatrixXd> hessian_blocks;   // N chosen Hessians (= L L')
  int fallback_count = 0;  // observations where the expected Hessian was used
};

// The exp(eta) overflow guard: rejects |eta| > 700 before exponentiation.
inline void check_eta(const Eigen::VectorXd& eta) {
  for (Eigen::Index c = 0; c < eta.size(); ++c)
    if (!(std::fabs(eta[c]) <= 700.0))
      throw numeric_range_error("linear predictor entry " + std::to_string(c) +
                                " outside [-700, 700]");
}

// l(y|eta) = -log p(y | alpha = exp(eta)).
inline double neg_log_lik(const Composition& y, const PredictorBlock& eta) {
  check_eta(eta.eta);
  if (y.values.size() != eta.eta.size())
    throw shape_error("neg_log_lik: composition and predictor lengths differ");
  const Eigen::ArrayXd a = eta.eta.array().exp();
  const double a0 = a.sum();
  double out = -sf::lgamma(a0);
  for (Eigen::Index c = 0; c < a.size(); ++c) {
    out += sf::lgamma(a[c]);
    out -= (a[c] - 1.0) * std::log(y.values[c]);
  }
  return out;
}

// g_c = exp(eta_c) [digamma(exp(eta_c)) - digamma(alpha0)] - exp(eta_c) log y_c.
inline Eigen::VectorXd gradient(const Composition& y, const PredictorBlock& eta) {
  check_eta(eta.eta);
  if (y.values.size() != eta.eta.size())
    throw shape_error("gradient: composition and predictor lengths differ");
  const Eigen::ArrayXd a = eta.eta.array().exp();
  const double a0 = a.sum();
  const double dg0 = sf::digamma(a0);
  Eigen::VectorXd g(a.size());
  for (Eigen::Index c = 0; c < a.size(); ++c)
    g[c] = a[c] * (sf::digamma(a[c]) - dg0) - a[c] * std::log(y.values[c]);
  return g;
}

namespace detail {

// a^2 * trigamma(a), finite across the whole predictor guard range. For small
// a the recurrence trigamma(a) = 1/a^2 + trigamma(a+1) avoids forming 1/a^2
// (which overflows below ~1e-154); for large a the factored product stays well
// under the double range.
inline double self_curvature(double a) {
  if (a < 0.5) return 1.0 + a * a * sf::trigamma(a + 1.0);
  return a * (a * sf::trigamma(a));
}

}  // namespace detail

// Exact Hessian: diagonal g_c + exp(2 eta_c) [trigamma(exp(eta_c)) -
// trigamma(alpha0)], off-diagonal -exp(eta_c) exp(eta_d) trigamma(alpha0).
// The curvature terms are evaluated as ratios u_c = alpha_c/alpha0 against
// s0 = alpha0^2 trigamma(alpha0) so no intermediate overflows for any
// predictor within the guard.
inline Eigen::MatrixXd hessian(const Composition& y, const PredictorBlock& eta) {
  check_eta(eta.eta);
  if (y.values.size() != eta.eta.size())
    throw shape_error("hessian: composition and predictor lengths differ");
  const Eigen::ArrayXd a = eta.eta.array().exp();
  const Eigen::Index C = a.size();
  const double a0 = a.sum();
  const double dg0 = sf::digamma(a0);
  const double s0 = detail::self_curvature(a0);
  const Eigen::ArrayXd u = a / a0;
  Eigen::MatrixXd H(C, C);
  for (Eigen::Index c = 0; c < C; ++c) {
    const double gc = a[c] * (sf::digamma(a[c]) - dg0) - a[c] * std::log(y.values[c]);
    H(c, c) = gc + detail::self_curvature(a[c]) - u[c] * u[c] * s0;
    for (Eigen::Index d = c + 1; d < C; ++d) {
      const double off = -(u[c] * u[d]) * s0;
      H(c, d) = off;
      H(d, c) = off;
    }
  }
  return H;
}

// Fisher information in eta-space (the y-expectation of the exact Hessian);
// independent of y and always positive semidefinite.
inline Eigen::MatrixXd expected_hessian(const PredictorBlock& eta) {
  check_eta(eta.eta);
  const Eigen::ArrayXd a = eta.eta.array().exp();
  const Eigen::Index C = a.size();
  const double a0 = a.sum();
  const double s0 = detail::self_curvature(a0);
  const Eigen::ArrayXd u = a / a0;
  Eigen::MatrixXd H(C, C);
  for (Eigen::Index c = 0; c < C; ++c) {
    H(c, c) = detail::self_curvature(a[c]) - u[c] * u[c] * s0;
    for (Eigen::Index d = c + 1; d < C; ++d) {
      const double off = -(u[c] * u[d]) * s0;
      H(c, d) = off;
      H(d, c) = off;
    }
  }
  return H;
}

namespace detail {

// Lower-triangular Cholesky H = L L'. Positive definiteness is decided by a
// scale-free pivot threshold: every pivot (the diagonal value before its
// square root) must exceed 1e-12 * trace(H)/C. Returns false on failure.
inline bool cholesky_lower(const Eigen::MatrixXd& H, Eigen::MatrixXd& L) {
  const Eigen::Index C = H.rows();
  const double floor = 1e-12 * (H.trace() / static_cast<double>(C));
  L.setZero(C, C);
  for (Eigen::Index j = 0; j < C; ++j) {
    double pivot = H(j, j);
    for (Eigen::Index k = 0; k < j; ++k) pivot -= L(j, k) * L(j, k);
    if (!(pivot > floor) || !std::isfinite(pivot)) return false;
    L(j, j) = std::sqrt(pivot);
    for (Eigen::Index i = j + 1; i < C; ++i) {
      double s = H(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
      L(i, j) = s / L(j, j);
    }
  }
  return true;
}

// Factor the exact Hessian when positive definite, otherwise the expected
// Hessian, otherwise the expected Hessian with one shot of diagonal jitter.
// Returns the chosen Hessian, its factor, and which kind was used.
inline void choose_and_factor(const Composition& y, const PredictorBlock& eta,
                              Eigen::MatrixXd& H_out, Eigen::MatrixXd& L_out,
                              HessianKind& kind_out) {
  Eigen::MatrixXd H = hessian(y, eta);
  if (cholesky_lower(H, L_out)) {
    H_out = std::move(H);
    kind_out = HessianKind::exact;
    return;
  }
  H = expected_hessian(eta);
  kind_out = HessianKind::expected;
  if (cholesky_lower(H, L_out)) {
    H_out = std::move(H);
    return;
  }
  const double jitter = 1e-8 * (H.trace() / static_cast<double>(H.rows()));
  H.diagonal().array() += jitter;
  if (!cholesky_lower(H, L_out))
    throw internal_error(
        "block Cholesky: expected Hessian not positive definite after jitter");
  H_out = std::move(H);
}

}  // namespace detail

// Factor of the per-observation Hessian used by the Gaussian approximation:
// the exact Hessian when it is positive definite, else the expected Hessian.
inline std::pair<Eigen::MatrixXd, HessianKind> block_cholesky_with_fallback(
    const Composition& y, const PredictorBlock& eta) {
  Eigen::MatrixXd H, L;
  HessianKind kind;
  detail::choose_and_factor(y, eta, H, L, kind);
  return {std::move(L), kind};
}

// Build the pseudo-observations z0 (and per-block factors) at the linearization
// point eta_tilde = stacked per-observation predictors. Triangular solves only;
// no explicit inverses.
inline PseudoObservationSet pseudo_observations(const CompositionMatrix& Y,
                                                const Eigen::VectorXd& eta_tilde) {
  const Eigen::Index C = Y.n_categories();
  const Eigen::Index N = Y.n_observations();
  if (eta_tilde.size() != C * N)
    throw shape_error("pseudo_observations: predictor length " +
                      std::to_string(eta_tilde.size()) + " != C*N = " +
                      std::to_string(C * N));
  PseudoObservationSet set;
  set.z0.resize(C * N);
  set.cholesky_blocks.reserve(static_cast<std::size_t>(N));
  set.hessian_blocks.reserve(static_cast<std::size_t>(N));
  for (Eigen::Index n = 0; n < N; ++n) {
    const Composition y{Y.data.col(n)};
    const PredictorBlock eta{eta_tilde.segment(n * C, C)};
    Eigen::MatrixXd H, L;
    HessianKind kind;
    detail::choose_and_factor(y, eta, H, L, kind);
    if (kind == HessianKind::expected) ++set.fallback_count;
    const Eigen::VectorXd g = gradient(y, eta);
    const Eigen::VectorXd w =
        L.triangularView<Eigen::Lower>().solve(g);  // w = L^{-1} g
    set.z0.segment(n * C, C) = L.transpose() * eta.eta - w;
    set.cholesky_blocks.push_back(std::move(L));
    set.hessian_blocks.push_back(std::move(H));
  }
  return set;
}

}  // namespace dirlap
