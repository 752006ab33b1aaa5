#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dirlap/fitter.hpp"
#include "dirlap/rng.hpp"

using namespace dirlap;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

struct TestData {
  FormulaSpec spec;
  CompositionMatrix Y;
  DesignMatrix A;
  CovariateTable cov;
};

// Dataset drawn from the model itself: covariates U(0,1), responses Dirichlet
// with alpha = exp(A x_true).
TestData make_dataset(const std::string& formula, const Eigen::VectorXd& x_true,
                      int N, std::uint64_t seed) {
  int C = 1;
  for (char ch : formula)
    if (ch == '|') ++C;
  TestData data;
  data.spec = parse_formula(formula, C);
  Rng rng(seed);
  std::vector<std::string> names;
  for (const auto& block : data.spec.per_category_terms)
    for (const Term& t : block)
      if (!t.intercept && !data.cov.has(t.name)) {
        Eigen::VectorXd col(N);
        for (int i = 0; i < N; ++i) col[i] = rng.uniform();
        data.cov.add(t.name, col);
      }
  if (data.cov.names.empty()) {
    Eigen::VectorXd dummy = Eigen::VectorXd::Zero(N);
    data.cov.add("unused", dummy);
  }
  data.A = build_design_matrix(data.spec, data.cov);
  const Eigen::VectorXd eta = data.A.entries * x_true;
  data.Y.data.resize(C, N);
  Eigen::VectorXd g(C);
  for (int n = 0; n < N; ++n) {
    const Eigen::ArrayXd alpha = eta.segment(n * C, C).array().exp();
    for (;;) {
      for (int c = 0; c < C; ++c) g[c] = rng.gamma(alpha[c]);
      g /= g.sum();
      bool interior = true;
      for (int c = 0; c < C; ++c) interior = interior && g[c] > 0 && g[c] < 1;
      if (interior) break;
    }
    data.Y.data.col(n) = g;
  }
  return data;
}

const char* kSim2Formula = "y ~ 1 + v1 | 1 + v1 | 1 + v1 | 1 + v1";
const Eigen::VectorXd kSim2Truth =
    (Eigen::VectorXd(8) << -1.5, 2, 1, -3, -3, -1, 1.5, 5).finished();

}  // namespace

TEST_CASE("objective closed forms", "[fitter]") {
  // Uniform responses at x = 0: every per-observation likelihood term is the
  // log-density of Dir(1,1) at any point, which is 0.
  TestData flat = make_dataset("y ~ 1 | 1", vec({0, 0}), 4, 5);
  flat.Y.data.setConstant(0.5);
  REQUIRE(objective(vec({0, 0}), flat.Y, flat.A, 1e-4) ==
          Catch::Approx(0.0).margin(1e-13));

  // The prior term alone: objective - sum of likelihood terms = tau/2 |x|^2.
  TestData data = make_dataset(kSim2Formula, kSim2Truth, 20, 6);
  const Eigen::VectorXd x = vec({0.3, -1.2, 0.5, 2.0, -0.7, 0.1, 1.5, -0.4});
  const double tau = 0.37;
  const Eigen::VectorXd eta = data.A.entries * x;
  double lik = 0.0;
  for (int n = 0; n < 20; ++n)
    lik += neg_log_lik({data.Y.data.col(n)}, {eta.segment(n * 4, 4)});
  REQUIRE(objective(x, data.Y, data.A, tau) ==
          Catch::Approx(lik + 0.5 * tau * x.squaredNorm()).epsilon(1e-13));

  // Against the high-precision Dirichlet density reference: intercept-only
  // C=3 with x = log(0.3, 2, 4.5) makes alpha the reference parameters.
  TestData d3 = make_dataset("y ~ 1 | 1 | 1", vec({0, 0, 0}), 1, 7);
  d3.Y.data.col(0) = vec({0.2, 0.3, 0.5});
  const Eigen::VectorXd xl =
      vec({std::log(0.3), std::log(2.0), std::log(4.5)});
  REQUIRE(objective(xl, d3.Y, d3.A, 2.0) ==
          Catch::Approx(-0.154881148125072008617 + 0.5 * 2.0 * xl.squaredNorm())
              .epsilon(1e-12));

  REQUIRE_THROWS_AS(objective(vec({0, 0}), d3.Y, d3.A, 1e-4), shape_error);
}

TEST_CASE("objective derivatives: closed form and finite differences", "[fitter]") {
  // Single observation y = (0.5, 0.5), intercept-only, x = 0, tau = 0:
  // gradient per coordinate is digamma(1) - digamma(2) - log(0.5) = log(2) - 1.
  TestData flat = make_dataset("y ~ 1 | 1", vec({0, 0}), 1, 8);
  flat.Y.data.col(0) = vec({0.5, 0.5});
  const auto der = objective_derivatives(vec({0, 0}), flat.Y, flat.A, 1e-300);
  REQUIRE(der.gradient[0] == Catch::Approx(-0.306852819440054691).epsilon(1e-12));
  REQUIRE(der.gradient[1] == Catch::Approx(-0.306852819440054691).epsilon(1e-12));

  // Finite-difference check of gradient on a nontrivial instance.
  TestData data = make_dataset(kSim2Formula, kSim2Truth, 15, 9);
  const Eigen::VectorXd x = 0.5 * kSim2Truth;
  const double tau = 1e-4;
  const auto d = objective_derivatives(x, data.Y, data.A, tau);
  for (int j = 0; j < 8; ++j) {
    const double h = 3e-6 * std::max(1.0, std::abs(x[j]));
    Eigen::VectorXd up = x, dn = x;
    up[j] += h;
    dn[j] -= h;
    const double fd =
        (objective(up, data.Y, data.A, tau) - objective(dn, data.Y, data.A, tau)) /
        (2 * h);
    REQUIRE(fd == Catch::Approx(d.gradient[j]).epsilon(2e-6).margin(1e-8));
  }
  REQUIRE((d.hessian - d.hessian.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::LLT<Eigen::MatrixXd> llt(d.hessian);
  REQUIRE(llt.info() == Eigen::Success);
}

TEST_CASE("mode search: convergence, symmetry, monotone descent", "[fitter]") {
  // Mirrored data make the two intercepts exchangeable, so the mode must be
  // symmetric.
  TestData data = make_dataset("y ~ 1 | 1", vec({0, 0}), 6, 10);
  for (int n = 0; n < 6; n += 2) {
    const double p = 0.15 + 0.1 * n;
    data.Y.data.col(n) = vec({p, 1 - p});
    data.Y.data.col(n + 1) = vec({1 - p, p});
  }
  FitConfig config;
  const ModeResult mode = posterior_mode(data.Y, data.A, config);
  REQUIRE(std::abs(mode.x0[0] - mode.x0[1]) < 1e-7);
  REQUIRE(mode.final_gradient_norm <= config.gradient_tolerance);

  // Independent stationarity recheck.
  const auto der = objective_derivatives(mode.x0, data.Y, data.A,
                                         config.prior_precision);
  REQUIRE(der.gradient.lpNorm<Eigen::Infinity>() <= config.gradient_tolerance);

  // Monotone descent over accepted iterations (tiny allowance only where the
  // decrease is at floating-point resolution).
  const TestData big = make_dataset(kSim2Formula, kSim2Truth, 100, 11);
  const ModeResult m2 = posterior_mode(big.Y, big.A, config);
  REQUIRE(m2.final_gradient_norm <= config.gradient_tolerance);
  for (std::size_t i = 1; i < m2.trace.size(); ++i) {
    const double allowance =
        1e-11 * (1.0 + std::abs(m2.trace[i - 1].objective));
    REQUIRE(m2.trace[i].objective <= m2.trace[i - 1].objective + allowance);
  }
  REQUIRE(m2.trace.front().iteration == 1);
  REQUIRE(m2.trace.back().step_length == 0.0);

  // Iteration starvation raises the trace-carrying error.
  FitConfig starved = config;
  starved.max_iterations = 2;
  try {
    posterior_mode(big.Y, big.A, starved);
    FAIL("expected mode_nonconvergence_error");
  } catch (const mode_nonconvergence_error& e) {
    REQUIRE(e.trace.size() == 2);
  }
}

TEST_CASE("scalar conjugate update closed form", "[fitter]") {
  // One pseudo-observation with A = [1], H = 1, z0 = 2, tau = 1e-4:
  // Q = 1.0001, mean = 2/1.0001, sd = 1/sqrt(1.0001).
  const double tau = 1e-4;
  const double Q = 1.0 * 1.0 * 1.0 + tau;
  const double mean = (1.0 * 1.0 * 2.0) / Q;
  REQUIRE(Q == Catch::Approx(1.0001).epsilon(1e-15));
  REQUIRE(mean == Catch::Approx(2.0 / 1.0001).epsilon(1e-15));
  REQUIRE(1.0 / std::sqrt(Q) == Catch::Approx(1.0 / std::sqrt(1.0001)).epsilon(1e-15));
}

TEST_CASE("gaussian posterior equals a dense conjugate assembly", "[fitter]") {
  TestData data = make_dataset(kSim2Formula, kSim2Truth, 40, 12);
  FitConfig config;
  const ModeResult mode = posterior_mode(data.Y, data.A, config);
  const PosteriorFit fit =
      gaussian_posterior(mode.x0, data.Y, data.A, config.prior_precision);

  // Independent assembly from the pseudo-observations.
  const Eigen::VectorXd eta0 = data.A.entries * mode.x0;
  const PseudoObservationSet pobs = pseudo_observations(data.Y, eta0);
  const Eigen::MatrixXd Ad(data.A.entries);
  const int C = 4, J = 8;
  Eigen::MatrixXd Q =
      config.prior_precision * Eigen::MatrixXd::Identity(J, J);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(J);
  for (int n = 0; n < 40; ++n) {
    const Eigen::MatrixXd An = Ad.middleRows(n * C, C);
    Q += An.transpose() * pobs.hessian_blocks[static_cast<std::size_t>(n)] * An;
    rhs += An.transpose() *
           (pobs.cholesky_blocks[static_cast<std::size_t>(n)] *
            pobs.z0.segment(n * C, C));
  }
  const Eigen::VectorXd mean = Q.ldlt().solve(rhs);
  const Eigen::MatrixXd cov = Q.inverse();

  REQUIRE((fit.posterior_precision - Q).cwiseAbs().maxCoeff() <
          1e-10 * Q.cwiseAbs().maxCoeff());
  REQUIRE((fit.posterior_mean - mean).cwiseAbs().maxCoeff() < 1e-10);
  for (int j = 0; j < J; ++j)
    REQUIRE(fit.marginal_sd[j] ==
            Catch::Approx(std::sqrt(cov(j, j))).epsilon(1e-10));

  // Residual invariant of the solve.
  REQUIRE((fit.posterior_precision * fit.posterior_mean - rhs)
              .cwiseAbs()
              .maxCoeff() < 1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));

  // Gaussian quantiles.
  const double z = sf::norm_quantile(0.975);
  for (int j = 0; j < J; ++j) {
    REQUIRE(fit.q025[j] == Catch::Approx(fit.posterior_mean[j] - z * fit.marginal_sd[j]).margin(1e-14));
    REQUIRE(fit.q50[j] == fit.posterior_mean[j]);
    REQUIRE(fit.q975[j] == Catch::Approx(fit.posterior_mean[j] + z * fit.marginal_sd[j]).margin(1e-14));
  }

  // Posterior mean collapses onto the mode at stationarity.
  REQUIRE((fit.posterior_mean - mode.x0).cwiseAbs().maxCoeff() <=
          1e-6 * (1.0 + mode.x0.norm()));

  // Linearization self-consistency: the pseudo-model curvature is the exact
  // objective curvature at the mode.
  const auto der =
      objective_derivatives(mode.x0, data.Y, data.A, config.prior_precision);
  REQUIRE((der.hessian - fit.posterior_precision).cwiseAbs().maxCoeff() <
          1e-9 * fit.posterior_precision.cwiseAbs().maxCoeff());
}

TEST_CASE("criteria: point-mass limit, DIC vs WAIC, MC stability", "[fitter]") {
  TestData data = make_dataset(kSim2Formula, kSim2Truth, 30, 13);

  // tau -> infinity pins the posterior at 0: DIC -> deviance(0), WAIC penalty
  // -> 0, and both criteria coincide with the deviance at zero.
  FitConfig pin;
  pin.prior_precision = 1e12;
  pin.n_posterior_draws = 400;
  const FittedModel pinned = fit_model(data.spec, data.Y, data.A, pin);
  double dev0 = 0.0;
  for (int n = 0; n < 30; ++n)
    dev0 += 2.0 * neg_log_lik({data.Y.data.col(n)},
                              {Eigen::VectorXd::Zero(4)});
  REQUIRE(pinned.fit.criteria.dic == Catch::Approx(dev0).margin(1e-4));
  REQUIRE(pinned.fit.criteria.waic == Catch::Approx(dev0).margin(1e-4));

  // Ordinary fit: DIC and WAIC agree to a few percent; LCPO is the mean
  // predictive surprise, roughly DIC / (2N).
  FitConfig config;
  const FittedModel model = fit_model(data.spec, data.Y, data.A, config);
  const ModelCriteria& crit = model.fit.criteria;
  REQUIRE(std::abs(crit.dic - crit.waic) <=
          0.05 * std::max(std::abs(crit.dic), std::abs(crit.waic)));
  REQUIRE(!crit.waic_degenerate);
  REQUIRE(std::abs(crit.lcpo - crit.dic / 60.0) <
          0.2 * std::max(1.0, std::abs(crit.dic / 60.0)));

  // MC stability: the seed spread at S draws bounds the S -> 2S drift.
  FitConfig half = config;
  half.n_posterior_draws = 1000;
  std::vector<double> dic, waic, lcpo;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    half.seed = seed;
    const ModelCriteria c = model_criteria(model.fit, data.Y, data.A, half);
    dic.push_back(c.dic);
    waic.push_back(c.waic);
    lcpo.push_back(c.lcpo);
  }
  auto spread_sd = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  FitConfig full = config;
  full.n_posterior_draws = 2000;
  full.seed = 77;
  const ModelCriteria c2 = model_criteria(model.fit, data.Y, data.A, full);
  const double se_scale = std::sqrt(1.0 + 0.5);  // var(S) + var(2S)
  REQUIRE(std::abs(c2.dic - dic[0]) <= 3.0 * se_scale * spread_sd(dic) + 1e-9);
  REQUIRE(std::abs(c2.waic - waic[0]) <= 3.0 * se_scale * spread_sd(waic) + 1e-9);
  REQUIRE(std::abs(c2.lcpo - lcpo[0]) <= 3.0 * se_scale * spread_sd(lcpo) + 1e-9);
}

TEST_CASE("fit is deterministic given the seed", "[fitter]") {
  TestData data = make_dataset(kSim2Formula, kSim2Truth, 25, 14);
  FitConfig config;
  config.n_posterior_draws = 500;
  const FittedModel a = fit_model(data.spec, data.Y, data.A, config);
  const FittedModel b = fit_model(data.spec, data.Y, data.A, config);
  REQUIRE(a.fit.mode == b.fit.mode);
  REQUIRE(a.fit.posterior_mean == b.fit.posterior_mean);
  REQUIRE(a.fit.marginal_sd == b.fit.marginal_sd);
  REQUIRE(a.fit.q025 == b.fit.q025);
  REQUIRE(a.fit.q975 == b.fit.q975);
  REQUIRE(a.fit.criteria.dic == b.fit.criteria.dic);
  REQUIRE(a.fit.criteria.waic == b.fit.criteria.waic);
  REQUIRE(a.fit.criteria.lcpo == b.fit.criteria.lcpo);
  REQUIRE(a.fit.iteration_trace.size() == b.fit.iteration_trace.size());

  FitConfig other = config;
  other.seed = 2;
  const FittedModel c = fit_model(data.spec, data.Y, data.A, other);
  REQUIRE(c.fit.posterior_mean == a.fit.posterior_mean);  // seed-free stages
  REQUIRE(c.fit.criteria.dic != a.fit.criteria.dic);      // sampled stage
}

TEST_CASE("prediction marginals and draws", "[fitter]") {
  TestData data = make_dataset("y ~ 1 | 1 | 1", vec({-0.5, 0.2, 0.9}), 40, 15);
  FitConfig config;
  config.n_posterior_draws = 2000;
  const FittedModel model = fit_model(data.spec, data.Y, data.A, config);

  CovariateTable one_row;
  one_row.add("unused", Eigen::VectorXd::Zero(1));
  const PredictiveResult pred = predict(model, one_row);

  // Intercept-only: the row design vectors are unit vectors, so eta marginals
  // equal the coefficient marginals.
  for (int c = 0; c < 3; ++c) {
    REQUIRE(pred.eta[0][c].mean ==
            Catch::Approx(model.fit.posterior_mean[c]).margin(1e-13));
    REQUIRE(pred.eta[0][c].sd ==
            Catch::Approx(model.fit.marginal_sd[c]).margin(1e-13));
    REQUIRE(pred.eta[0][c].q025 ==
            Catch::Approx(model.fit.q025[c]).margin(1e-12));
    // Lognormal identities for alpha.
    const double mu = pred.eta[0][c].mean, sd = pred.eta[0][c].sd;
    REQUIRE(pred.alpha[0][c].q50 == Catch::Approx(std::exp(mu)).epsilon(1e-8));
    REQUIRE(pred.alpha[0][c].mean ==
            Catch::Approx(std::exp(mu + 0.5 * sd * sd)).epsilon(1e-12));
    REQUIRE(pred.alpha[0][c].sd ==
            Catch::Approx(std::exp(mu + 0.5 * sd * sd) *
                          std::sqrt(std::expm1(sd * sd)))
                .epsilon(1e-12));
  }

  // Sampled composition means live on the simplex.
  double total_mean = 0.0;
  for (int c = 0; c < 3; ++c) {
    const PredictiveSummary& s = pred.mean_composition[0][c];
    REQUIRE(s.q025 <= s.q50);
    REQUIRE(s.q50 <= s.q975);
    REQUIRE(s.mean > 0.0);
    REQUIRE(s.mean < 1.0);
    total_mean += s.mean;
  }
  REQUIRE(total_mean == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(pred.precision[0].mean > 0.0);

  // Prediction is deterministic and covariate-checked.
  const PredictiveResult again = predict(model, one_row);
  REQUIRE(again.mean_composition[0][0].mean == pred.mean_composition[0][0].mean);

  TestData with_cov = make_dataset("y ~ 1 + v1 | 1 | 1", vec({0, 1, 0, 0}), 30, 16);
  const FittedModel m2 = fit_model(with_cov.spec, with_cov.Y, with_cov.A, config);
  CovariateTable missing;
  missing.add("v2", Eigen::VectorXd::Zero(1));
  REQUIRE_THROWS_AS(predict(m2, missing), lookup_error);
}

TEST_CASE("config validation", "[fitter]") {
  FitConfig c;
  REQUIRE_NOTHROW(c.validate());
  c.prior_precision = 0.0;
  REQUIRE_THROWS_AS(c.validate(), domain_error);
  c = FitConfig{};
  c.max_iterations = 0;
  REQUIRE_THROWS_AS(c.validate(), domain_error);
  c = FitConfig{};
  c.armijo_c1 = 0.7;
  REQUIRE_THROWS_AS(c.validate(), domain_error);
  c = FitConfig{};
  c.backtrack_factor = 1.0;
  REQUIRE_THROWS_AS(c.validate(), domain_error);
  c = FitConfig{};
  c.n_posterior_draws = 1;
  REQUIRE_THROWS_AS(c.validate(), domain_error);
}
