#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "dirlap/errors.hpp"
#include "dirlap/formula.hpp"

// Stacked sparse design matrix A (CN x J) and the latent coefficient vector.
// Row order is observation-major: rows n*C .. n*C+C-1 belong to observation n.
// Column order is category-major: all coefficients of category 1, then
// category 2, and so on, each in declared term order.

namespace dirlap {

struct CovariateTable {
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> columns;

  Eigen::Index n_rows() const { return columns.empty() ? 0 : columns[0].size(); }

  bool has(const std::string& name) const {
    for (const auto& n : names)
      if (n == name) return true;
    return false;
  }
  const Eigen::VectorXd& column(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return columns[i];
    throw lookup_error("covariate '" + name + "' not found");
  }
  void add(std::string name, Eigen::VectorXd values) {
    if (!columns.empty() && values.size() != n_rows())
      throw shape_error("CovariateTable: column '" + name +
                        "' has inconsistent length");
    names.push_back(std::move(name));
    columns.push_back(std::move(values));
  }
};

struct DesignMatrix {
  Eigen::SparseMatrix<double> entries;    // CN x J
  Eigen::Index n_obs = 0;                 // N
  Eigen::Index n_cat = 0;                 // C
  std::vector<int> category_offset;       // size C+1; columns of category c are
                                          // [offset[c], offset[c+1])
  std::vector<std::string> column_labels; // "y1:intercept", "y1:v1", ...

  Eigen::Index n_coefficients() const { return entries.cols(); }
};

// Coefficient vector plus the scalar prior precision tau (diagonal prior
// precision tau * I).
struct LatentField {
  Eigen::VectorXd x;
  double prior_precision = 1e-4;
};

// n_rows_hint supplies the observation count when the table has no columns
// (intercept-only models fit from pure-response data).
inline DesignMatrix build_design_matrix(const FormulaSpec& spec,
                                        const CovariateTable& data,
                                        Eigen::Index n_rows_hint = 0) {
  const int C = spec.n_categories();
  const int J = spec.n_coefficients();
  const Eigen::Index N = data.n_rows() > 0 ? data.n_rows() : n_rows_hint;
  if (N < 1) throw shape_error("build_design_matrix: empty covariate table");

  DesignMatrix design;
  design.n_obs = N;
  design.n_cat = C;
  design.category_offset.assign(static_cast<std::size_t>(C) + 1, 0);

  std::vector<const Eigen::VectorXd*> covariate_of_column(
      static_cast<std::size_t>(J), nullptr);
  int j = 0;
  for (int c = 0; c < C; ++c) {
    design.category_offset[c] = j;
    for (const Term& term : spec.per_category_terms[c]) {
      design.column_labels.push_back("y" + std::to_string(c + 1) + ":" +
                                     term.label());
      if (!term.intercept)
        covariate_of_column[j] = &data.column(term.name);  // throws lookup_error
      ++j;
    }
  }
  design.category_offset[C] = j;

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(N) * J);
  for (int c = 0; c < C; ++c) {
    for (int col = design.category_offset[c]; col < design.category_offset[c + 1];
         ++col) {
      const Eigen::VectorXd* cov = covariate_of_column[col];
      for (Eigen::Index n = 0; n < N; ++n) {
        const double value = cov ? (*cov)[n] : 1.0;
        triplets.emplace_back(static_cast<int>(n) * C + c, col, value);
      }
    }
  }
  design.entries.resize(N * C, J);
  design.entries.setFromTriplets(triplets.begin(), triplets.end());
  design.entries.makeCompressed();
  return design;
}

// eta = A x, length CN; entry n*C + c is the linear predictor of category c,
// observation n.
inline Eigen::VectorXd vectorize_predictor(const DesignMatrix& A,
                                           const LatentField& x) {
  if (x.x.size() != A.entries.cols())
    throw shape_error("vectorize_predictor: coefficient length " +
                      std::to_string(x.x.size()) + " != design columns " +
                      std::to_string(A.entries.cols()));
  return A.entries * x.x;
}

}  // namespace dirlap
