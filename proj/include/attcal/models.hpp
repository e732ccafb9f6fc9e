#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "attcal/dataset.hpp"
#include "attcal/numkernel.hpp"

namespace attcal {

// One product term X[col]^power * X[col2] (col2 < 0 means no second factor).
struct TermSpec {
  int col = 0;
  int power = 1;
  int col2 = -1;
};

// Declarative regressor list.  The constant column is always implied first;
// terms follow in declaration order.
struct RegressorSpec {
  std::string name;             // e.g. "linear", "quadratic", "z", "x"
  std::vector<TermSpec> terms;  // empty list = constant only
};

// All columns of X, each to the first power.
RegressorSpec linear_spec(int n_cols, const std::string& name = "linear");
// Squares of every column (no linear terms): the two-covariate curved preset.
RegressorSpec squares_spec(int n_cols, const std::string& name = "quadratic");

// Evaluates a spec on a covariate matrix: constant first, then terms in
// order.  Throws ValidationError when a term produces a non-finite value,
// naming the row and term.
DesignMatrix build_regressors(const RegressorSpec& spec, const Eigen::MatrixXd& X,
                              const std::vector<std::string>& col_names = {});
DesignMatrix build_regressors(const RegressorSpec& spec, const Dataset& data);

// Fitted treatment-assignment model.
struct PropensityFit {
  RegressorSpec spec;
  Link link = Link::logistic;
  DesignMatrix design;
  LogisticFit fit;
  Eigen::VectorXd pi_hat;   // fitted P(T=1|X), strictly in (0,1)
  Eigen::VectorXd rho_hat;  // link density ratio, identically 1 for logistic
};

PropensityFit fit_ps(const RegressorSpec& spec, Link link, const Dataset& data);

// Fitted within-group outcome regression, predicted on every row.
struct OutcomeFit {
  int group = 0;  // which treatment arm the fit used
  RegressorSpec spec;
  DesignMatrix design;    // evaluated on all rows
  Eigen::VectorXd coef;   // full length; dropped columns get 0
  Eigen::VectorXd m_hat;  // prediction on all rows
  std::vector<int> dropped;
};

OutcomeFit fit_or(const RegressorSpec& spec, const Dataset& data, int group);

// How the fitted outcome regressions enter the enlarged assignment model.
enum class AugVariant {
  full,       // refit all coefficients over (f, m0, m1)
  offset,     // keep the base fit as an offset, fit (1, m0, m1)
  calibrated  // keep the base fit as an offset, fit (1, c0, c1) target blocks
};

struct AugmentedPSFit {
  AugVariant variant = AugVariant::full;
  Link link = Link::logistic;
  Eigen::VectorXd tilde_pi;  // fitted probabilities of the enlarged model
  bool collapsed_to_base = false;
  Eigen::VectorXd coef;   // coefficients over aug_design columns (dropped = 0)
  DesignMatrix aug_design;
  std::vector<int> dropped;
  double max_aug_residual = 0.0;  // max |mean[(T - tilde_pi) * column]| over checked columns

  // Inputs carried along for the control-variate layer.
  Eigen::VectorXd pi_hat;
  Eigen::VectorXd m0_hat, m1_hat;
  DesignMatrix f_design;
  Eigen::VectorXd rho_hat;
  DesignMatrix c0_design, c1_design;  // calibration target blocks (constant first); empty
                                      // unless variant == calibrated
};

// Enlarges a fitted assignment model with the fitted outcome regressions so
// that the refit forces mean[(T - tilde_pi) * m_hat_t] = 0.  For the full
// variant, outcome columns that are linear in the base regressors are
// detected and the fit collapses to the base model exactly.  The calibrated
// variant balances user-chosen target functions instead (defaults to the
// outcome-regression designs).
AugmentedPSFit fit_aug_ps(const PropensityFit& ps, const OutcomeFit& or0, const OutcomeFit& or1,
                          const Dataset& data, AugVariant variant,
                          const RegressorSpec* c0_spec = nullptr,
                          const RegressorSpec* c1_spec = nullptr);

// Link-generic version of the full variant: solves the estimating equations
// mean[(T - P(theta' u)) * w] = 0 with u = (f, 1/rho, m0/rho, m1/rho) and
// w = (rho f, 1, m0, m1) by damped Newton.  With the logistic link this
// reduces to fit_aug_ps(full).
AugmentedPSFit fit_aug_ps_general(const PropensityFit& ps, const OutcomeFit& or0,
                                  const OutcomeFit& or1, const Dataset& data);

}  // namespace attcal
