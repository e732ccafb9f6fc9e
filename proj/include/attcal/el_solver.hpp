#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "attcal/dataset.hpp"
#include "attcal/estimators.hpp"
#include "attcal/models.hpp"

namespace attcal {

// State of the shifted-probability weighting model omega = tilde_pi + h * lambda.
struct OmegaState {
  Eigen::VectorXd lambda;
  Eigen::VectorXd omega;
  bool feasible = false;  // omega > 0 on treated rows and < 1 on untreated rows
  int iterations = 0;
  double grad_norm = 0.0;
  bool degraded = false;  // curvature loss forced a least-squares Newton direction
};

// Maximizes the binomial log-likelihood mean[T log omega + (1-T) log(1-omega)]
// over lambda, subject to omega staying positive on treated rows and below one
// on untreated rows.  Starts at lambda = 0 (always feasible), takes Newton
// steps halved until both feasibility and ascent hold.  Throws
// ConvergenceError when the iteration cap is reached; the message carries the
// final gradient norm.
OmegaState maximize_ell(const Eigen::VectorXd& tilde_pi, const Eigen::MatrixXd& h,
                        const Eigen::VectorXi& t, double tol = 1e-10, int max_iter = 200);

// Self-normalized weighted outcome means at the joint maximizer: both arms
// share the constraint structure, so their weight denominators agree.
std::pair<double, double> nu_lik_hat(const OmegaState& state, const Eigen::VectorXd& tilde_pi,
                                     const Dataset& data);

// One arm's coefficient block refit holding all other coefficients fixed.
struct KappaRefit {
  int arm = 0;
  Eigen::VectorXd lambda_full;   // full lambda with the arm block replaced
  Eigen::VectorXd lambda_block;  // just the refit block
  Eigen::VectorXd omega_arm;     // omega for arm 1, 1 - omega for arm 0
  int iterations = 0;
  double residual = 0.0;  // sup-norm of the arm's calibration equations
};

// Refits the arm-t block of lambda so the inverse-weighted arm moments of the
// target block match their full-sample means exactly.  The objective is
// concave; steps are halved until the arm's rows stay strictly feasible.
// Throws InfeasibleError when no interior maximizer exists and
// ConvergenceError when an arm weight collapses below 1e-12.
KappaRefit maximize_kappa(const OmegaState& state, const TildeH& th, const Eigen::VectorXi& t,
                          int arm, double tol = 1e-10, int max_iter = 200);

struct LikEstimate {
  double nu0 = 0.0;
  double nu1 = 0.0;
  double att = 0.0;
  Eigen::VectorXd lambda_hat;
  Eigen::VectorXd lambda_tilde_0, lambda_tilde_1;
  std::map<std::string, double> diagnostics;
};

// Final weighted means from the per-arm refits.  Self-normalized, hence each
// arm's estimate lies inside its observed outcome range.  Records how far the
// self-normalizing denominator sits from the treated fraction (the two agree
// when the weighting model was fitted with an intercept).
LikEstimate nu_lik_tilde(const KappaRefit& refit0, const KappaRefit& refit1, const TildeH& th,
                         const Dataset& data);

// Full pipeline: augment the assignment model with the outcome fits, build
// the control-variate block, maximize, refit per arm, and form the weighted
// means.  simplified=false uses the fully refit augmentation and the whole
// column block; simplified=true uses the offset augmentation and only the
// target block.
LikEstimate lik_estimator(const Dataset& data, const PropensityFit& ps, const OutcomeFit& or0,
                          const OutcomeFit& or1, bool simplified);

}  // namespace attcal
