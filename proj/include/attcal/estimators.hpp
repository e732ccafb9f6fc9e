#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attcal/dataset.hpp"
#include "attcal/models.hpp"
#include "attcal/numkernel.hpp"

namespace attcal {

enum class EstimatorKind {
  OR,         // outcome-regression plug-in for both arms
  IPW,        // inverse-probability weighting, fixed denominator
  IPW_RATIO,  // inverse-probability weighting, self-normalized
  AIPW,       // augmented IPW, doubly robust flavor
  AIPW_SP,    // augmented IPW, efficiency-oriented flavor (not doubly robust)
  HIR,        // exact moment-balancing weights
  AIPW_HIR,   // augmented IPW on top of the balancing weights
  REG,        // calibrated control-variate regression, full augmentation
  REG2,       // calibrated control-variate regression, offset augmentation
  LIK,        // calibrated likelihood weighting, full augmentation
  LIK2        // calibrated likelihood weighting, offset augmentation
};

std::string kind_name(EstimatorKind k);
EstimatorKind kind_from_name(const std::string& name);

struct EstimatorOutput {
  EstimatorKind kind = EstimatorKind::OR;
  double nu0 = 0.0;
  double nu1 = 0.0;
  double att = 0.0;  // always nu1 - nu0
  std::map<std::string, double> diagnostics;
};

// Mean treated outcome.
double nu1_np(const Dataset& data);

// Mean of a fitted regression over treated rows.
double nu_or(const Eigen::VectorXd& m_hat, const Dataset& data);

// Weighted mean of untreated outcomes with odds weights pi/(1-pi); the plain
// form divides by the treated fraction, the ratio form self-normalizes.
double nu0_ipw(const Eigen::VectorXd& pi, const Dataset& data, bool ratio);

// Augmented weighting for the untreated-arm mean.  dr=true is the doubly
// robust flavor (regression correction enters unscaled); dr=false scales the
// correction by pi, which is efficient under a correct assignment model but
// not doubly robust.
double nu0_aipw(const Eigen::VectorXd& pi, const Eigen::VectorXd& m0, const Dataset& data,
                bool dr);

// Efficiency-oriented augmented estimate of the treated-arm mean.
double nu1_aipw_sp(const Eigen::VectorXd& pi, const Eigen::VectorXd& m1, const Dataset& data);

// Exponential tilting weights making untreated moments of f match treated
// totals exactly.
struct HirWeights {
  Eigen::VectorXd gamma;
  Eigen::VectorXd r;         // weight per row (meaningful on untreated rows)
  Eigen::VectorXd pi_breve;  // implied propensity expit(gamma' f)
  // Sup-norm gap between the weighted untreated and raw treated column means.
  double balance_residual = 0.0;
  int iterations = 0;
};

// Solves the strictly convex dual of the balance constraints
// sum_{T=0} r(X) f(X) = sum_{T=1} f(X).  Throws InfeasibleError when the
// groups do not overlap in some direction of f (dual diverges).
HirWeights hir_weights(const Dataset& data, const DesignMatrix& f);
double nu0_hir(const HirWeights& w, const Dataset& data);

// The control-variate column block built from an augmented assignment model:
// per-arm target blocks v_t scaled by arm-specific probability factors, an
// optional spread block from the base regressors, and redundancy bookkeeping.
struct TildeH {
  Eigen::MatrixXd h;                 // retained columns
  std::vector<std::string> labels;   // labels of retained columns
  std::vector<int> kept, dropped;    // indices into the pre-screen column list
  std::vector<std::string> pre_labels;
  Eigen::VectorXd tilde_pi;
  Eigen::MatrixXd v0, v1;            // target blocks (columns scaled by tilde_pi)
  std::vector<int> t1_cols, t1_src;  // retained positions of the treated-arm
                                     // block and the v1 column each came from
  std::vector<int> t0_cols, t0_src;  // same for the untreated-arm block
};

struct ControlVariates {
  Eigen::VectorXd eta0, eta1;  // weighting numerands per arm
  Eigen::MatrixXd xi;          // mean-zero score columns (treated sign); the
                               // untreated-arm version is its negation
  Eigen::MatrixXd zeta0, zeta1;
};

// Assembles the control-variate block.  Default targets are (1, m_hat_t)
// per arm; explicit c0/c1 designs replace them.  include_h2 adds the spread
// block pi(1-pi) * (nonconstant f, m0) — with a row-wise `rho` supplied (non-
// logistic links) the spread block uses rho-scaled f including its constant.
std::pair<TildeH, ControlVariates> build_tilde_h(
    const Eigen::VectorXd& tilde_pi, const Eigen::VectorXd& m0, const Eigen::VectorXd& m1,
    const DesignMatrix& f_design, const Dataset& data, bool include_h2,
    const DesignMatrix* c0 = nullptr, const DesignMatrix* c1 = nullptr,
    const Eigen::VectorXd* rho = nullptr);
std::pair<TildeH, ControlVariates> build_tilde_h(const AugmentedPSFit& aug, const Dataset& data,
                                                 bool include_h2);

struct RegResult {
  double nu = 0.0;
  Eigen::VectorXd beta;
  double calib_residual = 0.0;  // how far the fitted targets are from exact calibration
  bool min_norm = false;        // moment matrix was singular; minimum-norm solve used
};

// Control-variate regression estimate of the arm-t mean: the weighting
// numerand minus its best moment-matched combination of score columns,
// normalized by the treated fraction.  The moment matrix pairs scores with
// arm-specific companions, which calibrates the fitted targets exactly.
RegResult nu_reg(const TildeH& th, const ControlVariates& cv, const Dataset& data, int arm);

// Plain projection coefficient (scores paired with themselves).  Exposed only
// as a diagnostic: it does not calibrate and is inconsistent when the
// assignment model is wrong.
Eigen::VectorXd beta_uncalibrated(const ControlVariates& cv, const Dataset& data, int arm);

enum class InfluenceKind { NP0, SPstar0, SP0, NP1, SPstar1, SP1 };

// Plug-in variance estimate from the estimator's influence function:
// sample variance of the rowwise influence values divided by n.  The SP
// variants add the sample-moment projection of the dropped term onto the
// assignment-model score and require score_design (the base regressors);
// `rho` supplies the score weighting for non-logistic links.
double influence_variance(const Dataset& data, const Eigen::VectorXd& pi,
                          const Eigen::VectorXd& m_t, double nu_hat, InfluenceKind which,
                          const DesignMatrix* score_design = nullptr,
                          const Eigen::VectorXd* rho = nullptr);

// One-stop evaluation of a set of estimators sharing fitted models.
struct SuiteConfig {
  RegressorSpec ps_spec;
  RegressorSpec or_spec;
  Link link = Link::logistic;
  std::vector<EstimatorKind> kinds;
  std::optional<RegressorSpec> c0_spec, c1_spec;  // calibrated-target overrides
  bool general_link_aug = false;  // route the full augmentation through the
                                  // link-generic solver (required for probit)
};

std::vector<EstimatorOutput> evaluate_suite(const Dataset& data, const SuiteConfig& config);

}  // namespace attcal
