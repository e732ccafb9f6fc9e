#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "attcal/errors.hpp"

namespace attcal {

// A named column block: the unit of model building.  Labels are carried
// through fitting so that dropped-column diagnostics stay readable.
struct DesignMatrix {
  Eigen::MatrixXd cols;
  std::vector<std::string> labels;

  int n() const { return static_cast<int>(cols.rows()); }
  int p() const { return static_cast<int>(cols.cols()); }
  void validate() const;
};

// Result of greedy left-to-right collinearity screening.
struct RedundancyResult {
  std::vector<int> kept;
  std::vector<int> dropped;
};

// Scans columns in order and keeps each one whose residual, after projecting
// out the span of the already-kept columns, is at least rel_tol times the
// largest original column norm.  Earlier columns always win over later
// duplicates, so the retained set is deterministic and stable under reruns.
RedundancyResult detect_redundancy(const Eigen::MatrixXd& A, double rel_tol = 1e-8);

struct LeastSquaresFit {
  Eigen::VectorXd coef;    // full length; dropped columns get coefficient 0
  Eigen::VectorXd fitted;  // A * coef
  int rank = 0;
  std::vector<int> kept;
  std::vector<int> dropped;
  std::vector<std::string> dropped_labels;
};

// Least squares of b on the columns of A with collinear columns dropped
// (recorded, not fatal).  Throws ValidationError on an empty matrix.
LeastSquaresFit solve_least_squares(const DesignMatrix& A, const Eigen::VectorXd& b,
                                    double rank_tol = 1e-8);
LeastSquaresFit solve_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                    double rank_tol = 1e-8);

enum class Link { logistic, probit };

struct LogisticFit {
  Eigen::VectorXd coef;  // full length; dropped columns get coefficient 0
  Eigen::VectorXd eta;   // linear predictor including any offset
  Eigen::VectorXd prob;  // fitted probabilities, strictly inside (0,1)
  bool converged = false;
  int iterations = 0;
  double max_score_residual = 0.0;  // max over retained columns of |mean score|
  Link link = Link::logistic;
  std::vector<int> kept;
  std::vector<int> dropped;
};

// Binary-response maximum likelihood by Fisher-scoring Newton steps with
// step-halving.  Convergence requires the per-column mean score
// |mean[(T - p) * a]| (likelihood score for the chosen link) to fall below
// tol; for badly scaled columns a column-normalized version of the same
// criterion is accepted once steps stop improving the likelihood.
//
// Throws SeparationError when the linear predictor runs past a cap
// (|eta| > 30 logistic, > 8 probit): beyond that the classes are numerically
// separated and inverse weights would overflow downstream.
// Throws ConvergenceError when max_iter Newton steps do not reach tolerance.
LogisticFit fit_logistic(const DesignMatrix& A, const Eigen::VectorXi& response,
                         Link link = Link::logistic,
                         const Eigen::VectorXd* offset = nullptr,
                         const Eigen::VectorXd* weights = nullptr, double tol = 1e-10,
                         int max_iter = 100);
LogisticFit fit_logistic(const Eigen::MatrixXd& A, const Eigen::VectorXi& response,
                         Link link = Link::logistic,
                         const Eigen::VectorXd* offset = nullptr,
                         const Eigen::VectorXd* weights = nullptr, double tol = 1e-10,
                         int max_iter = 100);

// Centering + rotation fitted once and reusable on new rows.
struct PcaTransform {
  Eigen::VectorXd mean;
  Eigen::MatrixXd loadings;           // columns are retained components
  Eigen::VectorXd component_variance; // sample variance of each retained score
  std::vector<std::string> labels;    // names of the produced score columns
};

// Principal-component column filter: centers the block, keeps the components
// whose sample variance is at least variance_ratio times the largest
// component variance, and returns the scores plus the transform so that
// resampled data can be projected identically.
std::pair<DesignMatrix, PcaTransform> pca_filter(const DesignMatrix& A, double variance_ratio);

// Applies a fitted transform: (rows - mean) * loadings.
Eigen::MatrixXd pca_apply(const PcaTransform& t, const Eigen::MatrixXd& rows);

// Link helpers shared by the model layer.
double expit(double x);
double logit(double p);
double normal_cdf(double x);
double normal_pdf(double x);

}  // namespace attcal
