#include "attcal/numkernel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace attcal {

void DesignMatrix::validate() const {
  if (cols.cols() == 0 || cols.rows() == 0) throw ValidationError("design matrix is empty");
  if (!labels.empty() && static_cast<int>(labels.size()) != cols.cols())
    throw ValidationError("design matrix: label count != column count");
  for (int j = 0; j < cols.cols(); ++j)
    for (int i = 0; i < cols.rows(); ++i)
      if (!std::isfinite(cols(i, j)))
        throw ValidationError("design matrix: non-finite value in column " +
                              (labels.empty() ? std::to_string(j) : labels[j]) + ", row " +
                              std::to_string(i));
}

RedundancyResult detect_redundancy(const Eigen::MatrixXd& A, double rel_tol) {
  RedundancyResult out;
  const int p = static_cast<int>(A.cols());
  if (p == 0) return out;
  double max_norm = 0.0;
  for (int j = 0; j < p; ++j) max_norm = std::max(max_norm, A.col(j).norm());
  const double threshold = rel_tol * max_norm;
  // Orthonormal basis of the kept span, grown greedily left to right with
  // one reorthogonalization pass for stability.
  Eigen::MatrixXd Q(A.rows(), p);
  int r = 0;
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd v = A.col(j);
    for (int pass = 0; pass < 2; ++pass)
      for (int k = 0; k < r; ++k) v -= Q.col(k).dot(v) * Q.col(k);
    const double nrm = v.norm();
    if (nrm >= threshold && nrm > 0.0) {
      Q.col(r) = v / nrm;
      ++r;
      out.kept.push_back(j);
    } else {
      out.dropped.push_back(j);
    }
  }
  return out;
}

LeastSquaresFit solve_least_squares(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                    double rank_tol) {
  if (A.cols() == 0 || A.rows() == 0) throw ValidationError("least squares: empty design matrix");
  if (A.rows() != b.size()) throw ValidationError("least squares: row count != response length");
  LeastSquaresFit fit;
  RedundancyResult red = detect_redundancy(A, rank_tol);
  fit.kept = red.kept;
  fit.dropped = red.dropped;
  fit.rank = static_cast<int>(red.kept.size());
  fit.coef = Eigen::VectorXd::Zero(A.cols());
  if (fit.rank > 0) {
    Eigen::MatrixXd Ak(A.rows(), fit.rank);
    for (int j = 0; j < fit.rank; ++j) Ak.col(j) = A.col(red.kept[j]);
    Eigen::VectorXd ck = Ak.colPivHouseholderQr().solve(b);
    for (int j = 0; j < fit.rank; ++j) fit.coef[red.kept[j]] = ck[j];
  }
  fit.fitted = A * fit.coef;
  return fit;
}

LeastSquaresFit solve_least_squares(const DesignMatrix& A, const Eigen::VectorXd& b,
                                    double rank_tol) {
  A.validate();
  LeastSquaresFit fit = solve_least_squares(A.cols, b, rank_tol);
  for (int j : fit.dropped)
    fit.dropped_labels.push_back(A.labels.empty() ? std::to_string(j) : A.labels[j]);
  return fit;
}

double expit(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

double normal_pdf(double x) { return 0.3989422804014326779 * std::exp(-0.5 * x * x); }

namespace {

struct LinkEval {
  double prob;    // mean response at eta
  double score;   // d/d(eta) of the per-row log-likelihood, divided by (t - prob)
  double weight;  // Fisher information weight at eta
};

LinkEval eval_link(Link link, double eta) {
  LinkEval e;
  if (link == Link::logistic) {
    e.prob = expit(eta);
    e.score = 1.0;
    e.weight = e.prob * (1.0 - e.prob);
  } else {
    e.prob = normal_cdf(eta);
    const double v = std::max(e.prob * (1.0 - e.prob), 1e-300);
    const double d = normal_pdf(eta);
    e.score = d / v;
    e.weight = d * d / v;
  }
  return e;
}

double log_likelihood(Link link, const Eigen::VectorXd& eta, const Eigen::VectorXi& t,
                      const Eigen::VectorXd& w) {
  double ll = 0.0;
  for (int i = 0; i < eta.size(); ++i) {
    double p = link == Link::logistic ? expit(eta[i]) : normal_cdf(eta[i]);
    p = std::min(std::max(p, 1e-300), 1.0 - 1e-16);
    ll += w[i] * (t[i] == 1 ? std::log(p) : std::log1p(-p));
  }
  return ll;
}

}  // namespace

LogisticFit fit_logistic(const Eigen::MatrixXd& A, const Eigen::VectorXi& response, Link link,
                         const Eigen::VectorXd* offset, const Eigen::VectorXd* weights,
                         double tol, int max_iter) {
  const int n = static_cast<int>(A.rows());
  if (n == 0 || A.cols() == 0) throw ValidationError("binary fit: empty design matrix");
  if (response.size() != n) throw ValidationError("binary fit: response length != row count");
  if (offset && offset->size() != n) throw ValidationError("binary fit: offset length != rows");
  if (weights && weights->size() != n) throw ValidationError("binary fit: weight length != rows");
  int ones = 0;
  for (int i = 0; i < n; ++i) {
    if (response[i] != 0 && response[i] != 1)
      throw ValidationError("binary fit: response must be 0/1 (row " + std::to_string(i) + ")");
    ones += response[i];
  }
  if (ones == 0 || ones == n) throw ValidationError("binary fit: both response classes required");

  const double eta_cap = link == Link::logistic ? 30.0 : 8.0;
  const Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd off = offset ? *offset : Eigen::VectorXd::Zero(n);

  RedundancyResult red = detect_redundancy(A, 1e-8);
  const int p = static_cast<int>(red.kept.size());
  if (p == 0) throw ValidationError("binary fit: all columns redundant");
  Eigen::MatrixXd Ak(n, p);
  Eigen::VectorXd colscale(p);
  for (int j = 0; j < p; ++j) {
    Ak.col(j) = A.col(red.kept[j]);
    colscale[j] = std::max(1.0, Ak.col(j).cwiseAbs().maxCoeff());
    Ak.col(j) /= colscale[j];
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = off;
  double ll = log_likelihood(link, eta, response, w);

  auto check_separation = [&](const Eigen::VectorXd& lin) {
    double worst = lin.cwiseAbs().maxCoeff();
    if (worst > eta_cap) {
      std::ostringstream msg;
      msg << "binary fit: separation detected (|linear predictor| up to " << worst
          << " exceeds cap " << eta_cap << "; rows:";
      int listed = 0;
      for (int i = 0; i < lin.size() && listed < 5; ++i)
        if (std::abs(lin[i]) > eta_cap) {
          msg << ' ' << i;
          ++listed;
        }
      msg << ")";
      throw SeparationError(msg.str());
    }
  };

  LogisticFit fit;
  fit.link = link;
  fit.kept = red.kept;
  fit.dropped = red.dropped;

  double raw_res = 0.0, scaled_res = 0.0;
  bool stalled = false;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    Eigen::VectorXd score(n), wt(n);
    for (int i = 0; i < n; ++i) {
      LinkEval e = eval_link(link, eta[i]);
      score[i] = w[i] * (response[i] - e.prob) * e.score;
      wt[i] = w[i] * e.weight;
    }
    Eigen::VectorXd g = Ak.transpose() * score / n;  // scaled-column mean score
    raw_res = 0.0;
    scaled_res = 0.0;
    for (int j = 0; j < p; ++j) {
      scaled_res = std::max(scaled_res, std::abs(g[j]));
      raw_res = std::max(raw_res, std::abs(g[j]) * colscale[j]);
    }
    if (raw_res <= tol || (stalled && scaled_res <= tol)) {
      fit.converged = true;
      break;
    }
    Eigen::MatrixXd H = Ak.transpose() * wt.asDiagonal() * Ak / n;
    Eigen::VectorXd step = H.ldlt().solve(g);
    if (!step.allFinite()) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(H);
      step = cod.solve(g);
    }
    double s = 1.0;
    bool accepted = false;
    for (int half = 0; half < 50; ++half) {
      Eigen::VectorXd beta_try = beta + s * step;
      Eigen::VectorXd eta_try = off + Ak * beta_try;
      double ll_try = log_likelihood(link, eta_try, response, w);
      if (ll_try > ll || (half == 0 && ll_try == ll && scaled_res > tol)) {
        beta = beta_try;
        eta = eta_try;
        ll = ll_try;
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) {
      // Near the optimum the likelihood comparison hits floating-point noise
      // before the score residual reaches tolerance; take the pure Newton
      // step whenever it still shrinks the residual we actually test.
      Eigen::VectorXd beta_try = beta + step;
      Eigen::VectorXd eta_try = off + Ak * beta_try;
      Eigen::VectorXd score_try(n);
      for (int i = 0; i < n; ++i) {
        LinkEval e = eval_link(link, eta_try[i]);
        score_try[i] = w[i] * (response[i] - e.prob) * e.score;
      }
      Eigen::VectorXd g_try = Ak.transpose() * score_try / n;
      double raw_try = 0.0;
      for (int j = 0; j < p; ++j) raw_try = std::max(raw_try, std::abs(g_try[j]) * colscale[j]);
      if (raw_try < raw_res) {
        beta = beta_try;
        eta = eta_try;
        ll = log_likelihood(link, eta, response, w);
        stalled = false;
        check_separation(eta);
        continue;
      }
      if (stalled) break;  // no progress two rounds in a row
      stalled = true;
      continue;
    }
    stalled = false;
    check_separation(eta);
  }
  fit.iterations = iter;
  check_separation(eta);
  if (!fit.converged) {
    if (scaled_res <= tol) {
      fit.converged = true;
    } else {
      std::ostringstream msg;
      msg << "binary fit: no convergence after " << iter << " iterations (mean score residual "
          << raw_res << ", column-normalized " << scaled_res << ", tolerance " << tol << ")";
      throw ConvergenceError(msg.str());
    }
  }

  fit.coef = Eigen::VectorXd::Zero(A.cols());
  for (int j = 0; j < p; ++j) fit.coef[red.kept[j]] = beta[j] / colscale[j];
  fit.eta = eta;
  fit.prob.resize(n);
  for (int i = 0; i < n; ++i) {
    double pr = link == Link::logistic ? expit(eta[i]) : normal_cdf(eta[i]);
    fit.prob[i] = std::min(std::max(pr, 1e-300), 1.0 - 2.3e-16);
  }
  {
    Eigen::VectorXd score(n);
    for (int i = 0; i < n; ++i) {
      LinkEval e = eval_link(link, eta[i]);
      score[i] = w[i] * (response[i] - e.prob) * e.score;
    }
    Eigen::VectorXd g = Ak.transpose() * score / n;
    fit.max_score_residual = 0.0;
    for (int j = 0; j < p; ++j)
      fit.max_score_residual = std::max(fit.max_score_residual, std::abs(g[j]) * colscale[j]);
  }
  return fit;
}

LogisticFit fit_logistic(const DesignMatrix& A, const Eigen::VectorXi& response, Link link,
                         const Eigen::VectorXd* offset, const Eigen::VectorXd* weights,
                         double tol, int max_iter) {
  A.validate();
  return fit_logistic(A.cols, response, link, offset, weights, tol, max_iter);
}

std::pair<DesignMatrix, PcaTransform> pca_filter(const DesignMatrix& A, double variance_ratio) {
  A.validate();
  if (!(variance_ratio > 0.0 && variance_ratio < 1.0))
    throw ValidationError("pca filter: variance ratio must be in (0,1)");
  const int n = A.n();
  if (n < 2) throw ValidationError("pca filter: need at least 2 rows");
  PcaTransform t;
  t.mean = A.cols.colwise().mean();
  Eigen::MatrixXd C = A.cols.rowwise() - t.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double top_var = sv.size() ? sv[0] * sv[0] / (n - 1) : 0.0;
  if (top_var <= 0.0) throw ValidationError("pca filter: all columns constant");
  int keep = 0;
  for (int k = 0; k < sv.size(); ++k)
    if (sv[k] * sv[k] / (n - 1) >= variance_ratio * top_var) ++keep;
  t.loadings = svd.matrixV().leftCols(keep);
  t.component_variance.resize(keep);
  for (int k = 0; k < keep; ++k) t.component_variance[k] = sv[k] * sv[k] / (n - 1);
  for (int k = 0; k < keep; ++k) t.labels.push_back("pc" + std::to_string(k + 1));
  DesignMatrix out;
  out.cols = pca_apply(t, A.cols);
  out.labels = t.labels;
  return {out, t};
}

Eigen::MatrixXd pca_apply(const PcaTransform& t, const Eigen::MatrixXd& rows) {
  if (rows.cols() != t.mean.size())
    throw ValidationError("pca apply: column count does not match fitted transform");
  return (rows.rowwise() - t.mean.transpose()) * t.loadings;
}

}  // namespace attcal
