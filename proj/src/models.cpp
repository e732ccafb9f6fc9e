#include "attcal/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace attcal {

RegressorSpec linear_spec(int n_cols, const std::string& name) {
  RegressorSpec s;
  s.name = name;
  for (int j = 0; j < n_cols; ++j) s.terms.push_back({j, 1, -1});
  return s;
}

RegressorSpec squares_spec(int n_cols, const std::string& name) {
  RegressorSpec s;
  s.name = name;
  for (int j = 0; j < n_cols; ++j) s.terms.push_back({j, 2, -1});
  return s;
}

namespace {

std::string term_label(const TermSpec& t, const std::vector<std::string>& names) {
  auto nm = [&](int j) {
    return (j < static_cast<int>(names.size())) ? names[j] : ("x" + std::to_string(j));
  };
  std::string lbl = nm(t.col);
  if (t.power != 1) lbl += "^" + std::to_string(t.power);
  if (t.col2 >= 0) lbl += "*" + nm(t.col2);
  return lbl;
}

}  // namespace

DesignMatrix build_regressors(const RegressorSpec& spec, const Eigen::MatrixXd& X,
                              const std::vector<std::string>& col_names) {
  const int n = static_cast<int>(X.rows());
  DesignMatrix d;
  d.cols.resize(n, 1 + static_cast<int>(spec.terms.size()));
  d.cols.col(0).setOnes();
  d.labels.push_back("const");
  for (std::size_t k = 0; k < spec.terms.size(); ++k) {
    const TermSpec& t = spec.terms[k];
    if (t.col < 0 || t.col >= X.cols() || (t.col2 >= X.cols()))
      throw ValidationError("regressor term references a missing covariate column");
    const std::string lbl = term_label(t, col_names);
    for (int i = 0; i < n; ++i) {
      double v = std::pow(X(i, t.col), t.power);
      if (t.col2 >= 0) v *= X(i, t.col2);
      if (!std::isfinite(v))
        throw ValidationError("regressor term '" + lbl + "' produced a non-finite value at row " +
                              std::to_string(i));
      d.cols(i, 1 + k) = v;
    }
    d.labels.push_back(lbl);
  }
  return d;
}

DesignMatrix build_regressors(const RegressorSpec& spec, const Dataset& data) {
  return build_regressors(spec, data.X, data.names);
}

PropensityFit fit_ps(const RegressorSpec& spec, Link link, const Dataset& data) {
  data.validate();
  if (data.n1() == 0 || data.n0() == 0)
    throw ValidationError("propensity fit: both treatment classes required");
  PropensityFit out;
  out.spec = spec;
  out.link = link;
  out.design = build_regressors(spec, data);
  out.fit = fit_logistic(out.design, data.t, link);
  out.pi_hat = out.fit.prob;
  const int n = data.n();
  out.rho_hat.resize(n);
  for (int i = 0; i < n; ++i) {
    if (link == Link::logistic) {
      out.rho_hat[i] = 1.0;
    } else {
      const double p = out.pi_hat[i];
      out.rho_hat[i] = normal_pdf(out.fit.eta[i]) / (p * (1.0 - p));
    }
  }
  return out;
}

OutcomeFit fit_or(const RegressorSpec& spec, const Dataset& data, int group) {
  data.validate();
  OutcomeFit out;
  out.group = group;
  out.spec = spec;
  out.design = build_regressors(spec, data);
  const int n = data.n();
  int ng = 0;
  for (int i = 0; i < n; ++i) ng += (data.t[i] == group);
  if (ng == 0) throw ValidationError("outcome fit: group has no rows");
  Eigen::MatrixXd Ag(ng, out.design.p());
  Eigen::VectorXd yg(ng);
  int r = 0;
  for (int i = 0; i < n; ++i)
    if (data.t[i] == group) {
      Ag.row(r) = out.design.cols.row(i);
      yg[r] = data.y[i];
      ++r;
    }
  LeastSquaresFit ls = solve_least_squares(Ag, yg);
  out.coef = ls.coef;
  out.dropped = ls.dropped;
  out.m_hat = out.design.cols * out.coef;
  return out;
}

namespace {

double max_abs_mean_residual(const Eigen::VectorXi& t, const Eigen::VectorXd& prob,
                             const Eigen::MatrixXd& cols) {
  const int n = static_cast<int>(prob.size());
  Eigen::VectorXd resid(n);
  for (int i = 0; i < n; ++i) resid[i] = t[i] - prob[i];
  Eigen::VectorXd g = cols.transpose() * resid / n;
  return g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
}

}  // namespace

AugmentedPSFit fit_aug_ps(const PropensityFit& ps, const OutcomeFit& or0, const OutcomeFit& or1,
                          const Dataset& data, AugVariant variant, const RegressorSpec* c0_spec,
                          const RegressorSpec* c1_spec) {
  const int n = data.n();
  if (ps.pi_hat.size() != n || or0.m_hat.size() != n || or1.m_hat.size() != n)
    throw ValidationError("augmented fit: component fits disagree on row count");
  if (ps.link != Link::logistic)
    throw ValidationError(
        "augmented fit: non-logistic base link requires the link-generic solver");

  AugmentedPSFit out;
  out.variant = variant;
  out.link = ps.link;
  out.pi_hat = ps.pi_hat;
  out.m0_hat = or0.m_hat;
  out.m1_hat = or1.m_hat;
  out.f_design = ps.design;
  out.rho_hat = ps.rho_hat;

  if (variant == AugVariant::full) {
    const int pf = ps.design.p();
    DesignMatrix aug = ps.design;
    aug.cols.conservativeResize(n, pf + 2);
    aug.cols.col(pf) = or0.m_hat;
    aug.cols.col(pf + 1) = or1.m_hat;
    aug.labels.push_back("m0_hat");
    aug.labels.push_back("m1_hat");
    out.aug_design = aug;
    RedundancyResult red = detect_redundancy(aug.cols);
    const int j0 = pf, j1 = pf + 1;
    const bool m0_red = std::find(red.kept.begin(), red.kept.end(), j0) == red.kept.end();
    const bool m1_red = std::find(red.kept.begin(), red.kept.end(), j1) == red.kept.end();
    if (m0_red && m1_red) {
      // Both outcome columns are linear in the base regressors: the enlarged
      // model is the base model reparameterized, so reuse the base fit.
      out.collapsed_to_base = true;
      out.tilde_pi = ps.pi_hat;
      out.coef = Eigen::VectorXd::Zero(aug.p());
      out.coef.head(ps.design.p()) = ps.fit.coef;
      out.dropped = {j0, j1};
    } else {
      LogisticFit fit = fit_logistic(aug, data.t, ps.link);
      out.tilde_pi = fit.prob;
      out.coef = fit.coef;
      out.dropped = fit.dropped;
    }
  } else {
    Eigen::VectorXd offset = ps.fit.eta;
    DesignMatrix aug;
    if (variant == AugVariant::offset) {
      aug.cols.resize(n, 3);
      aug.cols.col(0).setOnes();
      aug.cols.col(1) = or0.m_hat;
      aug.cols.col(2) = or1.m_hat;
      aug.labels = {"const", "m0_hat", "m1_hat"};
    } else {
      RegressorSpec s0 = c0_spec ? *c0_spec : or0.spec;
      RegressorSpec s1 = c1_spec ? *c1_spec : or1.spec;
      out.c0_design = build_regressors(s0, data);
      out.c1_design = build_regressors(s1, data);
      const int p0 = out.c0_design.p() - 1, p1 = out.c1_design.p() - 1;
      aug.cols.resize(n, 1 + p0 + p1);
      aug.cols.col(0).setOnes();
      aug.labels = {"const"};
      for (int j = 0; j < p0; ++j) {
        aug.cols.col(1 + j) = out.c0_design.cols.col(1 + j);
        aug.labels.push_back("c0:" + out.c0_design.labels[1 + j]);
      }
      for (int j = 0; j < p1; ++j) {
        aug.cols.col(1 + p0 + j) = out.c1_design.cols.col(1 + j);
        aug.labels.push_back("c1:" + out.c1_design.labels[1 + j]);
      }
    }
    out.aug_design = aug;
    LogisticFit fit = fit_logistic(aug, data.t, ps.link, &offset);
    out.tilde_pi = fit.prob;
    out.coef = fit.coef;
    out.dropped = fit.dropped;
  }

  // Post-fit diagnostic: the enlarged model must balance the outcome columns
  // (or target columns) and, for the full variant, the base regressors.
  Eigen::MatrixXd check(n, 2);
  check.col(0) = out.m0_hat;
  check.col(1) = out.m1_hat;
  double r = max_abs_mean_residual(data.t, out.tilde_pi, check);
  if (variant == AugVariant::full)
    r = std::max(r, max_abs_mean_residual(data.t, out.tilde_pi, ps.design.cols));
  if (variant == AugVariant::calibrated) {
    r = max_abs_mean_residual(data.t, out.tilde_pi, out.c0_design.cols);
    r = std::max(r, max_abs_mean_residual(data.t, out.tilde_pi, out.c1_design.cols));
  }
  out.max_aug_residual = r;
  return out;
}

AugmentedPSFit fit_aug_ps_general(const PropensityFit& ps, const OutcomeFit& or0,
                                  const OutcomeFit& or1, const Dataset& data) {
  const int n = data.n();
  const int pf = ps.design.p();
  // Model regressors u and estimating weights w = rho * u.
  Eigen::MatrixXd U(n, pf + 3), W(n, pf + 3);
  for (int j = 0; j < pf; ++j) {
    U.col(j) = ps.design.cols.col(j);
    W.col(j) = ps.rho_hat.cwiseProduct(ps.design.cols.col(j));
  }
  Eigen::VectorXd inv_rho = ps.rho_hat.cwiseInverse();
  U.col(pf) = inv_rho;
  U.col(pf + 1) = inv_rho.cwiseProduct(or0.m_hat);
  U.col(pf + 2) = inv_rho.cwiseProduct(or1.m_hat);
  W.col(pf).setOnes();
  W.col(pf + 1) = or0.m_hat;
  W.col(pf + 2) = or1.m_hat;

  RedundancyResult red = detect_redundancy(U);
  const int p = static_cast<int>(red.kept.size());
  Eigen::MatrixXd Uk(n, p), Wk(n, p);
  for (int j = 0; j < p; ++j) {
    Uk.col(j) = U.col(red.kept[j]);
    Wk.col(j) = W.col(red.kept[j]);
  }

  auto inv_link = [&](double e) { return ps.link == Link::logistic ? expit(e) : normal_cdf(e); };
  auto dens = [&](double e) {
    return ps.link == Link::logistic ? expit(e) * (1.0 - expit(e)) : normal_pdf(e);
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
  for (int j = 0; j < p; ++j)
    if (red.kept[j] < pf) theta[j] = ps.fit.coef[red.kept[j]];

  auto residual = [&](const Eigen::VectorXd& th) {
    Eigen::VectorXd eta = Uk * th;
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r[i] = data.t[i] - inv_link(eta[i]);
    return Eigen::VectorXd(Wk.transpose() * r / n);
  };

  Eigen::VectorXd F = residual(theta);
  double fn = F.cwiseAbs().maxCoeff();
  const double tol = 1e-10;
  int iter = 0;
  for (; iter < 200 && fn > tol; ++iter) {
    Eigen::VectorXd eta = Uk * theta;
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = dens(eta[i]);
    Eigen::MatrixXd J = -(Wk.transpose() * d.asDiagonal() * Uk) / n;
    Eigen::VectorXd step = J.colPivHouseholderQr().solve(-F);
    double s = 1.0;
    bool ok = false;
    for (int half = 0; half < 50; ++half) {
      Eigen::VectorXd th_try = theta + s * step;
      Eigen::VectorXd F_try = residual(th_try);
      double fn_try = F_try.cwiseAbs().maxCoeff();
      if (fn_try < fn) {
        theta = th_try;
        F = F_try;
        fn = fn_try;
        ok = true;
        break;
      }
      s *= 0.5;
    }
    if (!ok) break;
  }
  if (fn > tol)
    throw ConvergenceError("link-generic augmented fit: estimating-equation residual " +
                           std::to_string(fn) + " above tolerance");

  AugmentedPSFit out;
  out.variant = AugVariant::full;
  out.link = ps.link;
  out.pi_hat = ps.pi_hat;
  out.m0_hat = or0.m_hat;
  out.m1_hat = or1.m_hat;
  out.f_design = ps.design;
  out.rho_hat = ps.rho_hat;
  out.aug_design.cols = U;
  out.aug_design.labels = ps.design.labels;
  out.aug_design.labels.push_back("1/rho");
  out.aug_design.labels.push_back("m0_hat/rho");
  out.aug_design.labels.push_back("m1_hat/rho");
  out.dropped = red.dropped;
  out.coef = Eigen::VectorXd::Zero(pf + 3);
  for (int j = 0; j < p; ++j) out.coef[red.kept[j]] = theta[j];
  Eigen::VectorXd eta = Uk * theta;
  out.tilde_pi.resize(n);
  for (int i = 0; i < n; ++i) {
    double pr = inv_link(eta[i]);
    out.tilde_pi[i] = std::min(std::max(pr, 1e-300), 1.0 - 2.3e-16);
  }
  Eigen::MatrixXd check(n, 2);
  check.col(0) = or0.m_hat;
  check.col(1) = or1.m_hat;
  out.max_aug_residual = max_abs_mean_residual(data.t, out.tilde_pi, check);
  return out;
}

}  // namespace attcal
