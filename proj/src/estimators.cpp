#include "attcal/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "attcal/el_solver.hpp"

namespace attcal {

std::string kind_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::OR: return "OR";
    case EstimatorKind::IPW: return "IPW";
    case EstimatorKind::IPW_RATIO: return "IPW.ratio";
    case EstimatorKind::AIPW: return "AIPW";
    case EstimatorKind::AIPW_SP: return "AIPW.SP";
    case EstimatorKind::HIR: return "HIR";
    case EstimatorKind::AIPW_HIR: return "AIPW.HIR";
    case EstimatorKind::REG: return "REG";
    case EstimatorKind::REG2: return "REG2";
    case EstimatorKind::LIK: return "LIK";
    case EstimatorKind::LIK2: return "LIK2";
  }
  return "?";
}

EstimatorKind kind_from_name(const std::string& name) {
  for (EstimatorKind k :
       {EstimatorKind::OR, EstimatorKind::IPW, EstimatorKind::IPW_RATIO, EstimatorKind::AIPW,
        EstimatorKind::AIPW_SP, EstimatorKind::HIR, EstimatorKind::AIPW_HIR, EstimatorKind::REG,
        EstimatorKind::REG2, EstimatorKind::LIK, EstimatorKind::LIK2})
    if (kind_name(k) == name) return k;
  throw ValidationError("unknown estimator name '" + name + "'");
}

namespace {

double treated_fraction_checked(const Dataset& data) {
  const int n1 = data.n1();
  if (n1 == 0) throw ValidationError("estimator: no treated rows");
  return static_cast<double>(n1) / data.n();
}

void check_probability(const Eigen::VectorXd& pi, const Dataset& data) {
  if (pi.size() != data.n()) throw ValidationError("estimator: propensity length != rows");
  for (int i = 0; i < pi.size(); ++i)
    if (!(pi[i] > 0.0 && pi[i] < 1.0) || !std::isfinite(pi[i]))
      throw ValidationError("estimator: propensity outside (0,1) at row " + std::to_string(i));
}

}  // namespace

double nu1_np(const Dataset& data) {
  const int n1 = data.n1();
  if (n1 == 0) throw ValidationError("treated mean: no treated rows");
  double s = 0.0;
  for (int i = 0; i < data.n(); ++i)
    if (data.t[i] == 1) s += data.y[i];
  return s / n1;
}

double nu_or(const Eigen::VectorXd& m_hat, const Dataset& data) {
  const int n1 = data.n1();
  if (n1 == 0) throw ValidationError("regression mean: no treated rows");
  if (m_hat.size() != data.n()) throw ValidationError("regression mean: fit length != rows");
  double s = 0.0;
  for (int i = 0; i < data.n(); ++i)
    if (data.t[i] == 1) s += m_hat[i];
  return s / n1;
}

double nu0_ipw(const Eigen::VectorXd& pi, const Dataset& data, bool ratio) {
  check_probability(pi, data);
  const int n = data.n();
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    if (data.t[i] == 0) {
      const double w = pi[i] / (1.0 - pi[i]);
      if (!std::isfinite(w))
        throw Error("inverse weighting: non-finite weight at row " + std::to_string(i));
      num += w * data.y[i];
      den += w;
    }
  }
  if (ratio) {
    if (den == 0.0) throw Error("inverse weighting: zero weight total on untreated rows");
    return num / den;
  }
  return (num / n) / treated_fraction_checked(data);
}

namespace {

// Augmented untreated-arm numerand at row i with correction h.
inline double tau0(int t, double y, double p, double h) {
  const double a = (1 - t) / (1.0 - p);
  return a * p * y - (a - 1.0) * h;
}

}  // namespace

double nu0_aipw(const Eigen::VectorXd& pi, const Eigen::VectorXd& m0, const Dataset& data,
                bool dr) {
  check_probability(pi, data);
  if (m0.size() != data.n()) throw ValidationError("augmented weighting: fit length != rows");
  const int n = data.n();
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double h = dr ? m0[i] : pi[i] * m0[i];
    s += tau0(data.t[i], data.y[i], pi[i], h);
  }
  return (s / n) / treated_fraction_checked(data);
}

double nu1_aipw_sp(const Eigen::VectorXd& pi, const Eigen::VectorXd& m1, const Dataset& data) {
  check_probability(pi, data);
  if (m1.size() != data.n()) throw ValidationError("augmented weighting: fit length != rows");
  const int n = data.n();
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += data.t[i] * data.y[i] - (data.t[i] - pi[i]) * m1[i];
  return (s / n) / treated_fraction_checked(data);
}

HirWeights hir_weights(const Dataset& data, const DesignMatrix& f) {
  f.validate();
  const int n = data.n();
  if (f.n() != n) throw ValidationError("balance weights: design rows != data rows");
  if (data.n0() == 0 || data.n1() == 0)
    throw ValidationError("balance weights: both treatment classes required");
  const int p = f.p();
  Eigen::VectorXd target = Eigen::VectorXd::Zero(p);  // treated column totals
  for (int i = 0; i < n; ++i)
    if (data.t[i] == 1) target += f.cols.row(i).transpose();

  // Dual objective: sum over untreated of exp(gamma' f) minus gamma' target.
  auto dual = [&](const Eigen::VectorXd& g, bool& overflow) {
    double s = 0.0;
    overflow = false;
    for (int i = 0; i < n; ++i)
      if (data.t[i] == 0) {
        const double e = f.cols.row(i).dot(g);
        if (e > 500.0) {
          overflow = true;
          return std::numeric_limits<double>::infinity();
        }
        s += std::exp(e);
      }
    return s - g.dot(target);
  };

  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(p);
  bool overflow = false;
  double val = dual(gamma, overflow);
  const double tol = 1e-10 * std::max(1.0, target.cwiseAbs().maxCoeff());
  double gnorm = 0.0;
  int iter = 0;
  for (; iter < 200; ++iter) {
    Eigen::VectorXd grad = -target;
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < n; ++i)
      if (data.t[i] == 0) {
        const double e = std::exp(f.cols.row(i).dot(gamma));
        grad += e * f.cols.row(i).transpose();
        hess += e * f.cols.row(i).transpose() * f.cols.row(i);
      }
    gnorm = grad.cwiseAbs().maxCoeff();
    if (gnorm <= tol) break;
    Eigen::VectorXd step = hess.ldlt().solve(-grad);
    if (!step.allFinite()) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(hess);
      step = cod.solve(-grad);
    }
    double s = 1.0;
    bool ok = false;
    for (int half = 0; half < 50; ++half) {
      Eigen::VectorXd g_try = gamma + s * step;
      bool of = false;
      double v_try = dual(g_try, of);
      if (!of && v_try < val) {
        gamma = g_try;
        val = v_try;
        ok = true;
        break;
      }
      s *= 0.5;
    }
    if (!ok) {
      // Near the optimum the dual-value comparison hits floating-point noise
      // before the gradient reaches tolerance; take the pure Newton step
      // whenever it still shrinks the gradient we actually test.
      Eigen::VectorXd g_try = gamma + step;
      bool of = false;
      double v_try = dual(g_try, of);
      if (!of) {
        Eigen::VectorXd grad_try = -target;
        for (int i = 0; i < n; ++i)
          if (data.t[i] == 0)
            grad_try += std::exp(f.cols.row(i).dot(g_try)) * f.cols.row(i).transpose();
        if (grad_try.cwiseAbs().maxCoeff() < gnorm) {
          gamma = g_try;
          val = v_try;
          ok = true;
        }
      }
    }
    if (!ok) break;
    if (gamma.cwiseAbs().maxCoeff() > 200.0)
      throw InfeasibleError(
          "balance weights: dual diverging, the groups do not overlap in some direction");
  }
  if (gnorm > tol) {
    if (gamma.cwiseAbs().maxCoeff() > 50.0)
      throw InfeasibleError("balance weights: dual appears unbounded (no feasible balance)");
    throw ConvergenceError("balance weights: gradient " + std::to_string(gnorm) +
                           " above tolerance after " + std::to_string(iter) + " iterations");
  }

  HirWeights out;
  out.gamma = gamma;
  out.iterations = iter;
  out.r.resize(n);
  out.pi_breve.resize(n);
  for (int i = 0; i < n; ++i) {
    const double e = f.cols.row(i).dot(gamma);
    out.r[i] = std::exp(e);
    out.pi_breve[i] = expit(e);
  }
  Eigen::VectorXd achieved = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < n; ++i)
    if (data.t[i] == 0) achieved += out.r[i] * f.cols.row(i).transpose();
  out.balance_residual = (achieved - target).cwiseAbs().maxCoeff() / n;
  return out;
}

double nu0_hir(const HirWeights& w, const Dataset& data) {
  double num = 0.0, den = 0.0;
  for (int i = 0; i < data.n(); ++i)
    if (data.t[i] == 0) {
      num += w.r[i] * data.y[i];
      den += w.r[i];
    }
  if (den == 0.0) throw Error("balance weighting: zero weight total");
  return num / den;
}

std::pair<TildeH, ControlVariates> build_tilde_h(
    const Eigen::VectorXd& tilde_pi, const Eigen::VectorXd& m0, const Eigen::VectorXd& m1,
    const DesignMatrix& f_design, const Dataset& data, bool include_h2, const DesignMatrix* c0,
    const DesignMatrix* c1, const Eigen::VectorXd* rho) {
  const int n = data.n();
  check_probability(tilde_pi, data);
  if (m0.size() != n || m1.size() != n)
    throw ValidationError("control variates: outcome-fit length != rows");

  TildeH th;
  th.tilde_pi = tilde_pi;

  // Per-arm target blocks: constant and fitted regression by default, or the
  // supplied calibration designs; all scaled by tilde_pi.
  auto make_v = [&](const DesignMatrix* c, const Eigen::VectorXd& m, const char* mlabel,
                    std::vector<std::string>& labels) {
    Eigen::MatrixXd v;
    if (c) {
      v = c->cols;
      labels = c->labels;
    } else {
      v.resize(n, 2);
      v.col(0).setOnes();
      v.col(1) = m;
      labels = {"const", mlabel};
    }
    for (int j = 0; j < v.cols(); ++j) v.col(j) = v.col(j).cwiseProduct(tilde_pi);
    return v;
  };
  std::vector<std::string> v0_labels, v1_labels;
  th.v0 = make_v(c0, m0, "m0_hat", v0_labels);
  th.v1 = make_v(c1, m1, "m1_hat", v1_labels);
  const int k1 = static_cast<int>(th.v1.cols());
  const int k0 = static_cast<int>(th.v0.cols());

  Eigen::VectorXd one_minus = Eigen::VectorXd::Ones(n) - tilde_pi;
  std::vector<Eigen::VectorXd> pre;
  for (int j = 0; j < k1; ++j) {
    pre.push_back(one_minus.cwiseProduct(th.v1.col(j)));
    th.pre_labels.push_back("t1:" + v1_labels[j]);
  }
  for (int j = 0; j < k0; ++j) {
    pre.push_back(tilde_pi.cwiseProduct(th.v0.col(j)));
    th.pre_labels.push_back("t0:" + v0_labels[j]);
  }
  if (include_h2) {
    Eigen::VectorXd pq = tilde_pi.cwiseProduct(one_minus);
    if (rho) {
      for (int j = 0; j < f_design.p(); ++j) {
        pre.push_back(pq.cwiseProduct(rho->cwiseProduct(f_design.cols.col(j))));
        th.pre_labels.push_back("sp:rho*" + f_design.labels[j]);
      }
    } else {
      for (int j = 1; j < f_design.p(); ++j) {  // skip the constant: its scaled
                                                // copy is already a target column
        pre.push_back(pq.cwiseProduct(f_design.cols.col(j)));
        th.pre_labels.push_back("sp:" + f_design.labels[j]);
      }
    }
    pre.push_back(pq.cwiseProduct(m0));
    th.pre_labels.push_back("sp:m0_hat");
  }

  Eigen::MatrixXd pre_mat(n, static_cast<int>(pre.size()));
  for (std::size_t j = 0; j < pre.size(); ++j) pre_mat.col(j) = pre[j];
  RedundancyResult red = detect_redundancy(pre_mat);
  th.kept = red.kept;
  th.dropped = red.dropped;
  if (th.kept.empty()) throw Error("control variates: all columns redundant");

  th.h.resize(n, static_cast<int>(th.kept.size()));
  for (std::size_t r = 0; r < th.kept.size(); ++r) {
    const int j = th.kept[r];
    th.h.col(r) = pre_mat.col(j);
    th.labels.push_back(th.pre_labels[j]);
    if (j < k1) {
      th.t1_cols.push_back(static_cast<int>(r));
      th.t1_src.push_back(j);
    } else if (j < k1 + k0) {
      th.t0_cols.push_back(static_cast<int>(r));
      th.t0_src.push_back(j - k1);
    }
  }

  ControlVariates cv;
  const int K = static_cast<int>(th.kept.size());
  cv.xi.resize(n, K);
  cv.zeta0.resize(n, K);
  cv.zeta1.resize(n, K);
  cv.eta0.resize(n);
  cv.eta1.resize(n);
  for (int i = 0; i < n; ++i) {
    const double p = tilde_pi[i];
    const double denom = p * (1.0 - p);
    cv.eta1[i] = data.t[i] * data.y[i];
    cv.eta0[i] = (1 - data.t[i]) * p * data.y[i] / (1.0 - p);
    for (int r = 0; r < K; ++r) {
      cv.xi(i, r) = (data.t[i] - p) * th.h(i, r) / denom;
      cv.zeta1(i, r) = data.t[i] * th.h(i, r) / denom;
      cv.zeta0(i, r) = (1 - data.t[i]) * th.h(i, r) / denom;
    }
  }
  return {th, cv};
}

std::pair<TildeH, ControlVariates> build_tilde_h(const AugmentedPSFit& aug, const Dataset& data,
                                                 bool include_h2) {
  const DesignMatrix* c0 = nullptr;
  const DesignMatrix* c1 = nullptr;
  if (aug.variant == AugVariant::calibrated) {
    c0 = &aug.c0_design;
    c1 = &aug.c1_design;
  }
  const Eigen::VectorXd* rho = aug.link == Link::logistic ? nullptr : &aug.rho_hat;
  return build_tilde_h(aug.tilde_pi, aug.m0_hat, aug.m1_hat, aug.f_design, data, include_h2, c0,
                       c1, rho);
}

RegResult nu_reg(const TildeH& th, const ControlVariates& cv, const Dataset& data, int arm) {
  const int n = data.n();
  const double q = treated_fraction_checked(data);
  const Eigen::MatrixXd xi_t = arm == 1 ? cv.xi : Eigen::MatrixXd(-cv.xi);
  const Eigen::MatrixXd& zeta_t = arm == 1 ? cv.zeta1 : cv.zeta0;
  const Eigen::VectorXd& eta_t = arm == 1 ? cv.eta1 : cv.eta0;

  Eigen::MatrixXd M = xi_t.transpose() * zeta_t / n;
  Eigen::VectorXd b = xi_t.transpose() * eta_t / n;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
  RegResult out;
  out.beta = cod.solve(b);
  out.min_norm = cod.rank() < M.cols();
  const Eigen::VectorXd xi_mean = xi_t.colwise().mean();
  out.nu = (eta_t.mean() - out.beta.dot(xi_mean)) / q;

  // Calibration check: feeding each retained target column through the same
  // construction must recover that column's plain mean.
  const std::vector<int>& src = arm == 1 ? th.t1_src : th.t0_src;
  const Eigen::MatrixXd& v = arm == 1 ? th.v1 : th.v0;
  double worst = 0.0;
  for (int j : src) {
    Eigen::VectorXd eta_c(n);
    for (int i = 0; i < n; ++i) {
      const double p = th.tilde_pi[i];
      eta_c[i] = arm == 1 ? data.t[i] * v(i, j) / p : (1 - data.t[i]) * v(i, j) / (1.0 - p);
    }
    Eigen::VectorXd beta_c = cod.solve(xi_t.transpose() * eta_c / n);
    const double val = eta_c.mean() - beta_c.dot(xi_mean);
    worst = std::max(worst, std::abs(val - v.col(j).mean()));
  }
  out.calib_residual = worst;
  return out;
}

Eigen::VectorXd beta_uncalibrated(const ControlVariates& cv, const Dataset& data, int arm) {
  const int n = data.n();
  const Eigen::MatrixXd xi_t = arm == 1 ? cv.xi : Eigen::MatrixXd(-cv.xi);
  const Eigen::VectorXd& eta_t = arm == 1 ? cv.eta1 : cv.eta0;
  Eigen::MatrixXd M = xi_t.transpose() * xi_t / n;
  Eigen::VectorXd b = xi_t.transpose() * eta_t / n;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
  return cod.solve(b);
}

double influence_variance(const Dataset& data, const Eigen::VectorXd& pi,
                          const Eigen::VectorXd& m_t, double nu_hat, InfluenceKind which,
                          const DesignMatrix* score_design, const Eigen::VectorXd* rho) {
  check_probability(pi, data);
  const int n = data.n();
  const double q = treated_fraction_checked(data);
  const bool is_sp = which == InfluenceKind::SP0 || which == InfluenceKind::SP1;
  if (is_sp && !score_design)
    throw ValidationError("influence variance: projection variants need the score design");
  if (m_t.size() != n &&
      (which != InfluenceKind::NP1))  // the treated-arm baseline needs no regression
    throw ValidationError("influence variance: fit length != rows");

  Eigen::VectorXd phi(n);
  for (int i = 0; i < n; ++i) {
    const int t = data.t[i];
    const double p = pi[i], y = data.y[i];
    switch (which) {
      case InfluenceKind::NP0:
        phi[i] = (tau0(t, y, p, m_t[i]) - t * nu_hat) / q;
        break;
      case InfluenceKind::SPstar0:
      case InfluenceKind::SP0:
        phi[i] = (tau0(t, y, p, p * m_t[i]) - p * nu_hat) / q;
        break;
      case InfluenceKind::NP1:
        phi[i] = (t * y - t * nu_hat) / q;
        break;
      case InfluenceKind::SPstar1:
      case InfluenceKind::SP1:
        phi[i] = (t * y - (t - p) * m_t[i] - p * nu_hat) / q;
        break;
    }
  }
  if (is_sp) {
    // Add back the projection of the dropped difference term onto the
    // assignment-model score, estimated from sample moments.
    Eigen::VectorXd D(n);
    for (int i = 0; i < n; ++i) D[i] = (data.t[i] - pi[i]) * (m_t[i] - nu_hat) / q;
    const int p = score_design->p();
    Eigen::MatrixXd S(n, p);
    for (int i = 0; i < n; ++i) {
      const double w = (data.t[i] - pi[i]) * (rho ? (*rho)[i] : 1.0);
      S.row(i) = w * score_design->cols.row(i);
    }
    Eigen::RowVectorXd s_mean = S.colwise().mean();
    Eigen::MatrixXd Sc = S.rowwise() - s_mean;
    Eigen::VectorXd Dc = D.array() - D.mean();
    Eigen::MatrixXd var = Sc.transpose() * Sc / (n - 1);
    Eigen::VectorXd cov = Sc.transpose() * Dc / (n - 1);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(var);
    Eigen::VectorXd c = cod.solve(cov);
    phi += S * c;
  }
  const double mean = phi.mean();
  double ss = 0.0;
  for (int i = 0; i < n; ++i) ss += (phi[i] - mean) * (phi[i] - mean);
  return n > 1 ? ss / (n - 1) / n : 0.0;
}

std::vector<EstimatorOutput> evaluate_suite(const Dataset& data, const SuiteConfig& config) {
  data.validate();
  if (config.kinds.empty()) throw ValidationError("estimator suite: empty estimator list");

  auto wants = [&](std::initializer_list<EstimatorKind> ks) {
    for (EstimatorKind k : ks)
      if (std::find(config.kinds.begin(), config.kinds.end(), k) != config.kinds.end())
        return true;
    return false;
  };

  const bool need_ps = wants({EstimatorKind::IPW, EstimatorKind::IPW_RATIO, EstimatorKind::AIPW,
                              EstimatorKind::AIPW_SP, EstimatorKind::REG, EstimatorKind::REG2,
                              EstimatorKind::LIK, EstimatorKind::LIK2});
  const bool need_or =
      wants({EstimatorKind::OR, EstimatorKind::AIPW, EstimatorKind::AIPW_SP,
             EstimatorKind::AIPW_HIR, EstimatorKind::REG, EstimatorKind::REG2, EstimatorKind::LIK,
             EstimatorKind::LIK2});
  const bool need_hir = wants({EstimatorKind::HIR, EstimatorKind::AIPW_HIR});
  const bool need_full = wants({EstimatorKind::REG, EstimatorKind::LIK});
  const bool need_offset = wants({EstimatorKind::REG2, EstimatorKind::LIK2});

  std::optional<PropensityFit> ps;
  std::optional<OutcomeFit> or0, or1;
  std::optional<HirWeights> hir;
  std::optional<AugmentedPSFit> aug_full, aug_off;
  std::optional<std::pair<TildeH, ControlVariates>> th_full, th_off;

  if (need_ps) ps.emplace(fit_ps(config.ps_spec, config.link, data));
  if (need_or) {
    or0.emplace(fit_or(config.or_spec, data, 0));
    or1.emplace(fit_or(config.or_spec, data, 1));
  }
  if (need_hir) {
    DesignMatrix f = build_regressors(config.ps_spec, data);
    hir.emplace(hir_weights(data, f));
  }
  if (need_full) {
    if (config.general_link_aug || config.link != Link::logistic)
      aug_full.emplace(fit_aug_ps_general(*ps, *or0, *or1, data));
    else
      aug_full.emplace(fit_aug_ps(*ps, *or0, *or1, data, AugVariant::full));
    th_full.emplace(build_tilde_h(*aug_full, data, true));
  }
  if (need_offset) {
    if (config.c0_spec || config.c1_spec) {
      const RegressorSpec* c0 = config.c0_spec ? &*config.c0_spec : nullptr;
      const RegressorSpec* c1 = config.c1_spec ? &*config.c1_spec : nullptr;
      aug_off.emplace(fit_aug_ps(*ps, *or0, *or1, data, AugVariant::calibrated, c0, c1));
    } else {
      aug_off.emplace(fit_aug_ps(*ps, *or0, *or1, data, AugVariant::offset));
    }
    th_off.emplace(build_tilde_h(*aug_off, data, false));
  }

  auto untreated_weight_max = [&](const Eigen::VectorXd& pi) {
    double w = 0.0;
    for (int i = 0; i < data.n(); ++i)
      if (data.t[i] == 0) w = std::max(w, 1.0 / (1.0 - pi[i]));
    return w;
  };

  const double hat_nu1 = nu1_np(data);
  std::vector<EstimatorOutput> out;
  for (EstimatorKind k : config.kinds) {
    EstimatorOutput o;
    o.kind = k;
    switch (k) {
      case EstimatorKind::OR:
        o.nu1 = nu_or(or1->m_hat, data);
        o.nu0 = nu_or(or0->m_hat, data);
        break;
      case EstimatorKind::IPW:
        o.nu1 = hat_nu1;
        o.nu0 = nu0_ipw(ps->pi_hat, data, false);
        o.diagnostics["max_inv_weight"] = untreated_weight_max(ps->pi_hat);
        break;
      case EstimatorKind::IPW_RATIO:
        o.nu1 = hat_nu1;
        o.nu0 = nu0_ipw(ps->pi_hat, data, true);
        o.diagnostics["max_inv_weight"] = untreated_weight_max(ps->pi_hat);
        break;
      case EstimatorKind::AIPW:
        o.nu1 = hat_nu1;
        o.nu0 = nu0_aipw(ps->pi_hat, or0->m_hat, data, true);
        o.diagnostics["max_inv_weight"] = untreated_weight_max(ps->pi_hat);
        break;
      case EstimatorKind::AIPW_SP: {
        o.nu1 = nu1_aipw_sp(ps->pi_hat, or1->m_hat, data);
        o.nu0 = nu0_aipw(ps->pi_hat, or0->m_hat, data, false);
        double gap = data.treated_fraction() - ps->pi_hat.mean();
        o.diagnostics["treated_fraction_gap"] = std::abs(gap);
        break;
      }
      case EstimatorKind::HIR:
        o.nu1 = hat_nu1;
        o.nu0 = nu0_hir(*hir, data);
        o.diagnostics["balance_residual"] = hir->balance_residual;
        break;
      case EstimatorKind::AIPW_HIR:
        o.nu1 = hat_nu1;
        o.nu0 = nu0_aipw(hir->pi_breve, or0->m_hat, data, true);
        o.diagnostics["balance_residual"] = hir->balance_residual;
        break;
      case EstimatorKind::REG:
      case EstimatorKind::REG2: {
        auto& th = k == EstimatorKind::REG ? *th_full : *th_off;
        RegResult r1 = nu_reg(th.first, th.second, data, 1);
        RegResult r0 = nu_reg(th.first, th.second, data, 0);
        o.nu1 = r1.nu;
        o.nu0 = r0.nu;
        o.diagnostics["calibration_residual"] = std::max(r0.calib_residual, r1.calib_residual);
        o.diagnostics["min_norm_fallback"] = (r0.min_norm || r1.min_norm) ? 1.0 : 0.0;
        break;
      }
      case EstimatorKind::LIK:
      case EstimatorKind::LIK2: {
        auto& th = k == EstimatorKind::LIK ? *th_full : *th_off;
        OmegaState st = maximize_ell(th.first.tilde_pi, th.first.h, data.t);
        KappaRefit kr1 = maximize_kappa(st, th.first, data.t, 1);
        KappaRefit kr0 = maximize_kappa(st, th.first, data.t, 0);
        LikEstimate le = nu_lik_tilde(kr0, kr1, th.first, data);
        o.nu1 = le.nu1;
        o.nu0 = le.nu0;
        o.diagnostics = le.diagnostics;
        o.diagnostics["solver_iterations"] = st.iterations + kr0.iterations + kr1.iterations;
        break;
      }
    }
    o.att = o.nu1 - o.nu0;
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace attcal
