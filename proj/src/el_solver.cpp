#include "attcal/el_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace attcal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Log-likelihood of the shifted weighting model; -inf when any same-arm row
// leaves the feasible region.
double ell_value(const Eigen::VectorXd& omega, const Eigen::VectorXi& t) {
  const int n = static_cast<int>(omega.size());
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    if (t[i] == 1) {
      if (omega[i] <= 0.0) return kNegInf;
      s += std::log(omega[i]);
    } else {
      if (omega[i] >= 1.0) return kNegInf;
      s += std::log1p(-omega[i]);
    }
  }
  return s / n;
}

}  // namespace

OmegaState maximize_ell(const Eigen::VectorXd& tilde_pi, const Eigen::MatrixXd& h,
                        const Eigen::VectorXi& t, double tol, int max_iter) {
  const int n = static_cast<int>(tilde_pi.size());
  const int K = static_cast<int>(h.cols());
  if (h.rows() != n || t.size() != n)
    throw ValidationError("weight solver: dimension mismatch");
  for (int i = 0; i < n; ++i)
    if (!(tilde_pi[i] > 0.0 && tilde_pi[i] < 1.0))
      throw ValidationError("weight solver: base probabilities must lie in (0,1)");

  Eigen::VectorXd tol_col(K);
  for (int j = 0; j < K; ++j)
    tol_col[j] = tol * std::max(1.0, h.col(j).cwiseAbs().maxCoeff());

  OmegaState st;
  st.lambda = Eigen::VectorXd::Zero(K);
  st.omega = tilde_pi;
  double cur = ell_value(st.omega, t);

  Eigen::VectorXd g(K);
  auto gradient = [&](const Eigen::VectorXd& omega) {
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r[i] = (t[i] - omega[i]) / (omega[i] * (1.0 - omega[i]));
    return Eigen::VectorXd(h.transpose() * r / n);
  };
  auto converged = [&](const Eigen::VectorXd& grad) {
    for (int j = 0; j < K; ++j)
      if (std::abs(grad[j]) > tol_col[j]) return false;
    return true;
  };

  int iter = 0;
  bool done = false;
  for (; iter < max_iter; ++iter) {
    g = gradient(st.omega);
    if (converged(g)) {
      done = true;
      break;
    }
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) {
      const double o = st.omega[i];
      w[i] = t[i] / (o * o) + (1 - t[i]) / ((1.0 - o) * (1.0 - o));
    }
    Eigen::MatrixXd A = h.transpose() * w.asDiagonal() * h / n;
    Eigen::VectorXd step = A.ldlt().solve(g);
    if (!step.allFinite()) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
      step = cod.solve(g);
      st.degraded = true;
    }
    double s = 1.0;
    bool accepted = false;
    for (int half = 0; half < 50; ++half) {
      Eigen::VectorXd lam_try = st.lambda + s * step;
      Eigen::VectorXd om_try = tilde_pi + h * lam_try;
      double v_try = ell_value(om_try, t);
      if (v_try > cur) {
        st.lambda = lam_try;
        st.omega = om_try;
        cur = v_try;
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) {
      // The likelihood comparison can plateau at machine precision before the
      // gradient reaches tolerance; take the pure Newton step whenever it is
      // feasible and shrinks the (column-normalized) gradient we actually test.
      Eigen::VectorXd lam_try = st.lambda + step;
      Eigen::VectorXd om_try = tilde_pi + h * lam_try;
      const double v_try = ell_value(om_try, t);
      if (v_try != kNegInf) {
        Eigen::VectorXd g_try = gradient(om_try);
        double cur_ratio = 0.0, try_ratio = 0.0;
        for (int j = 0; j < K; ++j) {
          cur_ratio = std::max(cur_ratio, std::abs(g[j]) / tol_col[j]);
          try_ratio = std::max(try_ratio, std::abs(g_try[j]) / tol_col[j]);
        }
        if (try_ratio < cur_ratio) {
          st.lambda = lam_try;
          st.omega = om_try;
          cur = v_try;
          accepted = true;
        }
      }
    }
    if (!accepted) break;  // no usable direction left at machine precision
  }
  g = gradient(st.omega);
  st.grad_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  st.iterations = iter;
  st.feasible = true;
  if (!done && !converged(g)) {
    std::ostringstream msg;
    msg << "weight solver: gradient sup-norm " << st.grad_norm << " above tolerance after "
        << iter << " iterations";
    throw ConvergenceError(msg.str());
  }
  return st;
}

std::pair<double, double> nu_lik_hat(const OmegaState& state, const Eigen::VectorXd& tilde_pi,
                                     const Dataset& data) {
  if (!state.feasible) throw InfeasibleError("weighted means: infeasible solver state");
  const int n = data.n();
  if (state.omega.size() != n || tilde_pi.size() != n)
    throw ValidationError("weighted means: dimension mismatch");
  double n0 = 0, d0 = 0, n1 = 0, d1 = 0;
  for (int i = 0; i < n; ++i) {
    const double p = tilde_pi[i], o = state.omega[i];
    if (data.t[i] == 1) {
      n1 += p * data.y[i] / o;
      d1 += p / o;
    } else {
      n0 += p * data.y[i] / (1.0 - o);
      d0 += p / (1.0 - o);
    }
  }
  if (d0 == 0.0 || d1 == 0.0) throw Error("weighted means: zero denominator");
  return {n0 / d0, n1 / d1};
}

KappaRefit maximize_kappa(const OmegaState& state, const TildeH& th, const Eigen::VectorXi& t,
                          int arm, double tol, int max_iter) {
  const int n = static_cast<int>(th.tilde_pi.size());
  const std::vector<int>& block = arm == 1 ? th.t1_cols : th.t0_cols;
  const std::vector<int>& src = arm == 1 ? th.t1_src : th.t0_src;
  const Eigen::MatrixXd& v_all = arm == 1 ? th.v1 : th.v0;
  const int kb = static_cast<int>(block.size());

  KappaRefit out;
  out.arm = arm;
  out.lambda_full = state.lambda;
  out.lambda_block.resize(kb);
  for (int j = 0; j < kb; ++j) out.lambda_block[j] = state.lambda[block[j]];
  if (kb == 0) {
    Eigen::VectorXd om = th.tilde_pi + th.h * out.lambda_full;
    out.omega_arm = arm == 1 ? om : Eigen::VectorXd(Eigen::VectorXd::Ones(n) - om);
    return out;
  }

  Eigen::MatrixXd V(n, kb);
  for (int j = 0; j < kb; ++j) V.col(j) = v_all.col(src[j]);
  Eigen::VectorXd v_mean = V.colwise().mean();
  Eigen::VectorXd tol_col(kb);
  for (int j = 0; j < kb; ++j)
    tol_col[j] = tol * std::max(1.0, V.col(j).cwiseAbs().maxCoeff());

  auto omega_of = [&](const Eigen::VectorXd& lam) {
    return Eigen::VectorXd(th.tilde_pi + th.h * lam);
  };
  auto arm_weight_floor = [&](const Eigen::VectorXd& om_arm) {
    double w = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      if (t[i] == (arm == 1 ? 1 : 0)) w = std::min(w, om_arm[i]);
    return w;
  };
  // Concave per-arm objective: inverse-probability log terms on the arm's own
  // rows plus a linear pull toward the target-block means.
  auto objective = [&](const Eigen::VectorXd& lam) {
    Eigen::VectorXd om = omega_of(lam);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      if (arm == 1 && t[i] == 1) {
        if (om[i] <= 0.0) return kNegInf;
        s += std::log(om[i]) / (1.0 - th.tilde_pi[i]);
      } else if (arm == 0 && t[i] == 0) {
        if (om[i] >= 1.0) return kNegInf;
        s += std::log1p(-om[i]) / th.tilde_pi[i];
      }
    }
    double pen = 0.0;
    for (int j = 0; j < kb; ++j) pen += lam[block[j]] * v_mean[j];
    return s / n + (arm == 1 ? -pen : pen);
  };

  Eigen::VectorXd lam = out.lambda_full;
  double cur = objective(lam);
  Eigen::VectorXd res(kb);
  auto residual = [&](const Eigen::VectorXd& om) {
    for (int j = 0; j < kb; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double oa = arm == 1 ? om[i] : 1.0 - om[i];
        const int r = arm == 1 ? t[i] : 1 - t[i];
        s += (r / oa - 1.0) * V(i, j);
      }
      res[j] = s / n;
    }
  };
  auto converged = [&]() {
    for (int j = 0; j < kb; ++j)
      if (std::abs(res[j]) > tol_col[j]) return false;
    return true;
  };

  int iter = 0;
  bool done = false;
  bool line_search_failed = false;
  for (; iter < max_iter; ++iter) {
    Eigen::VectorXd om = omega_of(lam);
    residual(om);
    if (converged()) {
      done = true;
      break;
    }
    Eigen::VectorXd grad = arm == 1 ? res : Eigen::VectorXd(-res);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(kb, kb);
    for (int i = 0; i < n; ++i) {
      const double p = th.tilde_pi[i];
      if (arm == 1 && t[i] == 1) {
        const double c = (1.0 - p) / (om[i] * om[i]);
        A += c * V.row(i).transpose() * V.row(i);
      } else if (arm == 0 && t[i] == 0) {
        const double c = p / ((1.0 - om[i]) * (1.0 - om[i]));
        A += c * V.row(i).transpose() * V.row(i);
      }
    }
    A /= n;
    Eigen::VectorXd step = A.ldlt().solve(grad);
    if (!step.allFinite()) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
      step = cod.solve(grad);
    }
    double s = 1.0;
    bool accepted = false;
    for (int half = 0; half < 50; ++half) {
      Eigen::VectorXd lam_try = lam;
      for (int j = 0; j < kb; ++j) lam_try[block[j]] += s * step[j];
      double v_try = objective(lam_try);
      if (v_try > cur) {
        lam = lam_try;
        cur = v_try;
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    if (!accepted) {
      // Same machine-precision plateau as the joint solver: accept the pure
      // Newton step when it stays feasible and shrinks the residual itself.
      Eigen::VectorXd lam_try = lam;
      for (int j = 0; j < kb; ++j) lam_try[block[j]] += step[j];
      const double v_try = objective(lam_try);
      if (v_try != kNegInf) {
        Eigen::VectorXd saved = res;
        residual(omega_of(lam_try));
        double cur_ratio = 0.0, try_ratio = 0.0;
        for (int j = 0; j < kb; ++j) {
          cur_ratio = std::max(cur_ratio, std::abs(saved[j]) / tol_col[j]);
          try_ratio = std::max(try_ratio, std::abs(res[j]) / tol_col[j]);
        }
        res = saved;
        if (try_ratio < cur_ratio) {
          lam = lam_try;
          cur = v_try;
          accepted = true;
        }
      }
    }
    if (!accepted) {
      line_search_failed = true;
      break;
    }
  }
  Eigen::VectorXd om = omega_of(lam);
  residual(om);
  out.residual = res.cwiseAbs().maxCoeff();
  out.iterations = iter;
  out.lambda_full = lam;
  for (int j = 0; j < kb; ++j) out.lambda_block[j] = lam[block[j]];
  out.omega_arm = arm == 1 ? om : Eigen::VectorXd(Eigen::VectorXd::Ones(n) - om);

  if (!done && !converged()) {
    std::ostringstream msg;
    msg << "arm " << arm << " refit: calibration residual " << out.residual
        << " above tolerance after " << iter << " iterations";
    if (line_search_failed)
      throw InfeasibleError(msg.str() + " (no interior ascent step found)");
    throw ConvergenceError(msg.str());
  }
  if (arm_weight_floor(out.omega_arm) < 1e-12)
    throw ConvergenceError("arm " + std::to_string(arm) +
                           " refit: a same-arm weight collapsed below 1e-12");
  return out;
}

LikEstimate nu_lik_tilde(const KappaRefit& refit0, const KappaRefit& refit1, const TildeH& th,
                         const Dataset& data) {
  const int n = data.n();
  if (refit0.omega_arm.size() != n || refit1.omega_arm.size() != n)
    throw ValidationError("weighted means: refit dimension mismatch");
  double num1 = 0, den1 = 0, num0 = 0, den0 = 0;
  double min1 = std::numeric_limits<double>::infinity(), max1 = -min1;
  double min0 = min1, max0 = -min1;
  for (int i = 0; i < n; ++i) {
    const double p = th.tilde_pi[i];
    if (data.t[i] == 1) {
      const double w = p / refit1.omega_arm[i];
      num1 += w * data.y[i];
      den1 += w;
      min1 = std::min(min1, data.y[i]);
      max1 = std::max(max1, data.y[i]);
    } else {
      const double w = p / refit0.omega_arm[i];
      num0 += w * data.y[i];
      den0 += w;
      min0 = std::min(min0, data.y[i]);
      max0 = std::max(max0, data.y[i]);
    }
  }
  if (den0 == 0.0 || den1 == 0.0) throw Error("weighted means: zero denominator");

  LikEstimate out;
  out.nu1 = num1 / den1;
  out.nu0 = num0 / den0;
  // The exact value of a positively weighted mean lies inside the observed
  // range; snap away pure floating-point excursions, never real ones.
  auto snap = [](double v, double lo, double hi) {
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() *
                         std::max({1.0, std::abs(lo), std::abs(hi)});
    if (v < lo) {
      if (lo - v > slack) throw Error("weighted means: estimate escaped the outcome range");
      return lo;
    }
    if (v > hi) {
      if (v - hi > slack) throw Error("weighted means: estimate escaped the outcome range");
      return hi;
    }
    return v;
  };
  out.nu1 = snap(out.nu1, min1, max1);
  out.nu0 = snap(out.nu0, min0, max0);
  out.att = out.nu1 - out.nu0;
  out.lambda_tilde_0 = refit0.lambda_block;
  out.lambda_tilde_1 = refit1.lambda_block;
  const double q = data.treated_fraction();
  out.diagnostics["denominator_gap_t1"] = std::abs(den1 / n - q);
  out.diagnostics["denominator_gap_t0"] = std::abs(den0 / n - q);
  out.diagnostics["arm_denominator_gap"] = std::abs(den1 / n - den0 / n);
  out.diagnostics["refit_residual"] = std::max(refit0.residual, refit1.residual);
  return out;
}

LikEstimate lik_estimator(const Dataset& data, const PropensityFit& ps, const OutcomeFit& or0,
                          const OutcomeFit& or1, bool simplified) {
  AugmentedPSFit aug;
  if (ps.link == Link::logistic) {
    aug = fit_aug_ps(ps, or0, or1, data, simplified ? AugVariant::offset : AugVariant::full);
  } else {
    if (simplified)
      throw ValidationError(
          "likelihood estimator: the offset simplification requires the logistic link");
    aug = fit_aug_ps_general(ps, or0, or1, data);
  }
  auto [th, cv] = build_tilde_h(aug, data, /*include_h2=*/!simplified);
  (void)cv;
  OmegaState st = maximize_ell(th.tilde_pi, th.h, data.t);
  KappaRefit r1 = maximize_kappa(st, th, data.t, 1);
  KappaRefit r0 = maximize_kappa(st, th, data.t, 0);
  LikEstimate out = nu_lik_tilde(r0, r1, th, data);
  out.lambda_hat = st.lambda;

  // Calibration chain: inverse-weighted arm means of the fitted regressions
  // match their probability-scaled means, which match their treated means.
  const int n = data.n();
  double c1a = 0, c1b = 0, c0a = 0, c0b = 0, pm1 = 0, pm0 = 0, tm1 = 0, tm0 = 0;
  for (int i = 0; i < n; ++i) {
    const double p = th.tilde_pi[i];
    pm1 += p * aug.m1_hat[i];
    pm0 += p * aug.m0_hat[i];
    tm1 += data.t[i] * aug.m1_hat[i];
    tm0 += data.t[i] * aug.m0_hat[i];
    if (data.t[i] == 1) c1a += p * aug.m1_hat[i] / r1.omega_arm[i];
    if (data.t[i] == 0) c0a += p * aug.m0_hat[i] / r0.omega_arm[i];
  }
  c1b = pm1;
  c0b = pm0;
  out.diagnostics["calibration_chain_t1"] =
      std::max(std::abs(c1a - c1b) / n, std::abs(pm1 - tm1) / n);
  out.diagnostics["calibration_chain_t0"] =
      std::max(std::abs(c0a - c0b) / n, std::abs(pm0 - tm0) / n);
  out.diagnostics["augmentation_residual"] = aug.max_aug_residual;
  out.diagnostics["solver_iterations"] = st.iterations + r0.iterations + r1.iterations;
  return out;
}

}  // namespace attcal
