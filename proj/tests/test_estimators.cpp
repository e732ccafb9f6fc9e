#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "attcal/estimators.hpp"
#include "attcal/rng.hpp"
#include "attcal/simulation.hpp"
#include "fixtures.hpp"

using namespace attcal;

namespace {

// Control variates recomputed from first principles for cross-checks.
ControlVariates manual_cv(const Eigen::VectorXd& p, const Eigen::MatrixXd& H,
                          const Dataset& d) {
  const int n = d.n(), K = static_cast<int>(H.cols());
  ControlVariates cv;
  cv.eta0.resize(n);
  cv.eta1.resize(n);
  cv.xi.resize(n, K);
  cv.zeta0.resize(n, K);
  cv.zeta1.resize(n, K);
  for (int i = 0; i < n; ++i) {
    cv.eta1[i] = d.t[i] * d.y[i];
    cv.eta0[i] = (1 - d.t[i]) * p[i] * d.y[i] / (1.0 - p[i]);
    for (int j = 0; j < K; ++j) {
      const double denom = p[i] * (1.0 - p[i]);
      cv.xi(i, j) = (d.t[i] - p[i]) * H(i, j) / denom;
      cv.zeta1(i, j) = d.t[i] * H(i, j) / denom;
      cv.zeta0(i, j) = (1 - d.t[i]) * H(i, j) / denom;
    }
  }
  return cv;
}

}  // namespace

TEST_CASE("estimator names round-trip") {
  for (EstimatorKind k :
       {EstimatorKind::OR, EstimatorKind::IPW, EstimatorKind::IPW_RATIO, EstimatorKind::AIPW,
        EstimatorKind::AIPW_SP, EstimatorKind::HIR, EstimatorKind::AIPW_HIR, EstimatorKind::REG,
        EstimatorKind::REG2, EstimatorKind::LIK, EstimatorKind::LIK2}) {
    CHECK(kind_from_name(kind_name(k)) == k);
  }
  CHECK_THROWS_AS(kind_from_name("nope"), ValidationError);
}

TEST_CASE("weighting fixture: every closed-form estimator matches hand arithmetic") {
  const Dataset d = fixtures::weighted4();
  const Eigen::VectorXd pi = fixtures::weighted4_pi();
  const Eigen::VectorXd m0 = fixtures::weighted4_m0();
  const Eigen::VectorXd m1 = fixtures::weighted4_m1();

  CHECK(nu1_np(d) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(nu0_ipw(pi, d, false) == doctest::Approx(2.375).epsilon(1e-12));
  CHECK(nu0_ipw(pi, d, true) == doctest::Approx(3.8).epsilon(1e-12));
  CHECK(nu0_aipw(pi, m0, d, true) == doctest::Approx(1.9375).epsilon(1e-12));
  CHECK(nu0_aipw(pi, m0, d, false) == doctest::Approx(2.3625).epsilon(1e-12));
  CHECK(nu1_aipw_sp(pi, m1, d) == doctest::Approx(1.0125).epsilon(1e-12));
  CHECK(nu_or(m1, d) == doctest::Approx(1.5).epsilon(1e-12));   // (2+1)/2
  CHECK(nu_or(m0, d) == doctest::Approx(0.75).epsilon(1e-12));  // (0.5+1)/2
}

TEST_CASE("weighting fixture: influence-function variance estimates") {
  const Dataset d = fixtures::weighted4();
  const Eigen::VectorXd pi = fixtures::weighted4_pi();
  const Eigen::VectorXd m0 = fixtures::weighted4_m0();
  const DesignMatrix f = fixtures::weighted4_f();
  // Each variance variant is evaluated at the point estimate of the matching
  // estimator: the nonparametric one at 1.9375, the projection family at the
  // semiparametric value 2.3625.
  const double nu0_np = nu0_aipw(pi, m0, d, true);
  const double nu0_sp = nu0_aipw(pi, m0, d, false);

  CHECK(influence_variance(d, pi, m0, nu0_np, InfluenceKind::NP0) ==
        doctest::Approx(2.3619791666666665).epsilon(1e-10));
  CHECK(influence_variance(d, pi, m0, nu0_sp, InfluenceKind::SPstar0) ==
        doctest::Approx(1.8013947916666666).epsilon(1e-10));
  CHECK(influence_variance(d, pi, m0, nu0_sp, InfluenceKind::SP0, &f) ==
        doctest::Approx(3.0951041666666668).epsilon(1e-10));
  CHECK_THROWS_AS(influence_variance(d, pi, m0, nu0_sp, InfluenceKind::SP0), ValidationError);
}

TEST_CASE("balancing fixture: dual solution, weighted mean, and identity") {
  const Dataset d = fixtures::balance4();
  DesignMatrix f;
  f.cols.resize(4, 2);
  f.cols << 1, 0.5, 1, 0.0, 1, 3.0, 1, 1.5;
  f.labels = {"const", "x"};

  HirWeights w = hir_weights(d, f);
  CHECK(w.gamma[0] == doctest::Approx(0.28768207245178085).epsilon(1e-10));
  CHECK(w.gamma[1] == doctest::Approx(-0.23104906018664842).epsilon(1e-10));
  CHECK(w.balance_residual < 1e-8);
  // Constant-in-f implies untreated weights sum to the treated count.
  double wsum = 0.0;
  for (int i = 0; i < 4; ++i)
    if (d.t[i] == 0) wsum += w.r[i];
  CHECK(wsum == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(nu0_hir(w, d) == doctest::Approx(4.0).epsilon(1e-10));

  const double att = nu1_np(d) - nu0_aipw(w.pi_breve, fixtures::balance4_m0(), d, true);
  CHECK(att == doctest::Approx(-0.5).epsilon(1e-10));
}

TEST_CASE("balancing weights: non-overlapping groups raise the infeasibility error") {
  Dataset d;
  d.y.resize(4);
  d.y << 1, 2, 3, 4;
  d.t.resize(4);
  d.t << 1, 1, 0, 0;
  d.X.resize(4, 1);
  d.X << 5, 6, -5, -6;  // treated x strictly above untreated x
  d.names = {"x"};
  DesignMatrix f;
  f.cols.resize(4, 2);
  f.cols << 1, 5, 1, 6, 1, -5, 1, -6;
  f.labels = {"const", "x"};
  CHECK_THROWS_AS(hir_weights(d, f), Error);
}

TEST_CASE("control-variate block: structure, signs, and the probability column") {
  const Dataset d = fixtures::reg10();
  const Eigen::VectorXd tp = fixtures::reg10_tilde_pi();
  const Eigen::VectorXd m0 = fixtures::reg10_m0();
  const Eigen::VectorXd m1 = fixtures::reg10_m1();
  DesignMatrix f;
  f.cols = Eigen::MatrixXd::Ones(10, 1);
  f.labels = {"const"};

  auto [th, cv] = build_tilde_h(tp, m0, m1, f, d, /*include_h2=*/false);
  REQUIRE(th.h.cols() == 4);
  CHECK(th.dropped.empty());
  for (int i = 0; i < 10; ++i) {
    const double p = tp[i];
    CHECK(th.h(i, 0) == doctest::Approx((1 - p) * p).epsilon(1e-14));
    CHECK(th.h(i, 1) == doctest::Approx((1 - p) * p * m1[i]).epsilon(1e-14));
    CHECK(th.h(i, 2) == doctest::Approx(p * p).epsilon(1e-14));
    CHECK(th.h(i, 3) == doctest::Approx(p * p * m0[i]).epsilon(1e-14));
  }
  CHECK(th.t1_cols == std::vector<int>{0, 1});
  CHECK(th.t0_cols == std::vector<int>{2, 3});

  // The fitted probability lies in the span of the block: residual of its
  // projection is zero.
  LeastSquaresFit proj = solve_least_squares(th.h, tp);
  CHECK((proj.fitted - tp).cwiseAbs().maxCoeff() < 1e-10);

  // Score columns match the first-principles construction, and the
  // untreated-arm version is exactly the negation.
  ControlVariates manual = manual_cv(tp, th.h, d);
  CHECK((cv.xi - manual.xi).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((cv.zeta0 - manual.zeta0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((cv.zeta1 - manual.zeta1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((cv.eta0 - manual.eta0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((cv.eta1 - manual.eta1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("regression fixture (constant targets): exact rational values") {
  const Dataset d = fixtures::reg5();
  const Eigen::VectorXd tp = fixtures::reg5_tilde_pi();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(5);
  DesignMatrix f;
  f.cols = Eigen::MatrixXd::Ones(5, 1);
  f.labels = {"const"};
  DesignMatrix c;
  c.cols = Eigen::MatrixXd::Ones(5, 1);
  c.labels = {"const"};

  auto [th, cv] = build_tilde_h(tp, zero, zero, f, d, false, &c, &c);
  REQUIRE(th.h.cols() == 2);

  RegResult r0 = nu_reg(th, cv, d, 0);
  CHECK_FALSE(r0.min_norm);
  CHECK(r0.beta[0] == doctest::Approx(-0.5).epsilon(1e-10));
  CHECK(r0.beta[1] == doctest::Approx(2.5).epsilon(1e-10));
  CHECK(r0.nu == doctest::Approx(43.0 / 24.0).epsilon(1e-10));
  CHECK(r0.calib_residual < 1e-10);

  RegResult r1 = nu_reg(th, cv, d, 1);
  CHECK(r1.beta[0] == doctest::Approx(37.0 / 18.0).epsilon(1e-10));
  CHECK(r1.beta[1] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(r1.nu == doctest::Approx(91.0 / 36.0).epsilon(1e-10));
  CHECK(r1.calib_residual < 1e-10);
}

TEST_CASE("regression fixture (default targets): frozen reference values") {
  const Dataset d = fixtures::reg10();
  DesignMatrix f;
  f.cols = Eigen::MatrixXd::Ones(10, 1);
  f.labels = {"const"};
  auto [th, cv] = build_tilde_h(fixtures::reg10_tilde_pi(), fixtures::reg10_m0(),
                                fixtures::reg10_m1(), f, d, false);
  RegResult r0 = nu_reg(th, cv, d, 0);
  CHECK(r0.beta[0] == doctest::Approx(-4.233238508596258).epsilon(1e-8));
  CHECK(r0.beta[1] == doctest::Approx(1.5648532359508742).epsilon(1e-8));
  CHECK(r0.beta[2] == doctest::Approx(5.326776422246106).epsilon(1e-8));
  CHECK(r0.beta[3] == doctest::Approx(-3.043140572744232).epsilon(1e-8));
  CHECK(r0.nu == doctest::Approx(1.3233313162906821).epsilon(1e-8));
  CHECK(r0.calib_residual < 1e-8);

  RegResult r1 = nu_reg(th, cv, d, 1);
  CHECK(r1.beta[0] == doctest::Approx(-1.4585406704423474).epsilon(1e-8));
  CHECK(r1.beta[1] == doctest::Approx(2.0556891612659642).epsilon(1e-8));
  CHECK(r1.beta[2] == doctest::Approx(-1.549621762400843).epsilon(1e-8));
  CHECK(r1.beta[3] == doctest::Approx(0.8529312644093823).epsilon(1e-8));
  CHECK(r1.nu == doctest::Approx(2.5815169131675413).epsilon(1e-8));
  CHECK(r1.calib_residual < 1e-8);
}

TEST_CASE("regression estimator: singular moment matrix flags the fallback") {
  // Two treated rows cannot support four score columns: the treated-arm
  // moment matrix has rank at most 2.
  Dataset d;
  d.y.resize(6);
  d.y << 2, 1, 3, 2, 1.5, 2.5;
  d.t.resize(6);
  d.t << 1, 0, 1, 0, 0, 0;
  d.X = Eigen::MatrixXd::Zero(6, 1);
  d.names = {"x"};
  Eigen::VectorXd tp(6);
  tp << 0.5, 0.25, 0.75, 0.5, 0.4, 0.6;
  Eigen::VectorXd m0(6), m1(6);
  m0 << 1, 2, 1.5, 0.5, 0.8, 1.2;
  m1 << 2, 3, 2.5, 1.5, 2.2, 2.7;
  DesignMatrix f;
  f.cols = Eigen::MatrixXd::Ones(6, 1);
  f.labels = {"const"};
  auto [th, cv] = build_tilde_h(tp, m0, m1, f, d, false);
  RegResult r1 = nu_reg(th, cv, d, 1);
  CHECK(r1.min_norm);
  CHECK(std::isfinite(r1.nu));
}

TEST_CASE("suite: shared treated-arm values and diagnostics") {
  Rng rng(210);
  QinZhangConfig qc;
  qc.n = 400;
  Dataset d = gen_qin_zhang(qc, rng);
  SuiteConfig cfg;
  cfg.ps_spec = qz_spec(false);
  cfg.or_spec = qz_spec(false);
  cfg.kinds = {EstimatorKind::IPW,  EstimatorKind::IPW_RATIO, EstimatorKind::AIPW,
               EstimatorKind::HIR,  EstimatorKind::AIPW_HIR,  EstimatorKind::AIPW_SP,
               EstimatorKind::OR,   EstimatorKind::REG,       EstimatorKind::REG2,
               EstimatorKind::LIK,  EstimatorKind::LIK2};
  std::vector<EstimatorOutput> out = evaluate_suite(d, cfg);
  REQUIRE(out.size() == cfg.kinds.size());

  const double n1 = nu1_np(d);
  for (const EstimatorOutput& o : out) {
    CHECK(o.att == o.nu1 - o.nu0);
    switch (o.kind) {
      case EstimatorKind::IPW:
      case EstimatorKind::IPW_RATIO:
      case EstimatorKind::AIPW:
      case EstimatorKind::HIR:
      case EstimatorKind::AIPW_HIR:
        CHECK(o.nu1 == doctest::Approx(n1).epsilon(1e-14));
        break;
      default:
        break;
    }
  }
  CHECK(out[0].diagnostics.count("max_inv_weight") == 1);
  CHECK(out[3].diagnostics.count("balance_residual") == 1);
  CHECK(out[7].diagnostics.count("calibration_residual") == 1);
  CHECK(out[9].diagnostics.count("refit_residual") == 1);
}

TEST_CASE("suite: balancing weights make the augmented and plain versions identical") {
  // With the regression spec inside the balance spec, the correction term of
  // the augmented estimator vanishes identically.
  Rng rng(211);
  QinZhangConfig qc;
  qc.n = 500;
  Dataset d = gen_qin_zhang(qc, rng);
  SuiteConfig cfg;
  cfg.ps_spec = qz_spec(false);
  cfg.or_spec = qz_spec(false);
  cfg.kinds = {EstimatorKind::HIR, EstimatorKind::AIPW_HIR};
  std::vector<EstimatorOutput> out = evaluate_suite(d, cfg);
  CHECK(out[0].att == doctest::Approx(out[1].att).epsilon(1e-8));
}

TEST_CASE("suite: calibrated-likelihood estimates are sample bounded") {
  Rng rng(212);
  for (int trial = 0; trial < 50; ++trial) {
    QinZhangConfig qc;
    qc.n = 120;
    qc.outcome = trial % 2 ? OutcomeForm::quadratic : OutcomeForm::linear;
    Dataset d = gen_qin_zhang(qc, rng);
    SuiteConfig cfg;
    cfg.ps_spec = qz_spec(false);
    cfg.or_spec = qz_spec(trial % 2 == 1);
    cfg.kinds = {EstimatorKind::LIK, EstimatorKind::LIK2};
    std::vector<EstimatorOutput> out;
    try {
      out = evaluate_suite(d, cfg);
    } catch (const Error&) {
      continue;  // convergence failures are counted elsewhere; bounds apply to successes
    }
    double lo1 = 1e300, hi1 = -1e300, lo0 = 1e300, hi0 = -1e300;
    for (int i = 0; i < d.n(); ++i) {
      if (d.t[i] == 1) {
        lo1 = std::min(lo1, d.y[i]);
        hi1 = std::max(hi1, d.y[i]);
      } else {
        lo0 = std::min(lo0, d.y[i]);
        hi0 = std::max(hi0, d.y[i]);
      }
    }
    for (const EstimatorOutput& o : out) {
      CHECK(o.nu1 >= lo1);
      CHECK(o.nu1 <= hi1);
      CHECK(o.nu0 >= lo0);
      CHECK(o.nu0 <= hi0);
    }
  }
}

TEST_CASE("suite: constant outcome forces zero effect for calibrated estimators") {
  Rng rng(213);
  QinZhangConfig qc;
  qc.n = 300;
  Dataset d = gen_qin_zhang(qc, rng);
  for (int i = 0; i < d.n(); ++i) d.y[i] = 7.25;
  SuiteConfig cfg;
  cfg.ps_spec = qz_spec(false);
  cfg.or_spec = qz_spec(false);
  cfg.kinds = {EstimatorKind::OR, EstimatorKind::IPW_RATIO, EstimatorKind::HIR,
               EstimatorKind::REG, EstimatorKind::LIK, EstimatorKind::LIK2};
  std::vector<EstimatorOutput> out = evaluate_suite(d, cfg);
  for (const EstimatorOutput& o : out) CHECK(std::abs(o.att) < 1e-9);
}

TEST_CASE("influence ordering holds on a generously sized correctly specified sample") {
  Rng rng(214);
  QinZhangConfig qc;
  qc.n = 20000;
  Dataset d = gen_qin_zhang(qc, rng);
  PropensityFit ps = fit_ps(qz_spec(false), Link::logistic, d);
  OutcomeFit or0 = fit_or(qz_spec(false), d, 0);
  const double nu0_np = nu0_aipw(ps.pi_hat, or0.m_hat, d, true);
  const double nu0_sp = nu0_aipw(ps.pi_hat, or0.m_hat, d, false);
  const double v_np = influence_variance(d, ps.pi_hat, or0.m_hat, nu0_np, InfluenceKind::NP0);
  const double v_sp = influence_variance(d, ps.pi_hat, or0.m_hat, nu0_sp, InfluenceKind::SP0,
                                         &ps.design);
  const double v_spstar =
      influence_variance(d, ps.pi_hat, or0.m_hat, nu0_sp, InfluenceKind::SPstar0, &ps.design);
  CHECK(v_np >= v_sp - 1e-12);
  CHECK(v_sp >= v_spstar - 1e-12);
}
