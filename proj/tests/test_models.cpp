#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "attcal/models.hpp"
#include "attcal/rng.hpp"
#include "attcal/simulation.hpp"

using namespace attcal;

namespace {

Dataset synth_data(Rng& rng, int n, bool or_linear_in_f = true) {
  Dataset d;
  d.y.resize(n);
  d.t.resize(n);
  d.X.resize(n, 2);
  d.names = {"x1", "x2"};
  for (int i = 0; i < n; ++i) {
    const double x1 = rng.normal();
    const double x2 = 1.0 + 0.6 * x1 + rng.normal();
    const double p = expit(0.8 + 0.3 * x1 - 0.2 * x2);
    const int t = rng.bernoulli(p) ? 1 : 0;
    const double base = or_linear_in_f ? (1.0 + 2.0 * x1 - x2) : (1.0 + x1 * x1 + 0.5 * x2 * x2);
    d.y[i] = base + 2.0 * t + rng.normal();
    d.t[i] = t;
    d.X(i, 0) = x1;
    d.X(i, 1) = x2;
  }
  return d;
}

double orth_residual(const Eigen::VectorXd& pi, const Dataset& d, const Eigen::VectorXd& col) {
  double s = 0.0;
  for (int i = 0; i < d.n(); ++i) s += (d.t[i] - pi[i]) * col[i];
  return std::abs(s / d.n());
}

}  // namespace

TEST_CASE("build_regressors: constant, powers, products, labels") {
  Eigen::MatrixXd X(3, 2);
  X << 1, 2, 3, 4, 5, 6;
  RegressorSpec spec;
  spec.name = "demo";
  spec.terms = {TermSpec{0, 1, -1}, TermSpec{1, 2, -1}, TermSpec{0, 1, 1}};
  DesignMatrix dm = build_regressors(spec, X, {"a", "b"});
  REQUIRE(dm.p() == 4);
  CHECK(dm.labels[0] == "const");
  CHECK(dm.labels[1] == "a");
  CHECK(dm.labels[2] == "b^2");
  CHECK(dm.labels[3] == "a*b");
  CHECK(dm.cols(1, 0) == 1.0);
  CHECK(dm.cols(1, 1) == 3.0);
  CHECK(dm.cols(1, 2) == 16.0);
  CHECK(dm.cols(1, 3) == 12.0);
}

TEST_CASE("build_regressors: non-finite result names the row") {
  Eigen::MatrixXd X(2, 1);
  X << 1.0, std::numeric_limits<double>::infinity();
  RegressorSpec spec;
  spec.terms = {TermSpec{0, 2, -1}};
  CHECK_THROWS_AS(build_regressors(spec, X, {"a"}), ValidationError);
}

TEST_CASE("helper specs have the advertised shapes") {
  CHECK(linear_spec(3).terms.size() == 3);
  CHECK(squares_spec(2).terms.size() == 2);
  CHECK(squares_spec(2).terms[0].power == 2);
}

TEST_CASE("fit_ps: logistic fit satisfies its score equations") {
  Rng rng(301);
  Dataset d = synth_data(rng, 500);
  PropensityFit ps = fit_ps(linear_spec(2), Link::logistic, d);
  CHECK(ps.fit.converged);
  for (int j = 0; j < ps.design.p(); ++j)
    CHECK(orth_residual(ps.pi_hat, d, ps.design.cols.col(j)) < 1e-10);
  CHECK((ps.rho_hat.array() == 1.0).all());
  // Intercept present, so the fitted probabilities average to the treated rate.
  CHECK(std::abs(ps.pi_hat.mean() - d.treated_fraction()) < 1e-10);
}

TEST_CASE("fit_ps: probit reports the link density ratio") {
  Rng rng(303);
  Dataset d = synth_data(rng, 400);
  PropensityFit ps = fit_ps(linear_spec(2), Link::probit, d);
  CHECK(ps.fit.converged);
  for (int i = 0; i < 5; ++i) {
    const double eta = ps.fit.eta[i];
    const double expected = normal_pdf(eta) / (ps.pi_hat[i] * (1.0 - ps.pi_hat[i]));
    CHECK(ps.rho_hat[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("fit_or: per-arm fit reproduces an exactly linear outcome") {
  Rng rng(305);
  Dataset d = synth_data(rng, 200);
  for (int i = 0; i < d.n(); ++i)
    if (d.t[i] == 0) d.y[i] = 3.0 - 1.5 * d.X(i, 0) + 0.5 * d.X(i, 1);
  OutcomeFit f = fit_or(linear_spec(2), d, 0);
  CHECK(f.group == 0);
  for (int i = 0; i < d.n(); ++i) {
    const double expect = 3.0 - 1.5 * d.X(i, 0) + 0.5 * d.X(i, 1);
    CHECK(f.m_hat[i] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("augmented fit (refit variant): orthogonality to the fitted regressions") {
  Rng rng(307);
  Dataset d = synth_data(rng, 600, /*or_linear_in_f=*/false);
  PropensityFit ps = fit_ps(linear_spec(2), Link::logistic, d);
  OutcomeFit or0 = fit_or(squares_spec(2), d, 0);
  OutcomeFit or1 = fit_or(squares_spec(2), d, 1);
  AugmentedPSFit aug = fit_aug_ps(ps, or0, or1, d, AugVariant::full);
  CHECK_FALSE(aug.collapsed_to_base);
  CHECK(aug.max_aug_residual < 1e-10);
  CHECK(orth_residual(aug.tilde_pi, d, or0.m_hat) < 1e-10);
  CHECK(orth_residual(aug.tilde_pi, d, or1.m_hat) < 1e-10);
  // Base regressors also stay orthogonal under the refit variant.
  for (int j = 0; j < ps.design.p(); ++j)
    CHECK(orth_residual(aug.tilde_pi, d, ps.design.cols.col(j)) < 1e-10);
}

TEST_CASE("augmented fit: regressions linear in the base columns collapse exactly") {
  Rng rng(309);
  Dataset d = synth_data(rng, 300);
  PropensityFit ps = fit_ps(linear_spec(2), Link::logistic, d);
  OutcomeFit or0 = fit_or(linear_spec(2), d, 0);  // same span as the base model
  OutcomeFit or1 = fit_or(linear_spec(2), d, 1);
  AugmentedPSFit aug = fit_aug_ps(ps, or0, or1, d, AugVariant::full);
  CHECK(aug.collapsed_to_base);
  for (int i = 0; i < d.n(); ++i) CHECK(aug.tilde_pi[i] == ps.pi_hat[i]);
}

TEST_CASE("augmented fit (offset variant): base coefficients frozen, targets orthogonal") {
  Rng rng(311);
  Dataset d = synth_data(rng, 600, false);
  PropensityFit ps = fit_ps(linear_spec(2), Link::logistic, d);
  OutcomeFit or0 = fit_or(squares_spec(2), d, 0);
  OutcomeFit or1 = fit_or(squares_spec(2), d, 1);
  AugmentedPSFit aug = fit_aug_ps(ps, or0, or1, d, AugVariant::offset);
  CHECK(aug.variant == AugVariant::offset);
  CHECK(aug.max_aug_residual < 1e-10);
  CHECK(orth_residual(aug.tilde_pi, d, or0.m_hat) < 1e-10);
  CHECK(orth_residual(aug.tilde_pi, d, or1.m_hat) < 1e-10);
  // Constant column of the enlargement also has zero residual.
  CHECK(std::abs((d.t.cast<double>() - aug.tilde_pi).mean()) < 1e-10);
}

TEST_CASE("augmented fit (calibrated variant): custom targets are calibrated") {
  Rng rng(313);
  Dataset d = synth_data(rng, 500, false);
  PropensityFit ps = fit_ps(linear_spec(2), Link::logistic, d);
  OutcomeFit or0 = fit_or(squares_spec(2), d, 0);
  OutcomeFit or1 = fit_or(squares_spec(2), d, 1);
  RegressorSpec c0 = linear_spec(1);  // calibrate on x1 within each arm block
  RegressorSpec c1 = linear_spec(1);
  AugmentedPSFit aug = fit_aug_ps(ps, or0, or1, d, AugVariant::calibrated, &c0, &c1);
  CHECK(aug.variant == AugVariant::calibrated);
  CHECK(aug.max_aug_residual < 1e-10);
  CHECK(orth_residual(aug.tilde_pi, d, d.X.col(0)) < 1e-10);
}

TEST_CASE("link-generic augmentation reduces to the logistic refit") {
  Rng rng(315);
  Dataset d = synth_data(rng, 400, false);
  PropensityFit ps = fit_ps(linear_spec(2), Link::logistic, d);
  OutcomeFit or0 = fit_or(squares_spec(2), d, 0);
  OutcomeFit or1 = fit_or(squares_spec(2), d, 1);
  AugmentedPSFit full = fit_aug_ps(ps, or0, or1, d, AugVariant::full);
  AugmentedPSFit gen = fit_aug_ps_general(ps, or0, or1, d);
  CHECK((full.tilde_pi - gen.tilde_pi).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("link-generic augmentation under probit keeps the targets orthogonal") {
  Rng rng(317);
  Dataset d = synth_data(rng, 500, false);
  PropensityFit ps = fit_ps(linear_spec(2), Link::probit, d);
  OutcomeFit or0 = fit_or(squares_spec(2), d, 0);
  OutcomeFit or1 = fit_or(squares_spec(2), d, 1);
  AugmentedPSFit aug = fit_aug_ps_general(ps, or0, or1, d);
  CHECK(aug.max_aug_residual < 1e-8);
  CHECK(orth_residual(aug.tilde_pi, d, or0.m_hat) < 1e-8);
  CHECK(orth_residual(aug.tilde_pi, d, or1.m_hat) < 1e-8);
  // Constant is part of the weight vector, so means match too.
  CHECK(std::abs((d.t.cast<double>() - aug.tilde_pi).mean()) < 1e-8);
}
