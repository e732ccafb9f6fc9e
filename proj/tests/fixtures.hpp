#pragma once

// Small hand-checked datasets shared across the test binaries. Expected
// values for them were computed independently by exact rational arithmetic
// (where possible) and high-precision reference scripts, then frozen here.

#include <Eigen/Dense>

#include "attcal/dataset.hpp"
#include "attcal/numkernel.hpp"

namespace fixtures {

// Four rows with externally supplied probabilities and regressions; exercises
// every closed-form weighting estimator.
inline attcal::Dataset weighted4() {
  attcal::Dataset d;
  d.y.resize(4);
  d.y << 1, 2, 3, 4;
  d.t.resize(4);
  d.t << 1, 1, 0, 0;
  d.X.resize(4, 1);
  d.X << 1, 2, 3, 4;
  d.names = {"x"};
  return d;
}
inline Eigen::VectorXd weighted4_pi() {
  Eigen::VectorXd p(4);
  p << 0.5, 0.8, 0.2, 0.5;
  return p;
}
inline Eigen::VectorXd weighted4_m0() {
  Eigen::VectorXd m(4);
  m << 0.5, 1.0, 1.5, 2.0;
  return m;
}
inline Eigen::VectorXd weighted4_m1() {
  Eigen::VectorXd m(4);
  m << 2.0, 1.0, 0.5, 0.25;
  return m;
}
inline attcal::DesignMatrix weighted4_f() {
  attcal::DesignMatrix f;
  f.cols.resize(4, 2);
  f.cols << 1, 1, 1, 2, 1, 3, 1, 4;
  f.labels = {"const", "x"};
  return f;
}

// Four rows where the moment-balancing dual has a closed-form solution.
inline attcal::Dataset balance4() {
  attcal::Dataset d;
  d.y.resize(4);
  d.y << 5, 3, 6, 1;
  d.t.resize(4);
  d.t << 1, 0, 0, 1;
  d.X.resize(4, 1);
  d.X << 0.5, 0.0, 3.0, 1.5;
  d.names = {"x"};
  return d;
}
inline Eigen::VectorXd balance4_m0() {
  Eigen::VectorXd m(4);
  m << 1.0, 2.0, 0.5, 1.0;
  return m;
}

// Five rows with constant-only calibration targets: the control-variate block
// has two columns and every expected value is an exact rational.
inline attcal::Dataset reg5() {
  attcal::Dataset d;
  d.y.resize(5);
  d.y << 2, 1, 3, 2, 4;
  d.t.resize(5);
  d.t << 1, 0, 1, 0, 1;
  d.X.resize(5, 1);
  d.X << 0, 0, 0, 0, 0;  // covariates unused; probabilities supplied directly
  d.names = {"x"};
  return d;
}
inline Eigen::VectorXd reg5_tilde_pi() {
  Eigen::VectorXd p(5);
  p << 0.5, 0.25, 0.75, 0.5, 0.625;
  return p;
}

// Ten rows (five per arm) for the default two-target-per-arm block: the
// moment matrices are invertible and well enough conditioned to freeze.
inline attcal::Dataset reg10() {
  attcal::Dataset d;
  d.y.resize(10);
  d.y << 2, 1, 3, 2, 4, 1.5, 2.5, 0.5, 3.5, 1.8;
  d.t.resize(10);
  d.t << 1, 0, 1, 0, 1, 0, 1, 0, 1, 0;
  d.X.resize(10, 1);
  d.X = Eigen::MatrixXd::Zero(10, 1);
  d.names = {"x"};
  return d;
}
inline Eigen::VectorXd reg10_tilde_pi() {
  Eigen::VectorXd p(10);
  p << 0.5, 0.25, 0.75, 0.5, 0.625, 0.4, 0.6, 0.3, 0.45, 0.55;
  return p;
}
inline Eigen::VectorXd reg10_m0() {
  Eigen::VectorXd m(10);
  m << 1, 2, 1.5, 0.5, 1, 0.8, 1.2, 0.6, 1.6, 0.9;
  return m;
}
inline Eigen::VectorXd reg10_m1() {
  Eigen::VectorXd m(10);
  m << 2, 3, 2.5, 1.5, 3, 2.2, 2.7, 1.9, 2.4, 2.1;
  return m;
}

// Twenty rows for the likelihood-weighting chain. Treated and control rows
// are paired on identical (probability, target) values, which keeps the
// barrier maximization bounded with an interior solution.
inline attcal::Dataset lik20() {
  attcal::Dataset d;
  d.y.resize(20);
  d.y << 2.0, 1.0, 3.0, 2.5, 1.5, 0.5, 3.5, 1.0, 2.0, 2.5,  //
      3.0, 0.5, 2.8, 1.2, 1.9, 0.9, 2.2, 1.1, 3.1, 1.6;
  d.t.resize(20);
  for (int i = 0; i < 20; ++i) d.t[i] = i % 2 == 0 ? 1 : 0;
  d.X = Eigen::MatrixXd::Zero(20, 1);
  d.names = {"x"};
  return d;
}
// Rows come in treated/untreated pairs sharing the same per-pair value.
inline Eigen::VectorXd lik20_base(std::initializer_list<double> v) {
  Eigen::VectorXd out(20);
  int i = 0;
  for (double x : v) {
    out[i++] = x;
    out[i++] = x;
  }
  return out;
}
inline Eigen::VectorXd lik20_tilde_pi() {
  return lik20_base({0.55, 0.3, 0.7, 0.6, 0.35, 0.45, 0.65, 0.25, 0.5, 0.4});
}
inline Eigen::VectorXd lik20_m0() {
  return lik20_base({1.0, 1.2, 0.8, 1.5, 1.1, 0.9, 1.3, 0.7, 1.0, 1.4});
}
inline Eigen::VectorXd lik20_m1() {
  return lik20_base({2.2, 2.0, 2.8, 2.4, 1.9, 2.1, 2.6, 1.8, 2.3, 2.0});
}

// Four rows with a fixed single-column shift: the weighted means have exact
// rational values at the supplied coefficient.
inline attcal::Dataset ratio4() { return weighted4(); }
inline Eigen::VectorXd ratio4_tilde_pi() { return weighted4_pi(); }
inline Eigen::MatrixXd ratio4_h() {
  Eigen::MatrixXd h(4, 1);
  h << 0.1, -0.1, 0.2, -0.2;
  return h;
}

}  // namespace fixtures
