#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "attcal/dataset.hpp"
#include "attcal/estimators.hpp"
#include "attcal/rng.hpp"

namespace attcal {

enum class OutcomeForm { linear, quadratic };

// Two correlated covariates, logistic treatment assignment, heteroscedastic
// Gaussian potential outcomes whose means are linear or quadratic in the
// covariates. The treated-minus-control mean gap is 2 at every covariate
// value, so the target contrast is exactly 2.
struct QinZhangConfig {
  double gamma0{1.0};
  double gamma1{0.2};
  double gamma2{0.2};
  OutcomeForm outcome{OutcomeForm::linear};
  int n{1000};
};
Dataset gen_qin_zhang(const QinZhangConfig& cfg, Rng& rng);

// Four latent Gaussian covariates driving both assignment and outcome. The
// dataset carries both the raw block z1..z4 and the transformed block x1..x4,
// so model specifications can observe either. Outcomes do not depend on
// treatment, so the target contrast is 0. The optional interaction adds
// 20*z1*z2 to the outcome mean.
struct KangSchaferConfig {
  bool interaction{false};
  int n{1000};
};
Dataset gen_kang_schafer(const KangSchaferConfig& cfg, Rng& rng);

// Model specification helpers for the generated datasets (constant implied).
RegressorSpec qz_spec(bool quadratic);
// Linear in one covariate block of the eight-column dataset above.
RegressorSpec ks_spec(bool transformed);
// Raw block plus the z1*z2 product, for the interaction design.
RegressorSpec ks_interaction_spec();

struct MonteCarloConfig {
  int replications{1000};
  std::uint64_t seed{1};
  int workers{1};
  SuiteConfig suite;
  double true_att{0.0};
  bool keep_replicates{false};
};

struct CellSummary {
  EstimatorKind kind{};
  int successes{0};
  int failures{0};
  double mean{0};
  double bias{0};
  double variance{0};
  double mse{0};
  // Per-replicate ATT values when retained, aligned with the replicate index;
  // NaN marks a failed replicate.
  std::vector<double> estimates;
};

struct MonteCarloResult {
  std::vector<CellSummary> cells;
  int replications{0};
};

// Runs `cfg.replications` independent draws of `gen`, evaluating the estimator
// suite on each. Every replicate uses its own deterministic substream, so the
// result is identical for any worker count and replicate r sees the same data
// in every cell of a model grid run under the same seed. A replicate that
// fails for one estimator still counts for the others. Zero replications
// yields an empty result.
MonteCarloResult run_monte_carlo(const std::function<Dataset(Rng&)>& gen,
                                 const MonteCarloConfig& cfg);

}  // namespace attcal
