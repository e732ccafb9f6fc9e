#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attcal/dataset.hpp"
#include "attcal/estimators.hpp"

namespace attcal {

// Column-name mapping for CSV ingestion. When `treatment` is empty every row
// receives `default_treatment` (comparison pools carry no treatment column).
struct CsvSchema {
  std::string outcome;
  std::string treatment;
  int default_treatment{0};
  std::vector<std::string> covariates;
};

// Conventional schema for the job-training study files: outcome re78,
// treatment treat (when present), and the standard covariate list.
CsvSchema lalonde_schema();

Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Builds the composite sample for one evaluation analysis: the chosen
// experimental arm becomes the treated rows (T=1), the comparison pool the
// control rows (T=0). Provenance tags are preserved; inputs are not mutated.
//   arm = 1 -> experimental treatment group (effect analysis)
//   arm = 0 -> experimental control group (evaluation-bias analysis)
Dataset compose_analysis(const Dataset& experimental, const Dataset& comparison, int arm);

struct ModelCombo {
  bool ps_quadratic{false};
  bool or_quadratic{false};
};

struct BootstrapCell {
  std::string ps_model;  // "linear" or "quadratic"
  std::string or_model;
  EstimatorKind kind{};
  int used{0};      // resamples where both analyses succeeded
  int failures{0};  // resamples excluded for this cell
  double effect_mean{0}, effect_se{0};
  double bias_mean{0}, bias_se{0};
  double diff_mean{0}, diff_se{0};
};

struct BootstrapReport {
  std::vector<BootstrapCell> cells;
  int resamples{0};
  double benchmark{0};     // experimental difference in means
  double benchmark_se{0};  // its analytic standard error
};

struct BootstrapConfig {
  std::vector<ModelCombo> grid{{false, false}};
  std::vector<EstimatorKind> kinds{EstimatorKind::AIPW};
  int resamples{1000};
  std::uint64_t seed{1};
  int workers{1};
  // Principal-component pre-filter on the pooled regressors; components with
  // variance below `pca_ratio` times the leading variance are discarded. The
  // transform is fitted once on the original pool and reused verbatim for
  // every resample. 0 disables the filter; 0.09 mirrors the (0.3)^2 preset.
  double pca_ratio{0.0};
  Link link{Link::logistic};
};

// Resamples the entire pool (both experimental arms plus the comparison
// sample) with replacement, runs the effect analysis and the evaluation-bias
// analysis on each resample, and summarizes paired differences. A resample
// failing for one estimator is excluded for that estimator's cells only.
BootstrapReport bootstrap_analysis(const Dataset& experimental, const Dataset& comparison,
                                   const BootstrapConfig& cfg);

}  // namespace attcal
