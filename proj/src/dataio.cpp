#include "attcal/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "attcal/numkernel.hpp"
#include "attcal/rng.hpp"

namespace attcal {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& field, const std::string& column, int row) {
  if (field.empty())
    throw ValidationError("csv: missing value in column '" + column + "' at data row " +
                          std::to_string(row));
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(field, &pos);
  } catch (const std::exception&) {
    throw ValidationError("csv: cannot parse '" + field + "' in column '" + column +
                          "' at data row " + std::to_string(row));
  }
  if (pos != field.size())
    throw ValidationError("csv: trailing characters in '" + field + "' in column '" + column +
                          "' at data row " + std::to_string(row));
  if (!std::isfinite(v))
    throw ValidationError("csv: non-finite value in column '" + column + "' at data row " +
                          std::to_string(row));
  return v;
}

}  // namespace

CsvSchema lalonde_schema() {
  CsvSchema s;
  s.outcome = "re78";
  s.treatment = "treat";
  s.covariates = {"age",    "school", "black", "hisp", "married",
                  "nodegr", "re74",   "re75",  "u74",  "u75"};
  return s;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv: '" + path + "' is empty");
  const std::vector<std::string> header = split_csv_line(line);

  auto find_col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw ValidationError("csv: column '" + name + "' not found in '" + path + "'");
    return static_cast<int>(it - header.begin());
  };

  const int y_col = find_col(schema.outcome);
  const int t_col = schema.treatment.empty() ? -1 : find_col(schema.treatment);
  std::vector<int> x_cols;
  for (const auto& c : schema.covariates) x_cols.push_back(find_col(c));

  std::vector<double> ys;
  std::vector<int> ts;
  std::vector<std::vector<double>> xs;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError("csv: data row " + std::to_string(row) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
    ys.push_back(parse_number(fields[y_col], schema.outcome, row));
    if (t_col >= 0) {
      const double tv = parse_number(fields[t_col], schema.treatment, row);
      if (tv != 0.0 && tv != 1.0)
        throw ValidationError("csv: treatment value " + fields[t_col] + " at data row " +
                              std::to_string(row) + " is not 0 or 1");
      ts.push_back(static_cast<int>(tv));
    } else {
      ts.push_back(schema.default_treatment);
    }
    std::vector<double> xr;
    xr.reserve(x_cols.size());
    for (std::size_t j = 0; j < x_cols.size(); ++j)
      xr.push_back(parse_number(fields[x_cols[j]], schema.covariates[j], row));
    xs.push_back(std::move(xr));
  }
  if (ys.empty()) throw ValidationError("csv: '" + path + "' has no data rows");

  Dataset d;
  const int n = static_cast<int>(ys.size());
  const int p = static_cast<int>(schema.covariates.size());
  d.y.resize(n);
  d.t.resize(n);
  d.X.resize(n, p);
  d.names = schema.covariates;
  for (int i = 0; i < n; ++i) {
    d.y[i] = ys[i];
    d.t[i] = ts[i];
    for (int j = 0; j < p; ++j) d.X(i, j) = xs[i][j];
  }
  d.validate();
  return d;
}

Dataset compose_analysis(const Dataset& experimental, const Dataset& comparison, int arm) {
  if (arm != 0 && arm != 1) throw ValidationError("compose: arm must be 0 or 1");
  if (experimental.X.cols() != comparison.X.cols())
    throw ValidationError("compose: covariate dimension mismatch between samples");
  std::vector<int> arm_rows;
  for (int i = 0; i < experimental.n(); ++i)
    if (experimental.t[i] == arm) arm_rows.push_back(i);
  if (arm_rows.empty())
    throw ValidationError("compose: experimental sample has no rows in the requested arm");
  if (comparison.n() == 0) throw ValidationError("compose: comparison sample is empty");

  Dataset d;
  const int n = static_cast<int>(arm_rows.size()) + comparison.n();
  const int p = static_cast<int>(experimental.X.cols());
  d.y.resize(n);
  d.t.resize(n);
  d.X.resize(n, p);
  d.names = experimental.names;
  d.tags.resize(n);
  int k = 0;
  for (int i : arm_rows) {
    d.y[k] = experimental.y[i];
    d.t[k] = 1;
    d.X.row(k) = experimental.X.row(i);
    d.tags[k] = arm == 1 ? RowTag::exp_treat : RowTag::exp_control;
    ++k;
  }
  for (int i = 0; i < comparison.n(); ++i) {
    d.y[k] = comparison.y[i];
    d.t[k] = 0;
    d.X.row(k) = comparison.X.row(i);
    d.tags[k] = RowTag::comparison;
    ++k;
  }
  d.validate();
  return d;
}

namespace {

RegressorSpec grid_spec(bool quadratic, int p) {
  RegressorSpec s = linear_spec(p);
  if (quadratic) {
    s.name = "quadratic";
    for (int j = 0; j < p; ++j) s.terms.push_back(TermSpec{j, 2, -1});
  }
  return s;
}

struct Pool {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<RowTag> tags;
  std::vector<std::string> names;
  int n() const { return static_cast<int>(y.size()); }
};

// Analysis dataset from a list of pool row indices: the requested experimental
// arm becomes T=1, comparison rows T=0, the other arm is left out.
std::optional<Dataset> analysis_from_rows(const Pool& pool, const std::vector<int>& rows,
                                          int arm) {
  const RowTag want = arm == 1 ? RowTag::exp_treat : RowTag::exp_control;
  std::vector<int> keep;
  int n1 = 0;
  for (int i : rows) {
    if (pool.tags[i] == want) {
      keep.push_back(i);
      ++n1;
    } else if (pool.tags[i] == RowTag::comparison) {
      keep.push_back(i);
    }
  }
  if (n1 == 0 || static_cast<int>(keep.size()) == n1) return std::nullopt;
  Dataset d;
  const int n = static_cast<int>(keep.size());
  d.y.resize(n);
  d.t.resize(n);
  d.X.resize(n, pool.X.cols());
  d.names = pool.names;
  d.tags.resize(n);
  for (int k = 0; k < n; ++k) {
    const int i = keep[k];
    d.y[k] = pool.y[i];
    d.t[k] = pool.tags[i] == want ? 1 : 0;
    d.X.row(k) = pool.X.row(i);
    d.tags[k] = pool.tags[i];
  }
  return d;
}

struct ComboOutcome {
  std::vector<double> att;  // per kind, NaN = failure
};

ComboOutcome run_combo(const Dataset& data, const ModelCombo& combo,
                       const std::vector<EstimatorKind>& kinds, Link link) {
  const int p = static_cast<int>(data.X.cols());
  SuiteConfig cfg;
  cfg.ps_spec = grid_spec(combo.ps_quadratic, p);
  cfg.or_spec = grid_spec(combo.or_quadratic, p);
  cfg.link = link;
  cfg.kinds = kinds;
  ComboOutcome out;
  out.att.assign(kinds.size(), std::numeric_limits<double>::quiet_NaN());
  try {
    std::vector<EstimatorOutput> res = evaluate_suite(data, cfg);
    for (std::size_t k = 0; k < res.size(); ++k) out.att[k] = res[k].att;
    return out;
  } catch (const Error&) {
  }
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    SuiteConfig single = cfg;
    single.kinds = {kinds[k]};
    try {
      out.att[k] = evaluate_suite(data, single).at(0).att;
    } catch (const Error&) {
    }
  }
  return out;
}

}  // namespace

BootstrapReport bootstrap_analysis(const Dataset& experimental, const Dataset& comparison,
                                   const BootstrapConfig& cfg) {
  if (cfg.resamples <= 0) throw ValidationError("bootstrap: resamples must be positive");
  if (cfg.grid.empty() || cfg.kinds.empty())
    throw ValidationError("bootstrap: empty model grid or estimator list");

  // Assemble the full pool: both experimental arms plus the comparison sample.
  Pool pool;
  const int ne = experimental.n(), nc = comparison.n();
  if (experimental.X.cols() != comparison.X.cols())
    throw ValidationError("bootstrap: covariate dimension mismatch between samples");
  pool.y.resize(ne + nc);
  pool.X.resize(ne + nc, experimental.X.cols());
  pool.tags.resize(ne + nc);
  pool.names = experimental.names;
  for (int i = 0; i < ne; ++i) {
    pool.y[i] = experimental.y[i];
    pool.X.row(i) = experimental.X.row(i);
    pool.tags[i] = experimental.t[i] == 1 ? RowTag::exp_treat : RowTag::exp_control;
  }
  for (int i = 0; i < nc; ++i) {
    pool.y[ne + i] = comparison.y[i];
    pool.X.row(ne + i) = comparison.X.row(i);
    pool.tags[ne + i] = RowTag::comparison;
  }

  // Optional component filter, fitted once on the original pooled regressors.
  if (cfg.pca_ratio > 0.0) {
    DesignMatrix dm;
    dm.cols = pool.X;
    dm.labels = pool.names;
    auto [filtered, transform] = pca_filter(dm, cfg.pca_ratio);
    pool.X = filtered.cols;
    pool.names = filtered.labels;
  }

  const int B = cfg.resamples;
  const std::size_t C = cfg.grid.size(), K = cfg.kinds.size();
  // slot[b] holds (effect, bias) per combo x kind.
  struct PairRow {
    std::vector<double> effect, bias;
  };
  std::vector<PairRow> slots(B);
  const int n_pool = pool.n();

  auto run_resample = [&](int b, PairRow& row) {
    Rng rng(cfg.seed, static_cast<std::uint64_t>(b) + 1);
    std::vector<int> rows(n_pool);
    for (int i = 0; i < n_pool; ++i) rows[i] = static_cast<int>(rng.uniform_int(n_pool));
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    row.effect.assign(C * K, nan);
    row.bias.assign(C * K, nan);
    std::optional<Dataset> eff = analysis_from_rows(pool, rows, 1);
    std::optional<Dataset> bia = analysis_from_rows(pool, rows, 0);
    for (std::size_t c = 0; c < C; ++c) {
      if (eff) {
        ComboOutcome oc = run_combo(*eff, cfg.grid[c], cfg.kinds, cfg.link);
        for (std::size_t k = 0; k < K; ++k) row.effect[c * K + k] = oc.att[k];
      }
      if (bia) {
        ComboOutcome oc = run_combo(*bia, cfg.grid[c], cfg.kinds, cfg.link);
        for (std::size_t k = 0; k < K; ++k) row.bias[c * K + k] = oc.att[k];
      }
    }
  };

  const int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    for (int b = 0; b < B; ++b) run_resample(b, slots[b]);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&, w]() {
        for (int b = w; b < B; b += workers) run_resample(b, slots[b]);
      });
    }
    for (auto& th : threads) th.join();
  }

  BootstrapReport report;
  report.resamples = B;

  // Experimental benchmark: arm difference in means with analytic SE.
  {
    double s1 = 0, s0 = 0, q1 = 0, q0 = 0;
    int n1 = 0, n0 = 0;
    for (int i = 0; i < ne; ++i) {
      if (experimental.t[i] == 1) {
        s1 += experimental.y[i];
        ++n1;
      } else {
        s0 += experimental.y[i];
        ++n0;
      }
    }
    if (n1 > 0 && n0 > 0) {
      const double m1 = s1 / n1, m0 = s0 / n0;
      for (int i = 0; i < ne; ++i) {
        if (experimental.t[i] == 1)
          q1 += (experimental.y[i] - m1) * (experimental.y[i] - m1);
        else
          q0 += (experimental.y[i] - m0) * (experimental.y[i] - m0);
      }
      report.benchmark = m1 - m0;
      if (n1 > 1 && n0 > 1)
        report.benchmark_se = std::sqrt(q1 / (n1 - 1) / n1 + q0 / (n0 - 1) / n0);
    }
  }

  bool any_used = false;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      BootstrapCell cell;
      cell.ps_model = cfg.grid[c].ps_quadratic ? "quadratic" : "linear";
      cell.or_model = cfg.grid[c].or_quadratic ? "quadratic" : "linear";
      cell.kind = cfg.kinds[k];
      std::vector<double> eff, bia, dif;
      for (int b = 0; b < B; ++b) {
        const double e = slots[b].effect[c * K + k];
        const double v = slots[b].bias[c * K + k];
        if (std::isnan(e) || std::isnan(v)) {
          ++cell.failures;
          continue;
        }
        eff.push_back(e);
        bia.push_back(v);
        dif.push_back(e - v);
      }
      cell.used = static_cast<int>(eff.size());
      auto mean_se = [](const std::vector<double>& v, double& mean, double& se) {
        mean = 0;
        se = 0;
        if (v.empty()) return;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        if (v.size() > 1) {
          double ss = 0;
          for (double x : v) ss += (x - mean) * (x - mean);
          se = std::sqrt(ss / (static_cast<double>(v.size()) - 1.0));
        }
      };
      mean_se(eff, cell.effect_mean, cell.effect_se);
      mean_se(bia, cell.bias_mean, cell.bias_se);
      mean_se(dif, cell.diff_mean, cell.diff_se);
      if (cell.used > 0) any_used = true;
      report.cells.push_back(std::move(cell));
    }
  }
  if (!any_used) throw Error("bootstrap: every resample failed for every cell");
  return report;
}

}  // namespace attcal
