#include "attcal/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "attcal/numkernel.hpp"

namespace attcal {

Dataset gen_qin_zhang(const QinZhangConfig& cfg, Rng& rng) {
  Dataset d;
  const int n = cfg.n;
  d.y.resize(n);
  d.t.resize(n);
  d.X.resize(n, 2);
  d.names = {"x1", "x2"};
  for (int i = 0; i < n; ++i) {
    const double x1 = rng.normal();
    const double x2 = 1.0 + 0.6 * x1 + rng.normal();
    const double p = expit(cfg.gamma0 + cfg.gamma1 * x1 + cfg.gamma2 * x2);
    const int t = rng.bernoulli(p) ? 1 : 0;
    double m1, m0;
    if (cfg.outcome == OutcomeForm::linear) {
      m1 = 2.0 + 2.0 * x1 + 2.0 * x2;
      m0 = 2.0 * x1 + 2.0 * x2;
    } else {
      m1 = 2.0 + 2.0 * x1 * x1 + 3.0 * x2 * x2 - x2;
      m0 = 2.0 * x1 * x1 + 3.0 * x2 * x2 - x2;
    }
    const double y1 = m1 + x2 * rng.normal();
    const double y0 = m0 + x2 * rng.normal();
    d.y[i] = t == 1 ? y1 : y0;
    d.t[i] = t;
    d.X(i, 0) = x1;
    d.X(i, 1) = x2;
  }
  return d;
}

Dataset gen_kang_schafer(const KangSchaferConfig& cfg, Rng& rng) {
  Dataset d;
  const int n = cfg.n;
  d.y.resize(n);
  d.t.resize(n);
  d.X.resize(n, 8);
  d.names = {"z1", "z2", "z3", "z4", "x1", "x2", "x3", "x4"};
  for (int i = 0; i < n; ++i) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const double z3 = rng.normal();
    const double z4 = rng.normal();
    const double p = expit(-z1 + 0.5 * z2 - 0.25 * z3 - 0.1 * z4);
    const int t = rng.bernoulli(p) ? 1 : 0;
    double mu = 210.0 + 27.4 * z1 + 13.7 * (z2 + z3 + z4);
    if (cfg.interaction) mu += 20.0 * z1 * z2;
    d.y[i] = mu + rng.normal();
    d.t[i] = t;
    d.X(i, 0) = z1;
    d.X(i, 1) = z2;
    d.X(i, 2) = z3;
    d.X(i, 3) = z4;
    d.X(i, 4) = std::exp(0.5 * z1);
    d.X(i, 5) = z2 / (1.0 + std::exp(z1)) + 10.0;
    d.X(i, 6) = std::pow(0.04 * z1 * z3 + 0.6, 3.0);
    d.X(i, 7) = (z2 + z4 + 20.0) * (z2 + z4 + 20.0);
  }
  return d;
}

RegressorSpec qz_spec(bool quadratic) { return quadratic ? squares_spec(2) : linear_spec(2); }

RegressorSpec ks_spec(bool transformed) {
  RegressorSpec s;
  s.name = transformed ? "transformed" : "raw";
  const int base = transformed ? 4 : 0;
  for (int j = 0; j < 4; ++j) s.terms.push_back(TermSpec{base + j, 1, -1});
  return s;
}

RegressorSpec ks_interaction_spec() {
  RegressorSpec s = ks_spec(false);
  s.name = "raw+interaction";
  s.terms.push_back(TermSpec{0, 1, 1});
  return s;
}

namespace {

void run_replicate(const std::function<Dataset(Rng&)>& gen, const MonteCarloConfig& cfg,
                   int rep, std::vector<double>& row) {
  Rng rng(cfg.seed, static_cast<std::uint64_t>(rep) + 1);
  Dataset data = gen(rng);
  const auto nan = std::numeric_limits<double>::quiet_NaN();
  std::fill(row.begin(), row.end(), nan);
  try {
    std::vector<EstimatorOutput> outs = evaluate_suite(data, cfg.suite);
    for (std::size_t k = 0; k < outs.size(); ++k) row[k] = outs[k].att;
    return;
  } catch (const Error&) {
    // Shared-stage failure: retry each estimator on its own so one
    // non-converging solver does not void the whole replicate.
  }
  for (std::size_t k = 0; k < cfg.suite.kinds.size(); ++k) {
    SuiteConfig single = cfg.suite;
    single.kinds = {cfg.suite.kinds[k]};
    try {
      std::vector<EstimatorOutput> outs = evaluate_suite(data, single);
      row[k] = outs.at(0).att;
    } catch (const Error&) {
      row[k] = nan;
    }
  }
}

}  // namespace

MonteCarloResult run_monte_carlo(const std::function<Dataset(Rng&)>& gen,
                                 const MonteCarloConfig& cfg) {
  if (cfg.replications < 0) throw ValidationError("monte carlo: negative replication count");
  if (cfg.suite.kinds.empty()) throw ValidationError("monte carlo: no estimators requested");
  MonteCarloResult res;
  res.replications = cfg.replications;
  if (cfg.replications == 0) return res;

  const int R = cfg.replications;
  const std::size_t K = cfg.suite.kinds.size();
  std::vector<std::vector<double>> slots(R, std::vector<double>(K));

  const int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    for (int rep = 0; rep < R; ++rep) run_replicate(gen, cfg, rep, slots[rep]);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (int rep = w; rep < R; rep += workers) run_replicate(gen, cfg, rep, slots[rep]);
      });
    }
    for (auto& th : pool) th.join();
  }

  res.cells.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    CellSummary& c = res.cells[k];
    c.kind = cfg.suite.kinds[k];
    double sum = 0.0;
    for (int rep = 0; rep < R; ++rep) {
      const double v = slots[rep][k];
      if (std::isnan(v)) {
        ++c.failures;
      } else {
        ++c.successes;
        sum += v;
      }
    }
    if (c.successes > 0) {
      c.mean = sum / c.successes;
      c.bias = c.mean - cfg.true_att;
      double ss = 0.0;
      for (int rep = 0; rep < R; ++rep) {
        const double v = slots[rep][k];
        if (!std::isnan(v)) ss += (v - c.mean) * (v - c.mean);
      }
      c.variance = c.successes > 1 ? ss / (c.successes - 1) : 0.0;
      c.mse = c.bias * c.bias + c.variance * (c.successes - 1) / c.successes;
    }
    if (cfg.keep_replicates) {
      c.estimates.resize(R);
      for (int rep = 0; rep < R; ++rep) c.estimates[rep] = slots[rep][k];
    }
  }
  return res;
}

}  // namespace attcal
