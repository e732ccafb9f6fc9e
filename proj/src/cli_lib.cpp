#include "attcal/cli_lib.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "attcal/dataio.hpp"
#include "attcal/dataset.hpp"
#include "attcal/estimators.hpp"
#include "attcal/simulation.hpp"

namespace attcal {

using nlohmann::json;

std::uint64_t fnv1a_hash(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ValidationError("config: " + msg); }

void reject_unknown(const json& obj, const std::vector<std::string>& allowed,
                    const std::string& where) {
  if (!obj.is_object()) fail(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      fail("unknown key '" + key + "' in " + where);
  }
}

std::string get_string(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.at(key).is_string()) fail("'" + key + "' in " + where + " must be a string");
  return obj.at(key).get<std::string>();
}

int get_int(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.at(key).is_number_integer()) fail("'" + key + "' in " + where + " must be an integer");
  return obj.at(key).get<int>();
}

double get_number(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.at(key).is_number()) fail("'" + key + "' in " + where + " must be a number");
  return obj.at(key).get<double>();
}

bool get_bool(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.at(key).is_boolean()) fail("'" + key + "' in " + where + " must be a boolean");
  return obj.at(key).get<bool>();
}

struct CommonOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  std::optional<std::string> format;
};

struct CommonConfig {
  std::uint64_t seed{1};
  int workers{1};
  std::string out{"."};
  std::string format{"csv"};
};

CommonConfig resolve_common(const json& cfg, const CommonOverrides& ov) {
  CommonConfig c;
  if (cfg.contains("seed")) {
    const int s = get_int(cfg, "seed", "config");
    if (s < 0) fail("'seed' must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (cfg.contains("workers")) c.workers = get_int(cfg, "workers", "config");
  if (cfg.contains("out")) c.out = get_string(cfg, "out", "config");
  if (cfg.contains("format")) c.format = get_string(cfg, "format", "config");
  if (!cfg.contains("workers")) {
    if (const char* env = std::getenv("ATTCAL_WORKERS")) {
      int w = 0;
      const char* end = env + std::char_traits<char>::length(env);
      auto [p, ec] = std::from_chars(env, end, w);
      if (ec != std::errc{} || p != end || w < 1)
        fail("environment variable ATTCAL_WORKERS must be a positive integer");
      c.workers = w;
    }
  }
  if (ov.seed) c.seed = *ov.seed;
  if (ov.workers) c.workers = *ov.workers;
  if (ov.out) c.out = *ov.out;
  if (ov.format) c.format = *ov.format;
  if (c.workers < 1) fail("'workers' must be at least 1");
  if (c.format != "csv" && c.format != "json") fail("'format' must be 'csv' or 'json'");
  return c;
}

std::vector<EstimatorKind> parse_estimators(const json& cfg) {
  if (!cfg.contains("estimators")) fail("'estimators' is required");
  const json& arr = cfg.at("estimators");
  if (!arr.is_array() || arr.empty()) fail("'estimators' must be a nonempty array of names");
  std::vector<EstimatorKind> kinds;
  for (const auto& e : arr) {
    if (!e.is_string()) fail("'estimators' entries must be strings");
    kinds.push_back(kind_from_name(e.get<std::string>()));
  }
  return kinds;
}

Link parse_link(const json& cfg) {
  if (!cfg.contains("link")) return Link::logistic;
  const std::string s = get_string(cfg, "link", "config");
  if (s == "logistic") return Link::logistic;
  if (s == "probit") return Link::probit;
  fail("'link' must be 'logistic' or 'probit'");
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file '" + path + "'");
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    fail("cannot parse '" + path + "': " + e.what());
  }
  if (!cfg.is_object()) fail("top level of '" + path + "' must be a JSON object");
  return cfg;
}

void check_command_key(const json& cfg, const std::string& subcommand) {
  if (!cfg.contains("command")) return;
  const std::string c = get_string(cfg, "command", "config");
  if (c != subcommand)
    fail("config 'command' is '" + c + "' but the '" + subcommand + "' subcommand was invoked");
}

std::string hash_hex(const json& effective) {
  const std::uint64_t h = fnv1a_hash(effective.dump());
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("write failed for '" + path + "'");
}

std::string csv_join(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += fields[i];
  }
  line += '\n';
  return line;
}

// Evaluates every requested estimator, degrading to per-estimator retries when
// a shared model stage fails, so one solver error never blanks a whole row.
std::vector<std::optional<EstimatorOutput>> run_suite_robust(const Dataset& data,
                                                             const SuiteConfig& cfg) {
  std::vector<std::optional<EstimatorOutput>> out(cfg.kinds.size());
  try {
    std::vector<EstimatorOutput> res = evaluate_suite(data, cfg);
    for (std::size_t k = 0; k < res.size(); ++k) out[k] = res[k];
    return out;
  } catch (const Error&) {
  }
  for (std::size_t k = 0; k < cfg.kinds.size(); ++k) {
    SuiteConfig single = cfg;
    single.kinds = {cfg.kinds[k]};
    try {
      out[k] = evaluate_suite(data, single).at(0);
    } catch (const Error&) {
      out[k] = std::nullopt;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct GridEntry {
  std::string ps;
  std::string or_;
};

struct SimulateConfig {
  std::string design;  // "qin-zhang" | "kang-schafer"
  int n{1000};
  int replicates{1000};
  std::vector<std::string> outcomes;  // qin-zhang: "linear"/"quadratic"
  double gamma[3] = {1.0, 0.2, 0.2};
  bool interaction{false};  // kang-schafer outcome interaction
  std::vector<GridEntry> grid;
  std::vector<EstimatorKind> kinds;
  double true_att{0.0};
  bool keep_replicates{false};
  Link link{Link::logistic};
};

RegressorSpec spec_for(const std::string& design, const std::string& name) {
  if (design == "qin-zhang") {
    if (name == "linear") return qz_spec(false);
    if (name == "quadratic") return qz_spec(true);
    fail("qin-zhang model names are 'linear' or 'quadratic', got '" + name + "'");
  }
  if (name == "raw") return ks_spec(false);
  if (name == "transformed") return ks_spec(true);
  if (name == "raw+interaction") return ks_interaction_spec();
  fail("kang-schafer model names are 'raw', 'transformed', or 'raw+interaction', got '" + name +
       "'");
}

SimulateConfig parse_simulate(json cfg) {
  if (cfg.contains("preset")) {
    const std::string preset = get_string(cfg, "preset", "config");
    if (preset != "qz-moderate") fail("unknown preset '" + preset + "'");
    json expanded = {
        {"design", "qin-zhang"},
        {"n", 1000},
        {"replicates", 1000},
        {"outcome", "both"},
        {"gamma", {1.0, 0.2, 0.2}},
        {"grid",
         {{{"ps", "linear"}, {"or", "linear"}},
          {{"ps", "linear"}, {"or", "quadratic"}},
          {{"ps", "quadratic"}, {"or", "linear"}},
          {{"ps", "quadratic"}, {"or", "quadratic"}}}},
        {"estimators", {"OR", "IPW", "IPW.ratio", "AIPW", "AIPW.SP", "HIR", "AIPW.HIR", "REG",
                        "REG2", "LIK", "LIK2"}},
    };
    cfg.erase("preset");
    for (auto& [key, value] : expanded.items())
      if (!cfg.contains(key)) cfg[key] = value;
  }
  reject_unknown(cfg, {"command", "design", "n", "replicates", "outcome", "gamma", "interaction",
                       "grid", "estimators", "true_att", "keep_replicates", "link", "seed",
                       "workers", "out", "format"},
                 "simulate config");

  SimulateConfig sc;
  if (!cfg.contains("design")) fail("'design' is required");
  sc.design = get_string(cfg, "design", "config");
  if (sc.design != "qin-zhang" && sc.design != "kang-schafer")
    fail("'design' must be 'qin-zhang' or 'kang-schafer'");
  if (cfg.contains("n")) sc.n = get_int(cfg, "n", "config");
  if (sc.n < 2) fail("'n' must be at least 2");
  if (cfg.contains("replicates")) sc.replicates = get_int(cfg, "replicates", "config");
  if (sc.replicates < 0) fail("'replicates' must be nonnegative");

  if (sc.design == "qin-zhang") {
    std::string oc = cfg.contains("outcome") ? get_string(cfg, "outcome", "config") : "linear";
    if (oc == "both")
      sc.outcomes = {"linear", "quadratic"};
    else if (oc == "linear" || oc == "quadratic")
      sc.outcomes = {oc};
    else
      fail("'outcome' must be 'linear', 'quadratic', or 'both'");
    if (cfg.contains("gamma")) {
      const json& g = cfg.at("gamma");
      if (!g.is_array() || g.size() != 3) fail("'gamma' must be an array of three numbers");
      for (int i = 0; i < 3; ++i) {
        if (!g[i].is_number()) fail("'gamma' entries must be numbers");
        sc.gamma[i] = g[i].get<double>();
      }
    }
    if (cfg.contains("interaction")) fail("'interaction' applies to kang-schafer only");
    sc.true_att = 2.0;
  } else {
    if (cfg.contains("outcome")) fail("'outcome' applies to qin-zhang only");
    if (cfg.contains("gamma")) fail("'gamma' applies to qin-zhang only");
    if (cfg.contains("interaction")) sc.interaction = get_bool(cfg, "interaction", "config");
    sc.outcomes = {sc.interaction ? "interaction" : "plain"};
    sc.true_att = 0.0;
  }
  if (cfg.contains("true_att")) sc.true_att = get_number(cfg, "true_att", "config");

  if (!cfg.contains("grid")) fail("'grid' is required");
  const json& grid = cfg.at("grid");
  if (!grid.is_array() || grid.empty()) fail("'grid' must be a nonempty array");
  for (const auto& g : grid) {
    reject_unknown(g, {"ps", "or"}, "grid entry");
    if (!g.contains("ps") || !g.contains("or")) fail("grid entries need 'ps' and 'or'");
    sc.grid.push_back({get_string(g, "ps", "grid"), get_string(g, "or", "grid")});
    spec_for(sc.design, sc.grid.back().ps);  // validate names eagerly
    spec_for(sc.design, sc.grid.back().or_);
  }
  sc.kinds = parse_estimators(cfg);
  if (cfg.contains("keep_replicates"))
    sc.keep_replicates = get_bool(cfg, "keep_replicates", "config");
  sc.link = parse_link(cfg);
  return sc;
}

int cmd_simulate(const json& cfg, const CommonConfig& common, const std::string& hash) {
  const SimulateConfig sc = parse_simulate(cfg);

  struct RowResult {
    std::string outcome;
    GridEntry combo;
    MonteCarloResult mc;
  };
  std::vector<RowResult> rows;
  for (const std::string& outcome : sc.outcomes) {
    std::function<Dataset(Rng&)> gen;
    if (sc.design == "qin-zhang") {
      QinZhangConfig qc;
      qc.gamma0 = sc.gamma[0];
      qc.gamma1 = sc.gamma[1];
      qc.gamma2 = sc.gamma[2];
      qc.outcome = outcome == "linear" ? OutcomeForm::linear : OutcomeForm::quadratic;
      qc.n = sc.n;
      gen = [qc](Rng& rng) { return gen_qin_zhang(qc, rng); };
    } else {
      KangSchaferConfig kc;
      kc.interaction = sc.interaction;
      kc.n = sc.n;
      gen = [kc](Rng& rng) { return gen_kang_schafer(kc, rng); };
    }
    for (const GridEntry& combo : sc.grid) {
      MonteCarloConfig mcfg;
      mcfg.replications = sc.replicates;
      mcfg.seed = common.seed;
      mcfg.workers = common.workers;
      mcfg.true_att = sc.true_att;
      mcfg.keep_replicates = sc.keep_replicates;
      mcfg.suite.ps_spec = spec_for(sc.design, combo.ps);
      mcfg.suite.or_spec = spec_for(sc.design, combo.or_);
      mcfg.suite.link = sc.link;
      mcfg.suite.kinds = sc.kinds;
      rows.push_back({outcome, combo, run_monte_carlo(gen, mcfg)});
    }
  }

  std::filesystem::create_directories(common.out);
  const std::string seed_str = std::to_string(common.seed);

  if (common.format == "csv") {
    std::string wide;
    std::vector<std::string> header = {"design", "outcome", "n", "replicates", "ps_model",
                                       "or_model"};
    for (EstimatorKind k : sc.kinds) {
      header.push_back("bias:" + kind_name(k));
      header.push_back("var:" + kind_name(k));
      header.push_back("fail:" + kind_name(k));
    }
    header.push_back("config_hash");
    header.push_back("seed");
    wide += csv_join(header);
    for (const RowResult& r : rows) {
      std::vector<std::string> f = {sc.design, r.outcome, std::to_string(sc.n),
                                    std::to_string(sc.replicates), r.combo.ps, r.combo.or_};
      if (r.mc.cells.empty()) {
        for (std::size_t k = 0; k < sc.kinds.size(); ++k) {
          f.push_back("");
          f.push_back("");
          f.push_back("0");
        }
      }
      for (const CellSummary& c : r.mc.cells) {
        f.push_back(c.successes ? format_double(c.bias) : "");
        f.push_back(c.successes ? format_double(c.variance) : "");
        f.push_back(std::to_string(c.failures));
      }
      f.push_back(hash);
      f.push_back(seed_str);
      wide += csv_join(f);
    }
    write_text_file(common.out + "/simulate.csv", wide);

    if (sc.keep_replicates) {
      std::string lng = csv_join({"design", "outcome", "ps_model", "or_model", "estimator",
                                  "replicate", "att", "config_hash", "seed"});
      for (const RowResult& r : rows) {
        for (const CellSummary& c : r.mc.cells) {
          for (std::size_t rep = 0; rep < c.estimates.size(); ++rep) {
            lng += csv_join({sc.design, r.outcome, r.combo.ps, r.combo.or_, kind_name(c.kind),
                             std::to_string(rep + 1), format_double(c.estimates[rep]), hash,
                             seed_str});
          }
        }
      }
      write_text_file(common.out + "/simulate_replicates.csv", lng);
    }
  } else {
    json out;
    out["command"] = "simulate";
    out["config_hash"] = hash;
    out["seed"] = common.seed;
    out["design"] = sc.design;
    out["n"] = sc.n;
    out["replicates"] = sc.replicates;
    json cells = json::array();
    for (const RowResult& r : rows) {
      for (const CellSummary& c : r.mc.cells) {
        json cell;
        cell["outcome"] = r.outcome;
        cell["ps_model"] = r.combo.ps;
        cell["or_model"] = r.combo.or_;
        cell["estimator"] = kind_name(c.kind);
        cell["successes"] = c.successes;
        cell["failures"] = c.failures;
        if (c.successes) {
          cell["mean"] = c.mean;
          cell["bias"] = c.bias;
          cell["variance"] = c.variance;
          cell["mse"] = c.mse;
        }
        if (sc.keep_replicates) {
          json reps = json::array();
          for (double v : c.estimates) reps.push_back(std::isnan(v) ? json() : json(v));
          cell["estimates"] = reps;
        }
        cells.push_back(cell);
      }
    }
    out["cells"] = cells;
    write_text_file(common.out + "/simulate.json", out.dump(2) + "\n");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

CsvSchema parse_schema(const json& cfg) {
  if (cfg.contains("lalonde") && get_bool(cfg, "lalonde", "config")) {
    if (cfg.contains("schema")) fail("give either 'lalonde: true' or 'schema', not both");
    return lalonde_schema();
  }
  if (!cfg.contains("schema")) fail("'schema' is required (or set 'lalonde: true')");
  const json& s = cfg.at("schema");
  reject_unknown(s, {"outcome", "treatment", "covariates", "default_treatment"}, "'schema'");
  CsvSchema schema;
  if (!s.contains("outcome")) fail("'schema' needs 'outcome'");
  schema.outcome = get_string(s, "outcome", "'schema'");
  if (s.contains("treatment")) schema.treatment = get_string(s, "treatment", "'schema'");
  if (s.contains("default_treatment")) {
    schema.default_treatment = get_int(s, "default_treatment", "'schema'");
    if (schema.default_treatment != 0 && schema.default_treatment != 1)
      fail("'default_treatment' must be 0 or 1");
  }
  if (!s.contains("covariates")) fail("'schema' needs 'covariates'");
  const json& cov = s.at("covariates");
  if (!cov.is_array() || cov.empty()) fail("'covariates' must be a nonempty array");
  for (const auto& c : cov) {
    if (!c.is_string()) fail("'covariates' entries must be strings");
    schema.covariates.push_back(c.get<std::string>());
  }
  return schema;
}

RegressorSpec generic_spec(const std::string& name, int p) {
  RegressorSpec s = linear_spec(p);
  if (name == "linear") return s;
  if (name == "quadratic") {
    s.name = "quadratic";
    for (int j = 0; j < p; ++j) s.terms.push_back(TermSpec{j, 2, -1});
    return s;
  }
  fail("model names are 'linear' or 'quadratic', got '" + name + "'");
}

std::vector<GridEntry> parse_generic_grid(const json& cfg) {
  std::vector<GridEntry> grid;
  if (!cfg.contains("grid")) {
    grid.push_back({"linear", "linear"});
    return grid;
  }
  const json& g = cfg.at("grid");
  if (!g.is_array() || g.empty()) fail("'grid' must be a nonempty array");
  for (const auto& e : g) {
    reject_unknown(e, {"ps", "or"}, "grid entry");
    if (!e.contains("ps") || !e.contains("or")) fail("grid entries need 'ps' and 'or'");
    GridEntry entry{get_string(e, "ps", "grid"), get_string(e, "or", "grid")};
    if (entry.ps != "linear" && entry.ps != "quadratic")
      fail("grid 'ps' must be 'linear' or 'quadratic'");
    if (entry.or_ != "linear" && entry.or_ != "quadratic")
      fail("grid 'or' must be 'linear' or 'quadratic'");
    grid.push_back(entry);
  }
  return grid;
}

const std::vector<std::string> kEstimateDiagnostics = {
    "max_inv_weight", "balance_residual", "calibration_residual", "solver_iterations",
    "refit_residual"};

int cmd_estimate(const json& cfg, const CommonConfig& common, const std::string& hash) {
  reject_unknown(cfg, {"command", "dataset", "schema", "lalonde", "grid", "estimators", "link",
                       "seed", "workers", "out", "format"},
                 "estimate config");
  if (!cfg.contains("dataset")) fail("'dataset' is required");
  const std::string path = get_string(cfg, "dataset", "config");
  const CsvSchema schema = parse_schema(cfg);
  const Dataset data = load_csv(path, schema);
  const std::vector<GridEntry> grid = parse_generic_grid(cfg);
  const std::vector<EstimatorKind> kinds = parse_estimators(cfg);
  const Link link = parse_link(cfg);
  const int p = static_cast<int>(data.X.cols());

  struct Row {
    GridEntry combo;
    EstimatorKind kind;
    std::optional<EstimatorOutput> out;
  };
  std::vector<Row> rows;
  for (const GridEntry& combo : grid) {
    SuiteConfig sc;
    sc.ps_spec = generic_spec(combo.ps, p);
    sc.or_spec = generic_spec(combo.or_, p);
    sc.link = link;
    sc.kinds = kinds;
    std::vector<std::optional<EstimatorOutput>> outs = run_suite_robust(data, sc);
    for (std::size_t k = 0; k < kinds.size(); ++k) rows.push_back({combo, kinds[k], outs[k]});
  }

  std::filesystem::create_directories(common.out);
  const std::string seed_str = std::to_string(common.seed);

  if (common.format == "csv") {
    std::vector<std::string> header = {"ps_model", "or_model", "estimator", "status",
                                       "nu1", "nu0", "att"};
    for (const std::string& d : kEstimateDiagnostics) header.push_back(d);
    header.push_back("config_hash");
    header.push_back("seed");
    std::string text = csv_join(header);
    for (const Row& r : rows) {
      std::vector<std::string> f = {r.combo.ps, r.combo.or_, kind_name(r.kind)};
      if (r.out) {
        f.push_back("ok");
        f.push_back(format_double(r.out->nu1));
        f.push_back(format_double(r.out->nu0));
        f.push_back(format_double(r.out->att));
        for (const std::string& d : kEstimateDiagnostics) {
          const auto it = r.out->diagnostics.find(d);
          f.push_back(it == r.out->diagnostics.end() ? "" : format_double(it->second));
        }
      } else {
        f.push_back("failed");
        for (std::size_t j = 0; j < 3 + kEstimateDiagnostics.size(); ++j) f.push_back("");
      }
      f.push_back(hash);
      f.push_back(seed_str);
      text += csv_join(f);
    }
    write_text_file(common.out + "/estimate.csv", text);
  } else {
    json out;
    out["command"] = "estimate";
    out["config_hash"] = hash;
    out["seed"] = common.seed;
    out["dataset"] = path;
    out["n"] = data.n();
    json cells = json::array();
    for (const Row& r : rows) {
      json cell;
      cell["ps_model"] = r.combo.ps;
      cell["or_model"] = r.combo.or_;
      cell["estimator"] = kind_name(r.kind);
      cell["status"] = r.out ? "ok" : "failed";
      if (r.out) {
        cell["nu1"] = r.out->nu1;
        cell["nu0"] = r.out->nu0;
        cell["att"] = r.out->att;
        json diag;
        for (const auto& [k, v] : r.out->diagnostics) diag[k] = v;
        cell["diagnostics"] = diag;
      }
      cells.push_back(cell);
    }
    out["cells"] = cells;
    write_text_file(common.out + "/estimate.json", out.dump(2) + "\n");
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bootstrap
// ---------------------------------------------------------------------------

int cmd_bootstrap(const json& cfg, const CommonConfig& common, const std::string& hash) {
  reject_unknown(cfg, {"command", "experimental", "comparison", "schema", "lalonde", "grid",
                       "estimators", "resamples", "pca_ratio", "benchmark", "link", "seed",
                       "workers", "out", "format"},
                 "bootstrap config");
  if (!cfg.contains("experimental") || !cfg.contains("comparison"))
    fail("'experimental' and 'comparison' dataset paths are required");
  const std::string exp_path = get_string(cfg, "experimental", "config");
  const std::string cmp_path = get_string(cfg, "comparison", "config");
  const CsvSchema schema = parse_schema(cfg);
  const Dataset experimental = load_csv(exp_path, schema);

  // Comparison pools usually ship without a treatment column; fall back to
  // all-control when the mapped column is absent from the file's header.
  Dataset comparison = [&]() {
    try {
      return load_csv(cmp_path, schema);
    } catch (const ValidationError&) {
      CsvSchema no_treat = schema;
      no_treat.treatment.clear();
      no_treat.default_treatment = 0;
      return load_csv(cmp_path, no_treat);
    }
  }();

  BootstrapConfig bc;
  bc.seed = common.seed;
  bc.workers = common.workers;
  bc.kinds = parse_estimators(cfg);
  bc.link = parse_link(cfg);
  if (cfg.contains("resamples")) bc.resamples = get_int(cfg, "resamples", "config");
  if (bc.resamples <= 0) fail("'resamples' must be positive");
  if (cfg.contains("pca_ratio")) {
    bc.pca_ratio = get_number(cfg, "pca_ratio", "config");
    if (bc.pca_ratio < 0.0 || bc.pca_ratio >= 1.0) fail("'pca_ratio' must lie in [0,1)");
  }
  bc.grid.clear();
  for (const GridEntry& e : parse_generic_grid(cfg))
    bc.grid.push_back({e.ps == "quadratic", e.or_ == "quadratic"});

  BootstrapReport report = bootstrap_analysis(experimental, comparison, bc);
  if (cfg.contains("benchmark")) {
    const json& b = cfg.at("benchmark");
    reject_unknown(b, {"value", "se"}, "'benchmark'");
    if (!b.contains("value") || !b.contains("se")) fail("'benchmark' needs 'value' and 'se'");
    report.benchmark = get_number(b, "value", "'benchmark'");
    report.benchmark_se = get_number(b, "se", "'benchmark'");
  }

  std::filesystem::create_directories(common.out);
  const std::string seed_str = std::to_string(common.seed);

  if (common.format == "csv") {
    std::string text = csv_join({"ps_model", "or_model", "estimator", "resamples", "used",
                                 "failures", "effect_mean", "effect_se", "bias_mean", "bias_se",
                                 "diff_mean", "diff_se", "benchmark", "benchmark_se",
                                 "config_hash", "seed"});
    for (const BootstrapCell& c : report.cells) {
      text += csv_join({c.ps_model, c.or_model, kind_name(c.kind),
                        std::to_string(report.resamples), std::to_string(c.used),
                        std::to_string(c.failures), format_double(c.effect_mean),
                        format_double(c.effect_se), format_double(c.bias_mean),
                        format_double(c.bias_se), format_double(c.diff_mean),
                        format_double(c.diff_se), format_double(report.benchmark),
                        format_double(report.benchmark_se), hash, seed_str});
    }
    write_text_file(common.out + "/bootstrap.csv", text);
  } else {
    json out;
    out["command"] = "bootstrap";
    out["config_hash"] = hash;
    out["seed"] = common.seed;
    out["resamples"] = report.resamples;
    out["benchmark"] = report.benchmark;
    out["benchmark_se"] = report.benchmark_se;
    json cells = json::array();
    for (const BootstrapCell& c : report.cells) {
      json cell;
      cell["ps_model"] = c.ps_model;
      cell["or_model"] = c.or_model;
      cell["estimator"] = kind_name(c.kind);
      cell["used"] = c.used;
      cell["failures"] = c.failures;
      cell["effect_mean"] = c.effect_mean;
      cell["effect_se"] = c.effect_se;
      cell["bias_mean"] = c.bias_mean;
      cell["bias_se"] = c.bias_se;
      cell["diff_mean"] = c.diff_mean;
      cell["diff_se"] = c.diff_se;
      cells.push_back(cell);
    }
    out["cells"] = cells;
    write_text_file(common.out + "/bootstrap.json", out.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"ATT estimation toolkit: simulation, estimation, and bootstrap analyses"};
  app.name("attcal");
  app.require_subcommand(1);

  struct SubArgs {
    CLI::App* sub{nullptr};
    std::string config;
    std::uint64_t seed{0};
    int workers{0};
    std::string out;
    std::string format;
  };
  const std::vector<std::string> names = {"simulate", "estimate", "bootstrap"};
  const std::map<std::string, std::string> blurbs = {
      {"simulate", "Monte Carlo estimator comparison on a synthetic design"},
      {"estimate", "Point estimates and diagnostics for one dataset"},
      {"bootstrap", "Paired resampling of a composite experimental/observational study"}};
  std::map<std::string, SubArgs> sub_args;
  for (const std::string& name : names) {
    SubArgs& sa = sub_args[name];
    sa.sub = app.add_subcommand(name, blurbs.at(name));
    sa.sub->add_option("--config", sa.config, "JSON config file")->required();
    sa.sub->add_option("--seed", sa.seed, "Master seed (overrides config)");
    sa.sub->add_option("--workers", sa.workers, "Worker count (overrides config)");
    sa.sub->add_option("--out", sa.out, "Output directory (overrides config)");
    sa.sub->add_option("--format", sa.format, "Report format: csv or json (overrides config)");
  }

  try {
    std::vector<std::string> rargs(args.rbegin(), args.rend());
    app.parse(rargs);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (const std::string& name : names) {
      const SubArgs& sa = sub_args[name];
      if (!sa.sub->parsed()) continue;
      CommonOverrides ov;
      if (sa.sub->count("--seed")) ov.seed = sa.seed;
      if (sa.sub->count("--workers")) ov.workers = sa.workers;
      if (sa.sub->count("--out")) ov.out = sa.out;
      if (sa.sub->count("--format")) ov.format = sa.format;
      json cfg = load_config_file(sa.config);
      check_command_key(cfg, name);
      const CommonConfig common = resolve_common(cfg, ov);

      // Stamp reports with a fingerprint of the effective configuration:
      // file contents with the common keys replaced by their resolved values.
      json effective = cfg;
      effective["command"] = name;
      effective["seed"] = common.seed;
      effective["workers"] = common.workers;
      effective["format"] = common.format;
      effective.erase("out");
      const std::string hash = hash_hex(effective);

      if (name == "simulate") return cmd_simulate(cfg, common, hash);
      if (name == "estimate") return cmd_estimate(cfg, common, hash);
      return cmd_bootstrap(cfg, common, hash);
    }
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace attcal
