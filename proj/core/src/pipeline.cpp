#include "weakid/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "weakid/conventional.hpp"
#include "weakid/errors.hpp"
#include "weakid/estimators.hpp"
#include "weakid/montecarlo.hpp"
#include "weakid/numerics/distributions.hpp"

namespace weakid {

namespace {

using nlohmann::json;

std::string g6(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// JSON numbers rounded to the same 6 significant digits as the text report.
double r6(double x) {
  if (!std::isfinite(x)) return x;
  return std::strtod(g6(x).c_str(), nullptr);
}

json num(double x) { return std::isfinite(x) ? json(r6(x)) : json(nullptr); }

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

template <class T>
std::string join_numbers(const std::vector<T>& v) {
  std::vector<std::string> s;
  for (const T& x : v) s.push_back(g6(static_cast<double>(x)));
  return join(s);
}

json config_json(const RunConfig& c) {
  json j;
  j["command"] = c.command;
  j["seed"] = c.seed;
  if (c.command == "diag") return j;
  if (c.command == "mc") {
    j["n"] = c.mc_n;
    j["rho"] = c.mc_rho;
    j["lambda"] = c.mc_lambda;
    j["sigma_z"] = c.mc_sigma_z;
    j["sigma_v"] = c.mc_sigma_v;
    j["gamma"] = c.gamma;
    j["reps"] = c.reps;
    j["restarts"] = c.restarts;
    j["level"] = c.level;
    return j;
  }
  j["data"] = c.data_path;
  j["y1"] = c.roles.y1;
  j["y2"] = c.roles.y2;
  j["x"] = c.roles.x;
  j["z"] = c.roles.z;
  j["standardize"] = c.standardize;
  j["instruments"] = c.instruments;
  j["restarts"] = c.restarts;
  j["m"] = c.m;
  j["level"] = c.level;
  j["ci_level"] = c.ci_level;
  if (c.command == "weakiv") {
    j["tolerance"] = c.tolerance;
    j["eff_dof"] = c.eff_dof;
  }
  return j;
}

void config_text(const RunConfig& c, std::ostream& out) {
  out << "weakid " << c.command << "\n";
  const json j = config_json(c);
  for (const auto& [key, value] : j.items()) {
    if (key == "command") continue;
    out << "  " << pad(key, 12) << value.dump() << "\n";
  }
  out << "\n";
}

struct Prepared {
  LoadedData loaded;
  Dataset fit_data;
  std::optional<ScaleInfo> scale;
};

Prepared prepare(const RunConfig& c) {
  if (c.data_path.empty()) throw ConfigError("--data is required for " + c.command);
  Prepared p;
  p.loaded = load_csv(c.data_path, c.roles);
  if (c.standardize) {
    Standardized s = standardize(p.loaded.data);
    p.fit_data = std::move(s.data);
    p.scale = s.scale;
  } else {
    p.fit_data = p.loaded.data;
  }
  return p;
}

InstrumentSpec instrument_spec(const std::string& name) {
  if (name == "empirical") return InstrumentSpec::Empirical;
  if (name == "mc") return InstrumentSpec::MonteCarlo;
  throw ConfigError("unknown instrument specification '" + name + "'");
}

struct Fits {
  MomentSystem system;
  FitResult two_step;
  FitResult cugmm;
};

Fits fit_both(const RunConfig& c, const Prepared& p) {
  Fits f{default_instruments(p.fit_data, instrument_spec(c.instruments)), {}, {}};
  f.two_step = fit_2scml(p.fit_data);
  f.two_step.scaling = p.scale;
  CugmmOptions opts;
  opts.restarts = c.restarts;
  opts.seed = c.seed;
  f.cugmm = fit_cugmm(f.system, p.fit_data, f.two_step.theta_hat, opts);
  f.cugmm.scaling = p.scale;
  return f;
}

void data_text(const Prepared& p, std::ostream& out) {
  out << "observations " << p.loaded.data.n() << " (read " << p.loaded.rows_read << ", dropped "
      << p.loaded.rows_dropped << ")\n";
  for (const std::string& w : p.loaded.warnings) out << "warning: " << w << "\n";
  out << "\n";
}

json fit_section(const FitResult& fit, const Prepared& p, std::ostream& out) {
  const FitResult orig = to_original_units(fit);
  const auto labels = parameter_labels(p.loaded.x_names, p.loaded.z_names, p.loaded.y2_name);
  const Vector coef = orig.theta_hat.flat();
  const Vector se = orig.standard_errors();

  json j;
  j["method"] = to_string(fit.method);
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  out << to_string(fit.method) << " (converged=" << (fit.converged ? "yes" : "no")
      << ", iterations=" << fit.iterations << ")\n";
  out << "  " << pad("parameter", 22) << pad("estimate", 14) << "std.err\n";
  json rows = json::array();
  for (Eigen::Index k = 0; k < coef.size(); ++k) {
    const auto name = labels[static_cast<std::size_t>(k)];
    out << "  " << pad(name, 22) << pad(g6(coef(k)), 14) << g6(se(k)) << "\n";
    rows.push_back({{"name", name}, {"estimate", num(coef(k))}, {"se", num(se(k))}});
  }
  j["coefficients"] = rows;

  const Vector me = marginal_effects(fit, p.fit_data);
  const Vector me_se = marginal_effect_standard_errors(fit, p.fit_data);
  out << "  marginal effects at sample means (v = 0)\n";
  json effects = json::array();
  for (Eigen::Index k = 0; k < me.size(); ++k) {
    const std::string name =
        k == 0 ? p.loaded.y2_name : p.loaded.x_names[static_cast<std::size_t>(k)];
    out << "    " << pad(name, 20) << pad(g6(me(k)), 14) << g6(me_se(k)) << "\n";
    effects.push_back({{"name", name}, {"effect", num(me(k))}, {"se", num(me_se(k))}});
  }
  j["marginal_effects"] = effects;

  const double rho = implied_correlation(fit, p.fit_data);
  out << "  rho (corr(u, v))     " << g6(rho) << "\n";
  j["rho"] = num(rho);

  if (fit.num_moments > fit.num_params()) {
    const JTest jt = j_statistic(fit);
    out << "  J-statistic          " << g6(jt.J) << " (df " << jt.df << ", p-value " << g6(jt.pvalue)
        << ", 5% critical " << g6(chi2_quantile(0.95, jt.df)) << ")\n";
    j["J"] = num(jt.J);
    j["J_df"] = jt.df;
    j["J_pvalue"] = num(jt.pvalue);
  }
  if (!fit.optimizer_log.empty()) j["optimizer_log"] = fit.optimizer_log;
  out << "\n";
  return j;
}

json dj_section(const DJReport& r, std::ostream& out) {
  out << "distorted J-test (" << (r.mode_used == DJMode::Grid ? "grid" : "single") << ", "
      << r.statistics.size() << " points"
      << (r.fell_back_to_single ? ", fell back to single mode: se(rho_tilde) unavailable" : "")
      << ")\n";
  out << "  " << pad("delta_n", 16) << "J^delta\n";
  for (std::size_t i = 0; i < r.statistics.size(); ++i) {
    out << "  " << pad(g6(r.deltas_used[i]), 16) << g6(r.statistics[i]) << "\n";
  }
  out << "  min " << g6(r.min_statistic()) << ", max " << g6(r.max_statistic()) << ", critical "
      << g6(r.critical_value) << " (df " << r.df << ") -> "
      << (r.reject() ? "Reject" : "Not Reject") << "\n\n";
  json j;
  j["mode"] = r.mode_used == DJMode::Grid ? "grid" : "single";
  j["fell_back_to_single"] = r.fell_back_to_single;
  json deltas = json::array();
  json stats = json::array();
  for (std::size_t i = 0; i < r.statistics.size(); ++i) {
    deltas.push_back(num(r.deltas_used[i]));
    stats.push_back(num(r.statistics[i]));
  }
  j["deltas"] = deltas;
  j["statistics"] = stats;
  j["min"] = num(r.min_statistic());
  j["max"] = num(r.max_statistic());
  j["critical_value"] = num(r.critical_value);
  j["df"] = r.df;
  j["decision"] = r.reject() ? "Reject" : "Not Reject";
  return j;
}

DJConfig dj_config(const RunConfig& c) {
  DJConfig dj;
  dj.m = c.m;
  dj.level = c.level;
  dj.ci_level = c.ci_level;
  dj.mode = DJMode::Grid;
  return dj;
}

json cmd_estimate(const RunConfig& c, std::ostream& out) {
  const Prepared p = prepare(c);
  data_text(p, out);
  const Fits f = fit_both(c, p);
  json j;
  j["n"] = p.loaded.data.n();
  j["rows_dropped"] = p.loaded.rows_dropped;
  j["fits"] = json::array({fit_section(f.two_step, p, out), fit_section(f.cugmm, p, out)});
  return j;
}

json cmd_djtest(const RunConfig& c, std::ostream& out) {
  const Prepared p = prepare(c);
  data_text(p, out);
  const Fits f = fit_both(c, p);
  const FitResult orig = to_original_units(f.cugmm);
  out << "CUGMM J " << g6(f.cugmm.J_at_min) << ", rho_tilde (fit scale) "
      << g6(f.cugmm.theta_hat.rho_tilde) << ", se " << g6(f.cugmm.standard_errors()(0)) << "\n\n";
  const DJReport r = dj_test(f.system, p.fit_data, f.cugmm, dj_config(c));
  json j;
  j["n"] = p.loaded.data.n();
  j["J"] = num(f.cugmm.J_at_min);
  j["dj"] = dj_section(r, out);
  return j;
}

Tolerance tolerance_of(const std::string& s) {
  if (s == "five" || s == "5") return Tolerance::Five;
  if (s == "ten" || s == "10") return Tolerance::Ten;
  throw ConfigError("tolerance must be 'five' or 'ten'");
}

json cmd_weakiv(const RunConfig& c, std::ostream& out) {
  const Prepared p = prepare(c);
  data_text(p, out);
  const Dataset& raw = p.loaded.data;
  const FirstStageSummary fs = first_stage(raw);
  const Tolerance tol = tolerance_of(c.tolerance);
  double dof = c.eff_dof;
  if (dof <= 0.0) {
    if (raw.kz() == 1) dof = 1.0;
    else if (raw.kz() == 2) dof = 1.8;
    else throw UnsupportedDesign("no default effective degrees of freedom for kz > 2; pass --eff-dof");
  }

  const Fits f = fit_both(c, p);
  std::ostringstream sink;
  const DJReport dj = dj_test(f.system, p.fit_data, f.cugmm, dj_config(c));
  const json dj_json = dj_section(dj, sink);

  const TestReport ss = rule_of_thumb(fs);
  const TestReport sy = stock_yogo(fs, raw.kz(), tol);
  const TestReport eff = effective_f_test(fs, tol, dof);

  out << "first stage: F (homoskedastic) " << g6(fs.F_homoskedastic) << ", F (robust) "
      << g6(fs.F_robust) << ", Cragg-Donald " << g6(fs.cragg_donald) << ", effective F "
      << g6(fs.effective_F) << "\n\n";
  out << pad("", 16) << pad("DJ", 18) << pad("SS", 12) << pad("SY", 12) << "Robust\n";
  out << pad("statistic", 16) << pad(g6(dj.min_statistic()) + " / " + g6(dj.max_statistic()), 18)
      << pad(g6(ss.statistic), 12) << pad(g6(sy.statistic), 12) << g6(eff.statistic) << "\n";
  out << pad("critical value", 16) << pad(g6(dj.critical_value), 18) << pad(g6(ss.critical_value), 12)
      << pad(g6(sy.critical_value), 12) << g6(eff.critical_value) << "\n";
  out << pad("decision", 16) << pad(dj.reject() ? "Reject" : "Not Reject", 18)
      << pad(ss.decision(), 12) << pad(sy.decision(), 12) << eff.decision() << "\n";
  out << "(DJ statistic shown as min / max over the grid; SY and Robust critical values are "
         "table-sourced, tolerance "
      << c.tolerance << ", effective dof " << g6(dof) << ")\n";

  const auto test_json = [](const TestReport& t) {
    return json{{"test", t.test},
                {"statistic", num(t.statistic)},
                {"critical_value", num(t.critical_value)},
                {"decision", t.decision()},
                {"source", t.source}};
  };
  json j;
  j["n"] = raw.n();
  j["first_stage"] = {{"F_homoskedastic", num(fs.F_homoskedastic)},
                      {"F_robust", num(fs.F_robust)},
                      {"cragg_donald", num(fs.cragg_donald)},
                      {"effective_F", num(fs.effective_F)},
                      {"resid_var", num(fs.resid_var)}};
  j["tests"] = {{"DJ", dj_json}, {"SS", test_json(ss)}, {"SY", test_json(sy)}, {"Robust", test_json(eff)}};
  return j;
}

json cmd_mc(const RunConfig& c, std::ostream& out) {
  McRunOptions opts;
  opts.workers = c.workers;
  opts.level = c.level;
  opts.cugmm.restarts = c.restarts;
  opts.cugmm.seed = c.seed;

  std::filesystem::path dir(c.output_dir);
  if (c.write_files) std::filesystem::create_directories(dir);
  std::ostringstream csv;
  write_summary_csv_header(csv);
  json cells = json::array();
  std::size_t cell = 0;
  out << pad("n", 7) << pad("rho", 6) << pad("lambda", 8) << pad("s_z", 6) << pad("s_v", 6)
      << pad("bias", 11) << pad("sd", 11) << pad("rrmse", 11) << pad("DJ", 8) << pad("SS", 8)
      << pad("SY5", 8) << pad("SY10", 8) << pad("Eff5", 8) << pad("Eff10", 8) << pad("Wald2S", 9)
      << pad("WaldCU", 9) << "failed\n";
  for (long n : c.mc_n)
    for (double rho : c.mc_rho)
      for (double lambda : c.mc_lambda)
        for (double sz : c.mc_sigma_z)
          for (double sv : c.mc_sigma_v) {
            McDesign d;
            d.n = n;
            d.rho = rho;
            d.lambda = lambda;
            d.sigma_z = sz;
            d.sigma_v = sv;
            d.gamma = c.gamma;
            d.replications = c.reps;
            d.seed = c.seed;
            const McSummary s = run_design(d, opts);
            write_summary_csv_row(csv, s);
            const EstimatorMetrics& a = s.metrics.at("alpha_cugmm");
            const auto& r = s.reject_rates;
            out << pad(std::to_string(n), 7) << pad(g6(rho), 6) << pad(g6(lambda), 8)
                << pad(g6(sz), 6) << pad(g6(sv), 6) << pad(g6(a.bias), 11) << pad(g6(a.sd), 11)
                << pad(g6(a.rrmse), 11) << pad(g6(r.at("DJ")), 8) << pad(g6(r.at("SS")), 8)
                << pad(g6(r.at("SY5")), 8) << pad(g6(r.at("SY10")), 8) << pad(g6(r.at("EffF5")), 8)
                << pad(g6(r.at("EffF10")), 8) << pad(g6(s.wald_distortion_2scml), 9)
                << pad(g6(s.wald_distortion_cugmm), 9) << s.failed_replications << "\n";
            json jc = {{"n", n}, {"rho", rho}, {"lambda", lambda}, {"sigma_z", sz}, {"sigma_v", sv},
                       {"xi", num(s.xi)}, {"completed", s.completed_replications},
                       {"failed", s.failed_replications},
                       {"wald_distortion_2scml", num(s.wald_distortion_2scml)},
                       {"wald_distortion_cugmm", num(s.wald_distortion_cugmm)}};
            for (const auto& [key, m] : s.metrics) {
              jc["metrics"][key] = {{"bias", num(m.bias)}, {"sd", num(m.sd)}, {"rrmse", num(m.rrmse)}};
            }
            for (const auto& [key, rate] : r) jc["reject_rates"][key] = num(rate);
            cells.push_back(jc);
            if (c.write_files && c.dump_replications) {
              std::ofstream dump(dir / ("replications_" + std::to_string(cell) + ".csv"));
              write_replications_csv(dump, s);
            }
            ++cell;
          }
  out << "(alpha: CUGMM bias / sd / rrmse; rates are rejection frequencies; Wald columns are "
         "signed size distortions)\n";
  if (c.write_files) {
    std::ofstream f(dir / "design_summary.csv", std::ios::binary);
    f << csv.str();
    if (!f) throw ConfigError("cannot write design_summary.csv in " + c.output_dir);
  }
  return json{{"cells", cells}};
}

json cmd_diag(const RunConfig&, std::ostream& out) {
  const std::vector<double> grid = {1, 2, 5, 10, 50, 100};
  out << pad("sigma_z^2", 12) << "variance ratio (%)\n";
  json rows = json::array();
  for (double s : grid) {
    const double r = pruning_ratio(s);
    out << pad(g6(s), 12) << g6(r) << "\n";
    rows.push_back({{"sigma_z_sq", s}, {"ratio_percent", num(r)}});
  }
  return json{{"pruning_ratios", rows}};
}

template <class T>
void read_key(const json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

template <class T>
void read_list(const json& j, const char* key, std::vector<T>& target) {
  if (!j.contains(key)) return;
  try {
    const json& v = j.at(key);
    target = v.is_array() ? v.get<std::vector<T>>() : std::vector<T>{v.get<T>()};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

ColumnRoles lfp_roles() {
  return ColumnRoles{"inlf",
                     "educ",
                     {"nwifeinc", "exper", "expersq", "age", "kidslt6", "kidsge6"},
                     {"fatheduc", "motheduc"}};
}

void apply_config_file(const std::string& path, RunConfig& c) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  static const std::vector<std::string> known = {
      "data", "y1", "y2", "x", "z", "preset", "standardize", "instruments", "m", "level", "ci_level",
      "tolerance", "eff_dof", "n", "rho", "lambda", "sigma_z", "sigma_v", "gamma", "reps",
      "full_fidelity", "dump", "workers", "seed", "restarts", "output_dir"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  if (j.contains("preset")) {
    if (j["preset"] != "lfp") throw ConfigError("unknown preset");
    c.roles = lfp_roles();
  }
  read_key(j, "data", c.data_path);
  read_key(j, "y1", c.roles.y1);
  read_key(j, "y2", c.roles.y2);
  read_list(j, "x", c.roles.x);
  read_list(j, "z", c.roles.z);
  read_key(j, "standardize", c.standardize);
  read_key(j, "instruments", c.instruments);
  read_key(j, "m", c.m);
  read_key(j, "level", c.level);
  read_key(j, "ci_level", c.ci_level);
  read_key(j, "tolerance", c.tolerance);
  read_key(j, "eff_dof", c.eff_dof);
  read_key(j, "full_fidelity", c.full_fidelity);
  if (c.full_fidelity) apply_full_fidelity(c);
  read_list(j, "n", c.mc_n);
  read_list(j, "rho", c.mc_rho);
  read_list(j, "lambda", c.mc_lambda);
  read_list(j, "sigma_z", c.mc_sigma_z);
  read_list(j, "sigma_v", c.mc_sigma_v);
  read_key(j, "gamma", c.gamma);
  read_key(j, "reps", c.reps);
  read_key(j, "dump", c.dump_replications);
  read_key(j, "workers", c.workers);
  read_key(j, "seed", c.seed);
  read_key(j, "restarts", c.restarts);
  read_key(j, "output_dir", c.output_dir);
}

void apply_full_fidelity(RunConfig& c) {
  c.full_fidelity = true;
  c.mc_n = {500, 5000, 10000};
  c.mc_rho = {0.5, 0.95};
  c.mc_lambda = {0.5, 0.4, 0.3, 0.2, 0.1};
  c.mc_sigma_z = {0.2, 0.5, 1, 5, 10};
  c.mc_sigma_v = {0.2, 0.5, 1, 5, 10};
  c.reps = 1000;
}

int run_pipeline(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    std::ostringstream text;
    config_text(config, text);
    json body;
    if (config.command == "estimate") body = cmd_estimate(config, text);
    else if (config.command == "djtest") body = cmd_djtest(config, text);
    else if (config.command == "weakiv") body = cmd_weakiv(config, text);
    else if (config.command == "mc") body = cmd_mc(config, text);
    else if (config.command == "diag") body = cmd_diag(config, text);
    else throw ConfigError("unknown command '" + config.command + "'");

    out << text.str();
    if (config.write_files) {
      const std::filesystem::path dir(config.output_dir);
      std::filesystem::create_directories(dir);
      json doc = {{"config", config_json(config)}, {"result", body}};
      std::ofstream txt(dir / (config.command + "_report.txt"));
      txt << text.str();
      std::ofstream js(dir / (config.command + "_report.json"));
      js << std::setw(2) << doc << "\n";
      if (!txt || !js) throw ConfigError("cannot write reports to " + config.output_dir);
    }
    return 0;
  } catch (const NotConverged& e) {
    err << "estimation failed: " << e.what() << "\n";
    return 2;
  } catch (const SeparationDetected& e) {
    err << "estimation failed: " << e.what() << "\n";
    return 2;
  } catch (const NearSingular& e) {
    err << "estimation failed: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace weakid
