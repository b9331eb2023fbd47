#include "ivcace_cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ivcace/parallel.hpp"
#include "ivcace_cli/table.hpp"

namespace ivcace::cli {

using nlohmann::json;

const char* to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::EmNonignorable: return "em_ni";
    case BaselineMethod::CompleteCase: return "complete_case";
    case BaselineMethod::MarImpute: return "mar_impute";
    case BaselineMethod::Unadjusted: return "unadjusted";
    case BaselineMethod::Regression: return "regression";
    case BaselineMethod::Propensity: return "propensity";
  }
  return "unknown";
}

std::vector<BaselineMethod> all_baseline_methods() {
  return {BaselineMethod::EmNonignorable, BaselineMethod::CompleteCase, BaselineMethod::MarImpute,
          BaselineMethod::Unadjusted,     BaselineMethod::Regression,   BaselineMethod::Propensity};
}

BaselineMethod parse_baseline_method(const std::string& s) {
  for (auto m : all_baseline_methods()) {
    if (s == to_string(m)) return m;
  }
  throw ValidationError("unknown baseline method '" + s +
                        "' (expected em_ni, complete_case, mar_impute, unadjusted, regression or propensity)");
}

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config: '" + where() + "' must be an object");
  }

  /// Throws for keys that were never asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError("config: unknown key '" + join(it.key()) + "'");
    }
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (const json* v = get(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception&) {
        throw ValidationError("config: '" + join(key) + "' has the wrong type");
      }
    }
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <std::size_t N>
void read_array(Reader& r, const std::string& key, std::array<double, N>& out) {
  std::vector<double> v;
  r.read(key, v);
  if (r.get(key) && v.size() != N) {
    throw ValidationError("config: '" + r.join(key) + "' needs " + std::to_string(N) + " values");
  }
  if (!v.empty()) std::copy(v.begin(), v.end(), out.begin());
}

void read_pair_table(Reader& r, const std::string& key, std::array<std::array<double, 2>, 2>& out) {
  std::vector<std::vector<double>> v;
  r.read(key, v);
  if (!r.get(key)) return;
  if (v.size() != 2 || v[0].size() != 2 || v[1].size() != 2) {
    throw ValidationError("config: '" + r.join(key) + "' must be a 2x2 array");
  }
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) out[a][b] = v[a][b];
  }
}

SingleCovScenario read_custom(const json& j, const std::string& path, const SingleCovScenario& base) {
  Reader r(j, path);
  SingleCovScenario sc = base;
  // Class order in files: never, complier, always.
  read_array(r, "w", sc.w_u);
  read_array(r, "m", sc.m_u);
  read_array(r, "xi", sc.xi_x);
  read_pair_table(r, "theta_complier", sc.theta_complier);
  read_array(r, "theta_always", sc.theta_always);
  read_array(r, "theta_never", sc.theta_never);
  read_pair_table(r, "rho_complier", sc.rho_complier);
  read_array(r, "rho_always", sc.rho_always);
  read_array(r, "rho_never", sc.rho_never);
  r.finish();
  sc.validate();
  return sc;
}

}  // namespace

std::vector<Cell> parse_cells(const std::string& s) {
  std::vector<Cell> out;
  std::stringstream groups(s);
  std::string group;
  while (std::getline(groups, group, ';')) {
    if (group.find_first_not_of(' ') == std::string::npos) continue;
    Cell c;
    std::stringstream parts(group);
    std::string p;
    while (std::getline(parts, p, ',')) {
      try {
        std::size_t used = 0;
        const int v = std::stoi(p, &used);
        if (p.find_first_not_of(' ', used) != std::string::npos) throw std::invalid_argument(p);
        if (v < 1) throw ValidationError("cell codes start at 1: '" + group + "'");
        c.push_back(v - 1);
      } catch (const std::logic_error&) {
        throw ValidationError("malformed cell list '" + s + "'");
      }
    }
    out.push_back(std::move(c));
  }
  if (out.empty()) throw ValidationError("empty cell list");
  return out;
}

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  RunConfig c;
  Reader r(root, "");

  if (const json* covs = r.get("covariates")) {
    if (!covs->is_array()) throw ValidationError("config: 'covariates' must be an array");
    CovariateSpec spec;
    for (std::size_t i = 0; i < covs->size(); ++i) {
      Reader cr((*covs)[i], "covariates[" + std::to_string(i) + "]");
      std::string name;
      int levels = 0;
      bool full = false;
      cr.read("name", name);
      cr.read("levels", levels);
      cr.read("fully_observed", full);
      cr.finish();
      spec.names.push_back(name);
      spec.levels.push_back(levels);
      spec.fully_observed.push_back(full);
    }
    r.read("response_yz_interaction", spec.response_yz_interaction);
    spec.validate();
    c.spec = spec;
  } else if (r.get("response_yz_interaction")) {
    throw ValidationError("config: 'response_yz_interaction' needs 'covariates'");
  }

  r.read("missing_token", c.csv.missing_token);
  std::string delim;
  r.read("delimiter", delim);
  if (!delim.empty()) {
    if (delim.size() != 1) throw ValidationError("config: 'delimiter' must be one character");
    c.csv.delimiter = delim[0];
  }
  r.read("seed", c.seed);
  if (const json* w = r.get("workers")) {
    if (!w->is_number_integer()) throw ValidationError("config: 'workers' has the wrong type");
    c.workers = w->get<int>();
  }
  r.read("format", c.format);
  parse_format(c.format);
  if (const json* cells = r.get("cells")) {
    std::vector<std::vector<int>> v;
    try {
      v = cells->get<std::vector<std::vector<int>>>();
    } catch (const json::exception&) {
      throw ValidationError("config: 'cells' must be an array of integer arrays");
    }
    for (auto& cell : v) {
      for (int& x : cell) {
        if (x < 1) throw ValidationError("config: cell codes start at 1");
        --x;
      }
      c.cells.push_back(cell);
    }
  }

  if (const json* f = r.get("fit")) {
    Reader fr(*f, "fit");
    fr.read("max_em_iters", c.fit.max_em_iters);
    fr.read("loglik_tol", c.fit.loglik_tol);
    fr.read("param_tol", c.fit.param_tol);
    fr.read("newton_max_iters", c.fit.newton_max_iters);
    fr.read("ridge", c.fit.ridge);
    fr.read("init_seed", c.fit.init_seed);
    fr.read("n_restarts", c.fit.n_restarts);
    fr.finish();
  }
  c.fit.validate();

  if (const json* b = r.get("bootstrap")) {
    Reader br(*b, "bootstrap");
    br.read("n_resamples", c.bootstrap.n_resamples);
    br.read("ci_level", c.bootstrap.ci_level);
    br.read("max_drop_fraction", c.bootstrap.max_drop_fraction);
    br.finish();
  }
  c.bootstrap.validate();

  if (const json* im = r.get("imputation")) {
    Reader ir(*im, "imputation");
    ir.read("n_imputations", c.imputation.n_imputations);
    ir.read("n_cycles", c.imputation.n_cycles);
    ir.finish();
  }
  c.imputation.validate();

  if (const json* s = r.get("simulation")) {
    Reader sr(*s, "simulation");
    sr.read("scenario", c.scenario);
    sr.read("n", c.n);
    sr.read("reps", c.reps);
    std::vector<std::string> methods;
    sr.read("methods", methods);
    if (sr.get("methods")) {
      c.study_methods.clear();
      for (const auto& m : methods) c.study_methods.push_back(parse_study_method(m));
    }
    sr.read("max_failure_fraction", c.max_failure_fraction);
    if (const json* cu = sr.get("custom")) {
      const Scenario base = c.scenario == "registry" ? Scenario::Mcar : parse_scenario(c.scenario);
      c.custom = read_custom(*cu, "simulation.custom", scenario_params(base));
    }
    sr.finish();
  }

  if (const json* b = r.get("baselines")) {
    Reader br(*b, "baselines");
    std::vector<std::string> methods;
    br.read("methods", methods);
    if (br.get("methods")) {
      c.baseline_methods.clear();
      for (const auto& m : methods) c.baseline_methods.push_back(parse_baseline_method(m));
    }
    br.read("n_subclasses", c.n_subclasses);
    br.read("ci_level", c.ci_level);
    br.finish();
  }

  if (const json* g = r.get("sensitivity")) {
    Reader gr(*g, "sensitivity");
    gr.read("pi_values", c.grid.pi_values);
    gr.read("outcome_odds_ratios", c.grid.outcome_odds_ratios);
    gr.read("response_odds_ratios", c.grid.response_odds_ratios);
    gr.read("pair_by_magnitude", c.grid.pair_by_magnitude);
    gr.read("full_bootstrap", c.grid_full_bootstrap);
    gr.finish();
  }

  r.finish();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

int resolve_workers(std::optional<int> flag, const RunConfig& config) {
  const int w = flag ? *flag : config.workers ? *config.workers : default_worker_count();
  if (w < 1) throw ValidationError("workers must be at least 1");
  return w;
}

}  // namespace ivcace::cli
