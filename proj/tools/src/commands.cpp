#include "ivcace_cli/commands.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ivcace/baselines.hpp"
#include "ivcace/counts.hpp"
#include "ivcace/estimands.hpp"
#include "ivcace/sensitivity.hpp"
#include "ivcace/simulation.hpp"
#include "ivcace_cli/config.hpp"
#include "ivcace_cli/dataset_io.hpp"
#include "ivcace_cli/table.hpp"

namespace ivcace::cli {

namespace {

RunConfig effective_config(const CommandOptions& o) {
  RunConfig c = o.config ? load_config(*o.config) : RunConfig{};
  if (o.seed) c.seed = *o.seed;
  if (o.cells) c.cells = parse_cells(*o.cells);
  if (o.format) c.format = *o.format;
  if (o.resamples) c.bootstrap.n_resamples = *o.resamples;
  c.bootstrap.seed = c.seed;
  c.imputation.seed = c.seed;
  c.bootstrap.workers = resolve_workers(o.workers, c);
  c.bootstrap.validate();
  return c;
}

LoadedData load_data(const CommandOptions& o, const RunConfig& c) {
  if (!o.data) throw ValidationError("--data is required");
  return read_dataset_file(*o.data, c.spec, c.csv);
}

void emit(const CommandOptions& o, const RunConfig& c, const std::vector<Table>& tables, std::ostream& out) {
  const OutputFormat f = parse_format(c.format);
  if (o.out) {
    std::ofstream file(*o.out);
    if (!file) throw ValidationError("cannot write '" + *o.out + "'");
    write_tables(file, tables, f);
  } else {
    write_tables(out, tables, f);
  }
}

std::string cell_label(const Cell& c) { return EstimandTarget::cell_cace(c).label().substr(4); }

std::vector<Cell> target_cells(const RunConfig& c, const CovariateSpec& spec) {
  return c.cells.empty() ? all_cells(spec) : c.cells;
}

std::vector<EstimandTarget> cell_targets(const std::vector<Cell>& cells) {
  std::vector<EstimandTarget> t;
  for (const auto& c : cells) t.push_back(EstimandTarget::cell_cace(c));
  return t;
}

std::string pattern_label(std::uint32_t mask, const CovariateSpec& spec) {
  std::string s;
  const std::size_t F = spec.num_fully_observed();
  for (std::size_t j = 0; j < spec.num_partial(); ++j) {
    if (!(mask & (1u << j))) s += (s.empty() ? "" : "+") + spec.names[F + j];
  }
  return s.empty() ? "none" : s;
}

Table pattern_table(const Dataset& data, const CovariateSpec& spec) {
  const auto counts = tabulate_observed(data, spec);
  Table t{"patterns", {"missing", "records"}, {}};
  for (std::uint32_t m = counts.geometry().num_patterns(); m-- > 0;) {
    t.add({pattern_label(m, spec), std::to_string(static_cast<long long>(counts.pattern_total(m)))});
  }
  return t;
}

void add_vector(Table& t, const std::string& block, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) t.add({block, std::to_string(i), fmt(v[i], 8)});
}

Table parameter_table(const FitResult& f) {
  const auto& p = f.params;
  Table t{"parameters", {"block", "index", "value"}, {}};
  for (std::size_t c = 0; c < p.w.size(); ++c) t.add({"w", std::to_string(c), fmt(p.w[c], 8)});
  add_vector(t, "alpha", p.alpha);
  add_vector(t, "delta_c", p.delta_c);
  add_vector(t, "delta_a", p.delta_a);
  add_vector(t, "beta_c0", p.beta_c0);
  add_vector(t, "beta_c1", p.beta_c1);
  add_vector(t, "beta_a", p.beta_a);
  add_vector(t, "beta_n", p.beta_n);
  const std::size_t F = f.spec.num_fully_observed();
  for (std::size_t j = 0; j < p.response.size(); ++j) {
    const auto& r = p.response[j];
    if (!r.modeled) continue;
    const std::string name = f.spec.names[F + j];
    for (auto u : kAllClasses) {
      const auto ui = static_cast<std::size_t>(index_of(u));
      const std::string cls = std::string(to_string(u));
      add_vector(t, "theta_" + name + "_" + cls, r.theta[ui]);
      t.add({"gamma_" + name + "_" + cls, "0", fmt(r.gamma[ui], 8)});
    }
    t.add({"eta_" + name + "_complier", "0", fmt(r.eta_complier, 8)});
    if (f.spec.response_yz_interaction) t.add({"eta_yz_" + name + "_complier", "0", fmt(r.eta_yz_complier, 8)});
  }
  return t;
}

int finish_status(bool partial) { return partial ? kPartialFailure : kOk; }

}  // namespace

int cmd_simulate(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig c = effective_config(o);
  if (o.scenario) c.scenario = *o.scenario;
  if (o.n) c.n = *o.n;
  if (o.reps) c.reps = *o.reps;
  if (o.methods) {
    c.study_methods.clear();
    std::stringstream ss(*o.methods);
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (!m.empty()) c.study_methods.push_back(parse_study_method(m));
    }
  }
  if (c.n < 1) throw ValidationError("--n must be at least 1");
  const int workers = resolve_workers(o.workers, c);

  if (o.study) {
    if (c.scenario == "registry") throw ValidationError("the replication study uses the single-covariate scenarios");
    StudyConfig sc;
    sc.n_replications = c.reps;
    sc.n_per_dataset = c.n;
    sc.scenario = parse_scenario(c.scenario);
    sc.methods = c.study_methods;
    sc.seed = c.seed;
    sc.custom = c.custom;
    sc.workers = workers;
    sc.max_failure_fraction = c.max_failure_fraction;
    const auto summary = run_study(sc, c.fit, c.imputation);
    Table t{"study",
            {"scenario", "method", "level", "truth", "mean", "sd", "percent_bias", "n_ok", "n_failed"},
            {}};
    bool partial = false;
    for (const auto& r : summary.rows) {
      t.add({to_string(summary.scenario), to_string(r.method), std::to_string(r.level + 1), fmt(r.truth, 3),
             fmt(r.mean, 4), fmt(r.sd, 4), fmt(r.percent_bias, 2), std::to_string(r.n_ok),
             std::to_string(r.n_failed)});
      partial = partial || r.n_failed > 0;
    }
    emit(o, c, {t}, out);
    if (partial) err << "some replications failed; see n_failed\n";
    return finish_status(partial);
  }

  GeneratedData g;
  CovariateSpec spec;
  if (c.scenario == "registry") {
    const auto design = registry_like_design();
    spec = design.spec;
    g = generate_from_params(spec, design.params, c.n, c.seed, nullptr, o.debug.has_value());
  } else {
    const SingleCovScenario sc = c.custom ? *c.custom : scenario_params(parse_scenario(c.scenario));
    spec = single_cov_spec();
    g = generate(sc, c.n, c.seed, o.debug.has_value());
  }
  if (o.out) {
    std::ofstream file(*o.out);
    if (!file) throw ValidationError("cannot write '" + *o.out + "'");
    write_dataset(file, g.records, spec, c.csv);
  } else {
    write_dataset(out, g.records, spec, c.csv);
  }
  if (o.debug) {
    std::ofstream file(*o.debug);
    if (!file) throw ValidationError("cannot write '" + *o.debug + "'");
    write_debug(file, g.debug, spec, c.csv);
  }
  return kOk;
}

int cmd_fit(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = effective_config(o);
  const auto loaded = load_data(o, c);
  const auto& spec = loaded.spec;
  const FitResult f = fit_em(loaded.records, spec, c.fit);
  const auto cells = target_cells(c, spec);

  std::vector<Table> tables;
  Table info{"fit", {"records", "loglik", "iterations", "converged", "restart"}, {}};
  info.add({std::to_string(loaded.records.size()), fmt(f.loglik(), 6), std::to_string(f.iterations),
            f.converged ? "1" : "0", std::to_string(f.restart)});
  tables.push_back(info);
  tables.push_back(pattern_table(loaded.records, spec));

  Table cov{"covariates", {"name", "levels", "fully_observed"}, {}};
  for (std::size_t k = 0; k < spec.num_covariates(); ++k) {
    cov.add({spec.names[k], std::to_string(spec.levels[k]), spec.fully_observed[k] ? "1" : "0"});
  }
  tables.push_back(cov);

  Table comp{"compliance", {"cell", "p_always", "p_complier", "p_never"}, {}};
  for (const auto& r : compliance_proportions(f, cells)) {
    comp.add({cell_label(r.cell), fmt(r.p_always), fmt(r.p_complier), fmt(r.p_never)});
  }
  tables.push_back(comp);

  Table ct{"cace", {"cell", "estimate"}, {}};
  for (const auto& r : cace_table(f, cells)) ct.add({cell_label(r.cell), fmt(r.estimate)});
  tables.push_back(ct);

  Table wt{"weighted_cace", {"weighting", "estimate"}, {}};
  for (auto w : {Weighting::CellProbability, Weighting::ComplierCount}) {
    wt.add({to_string(w), fmt(weighted_cace(f, w))});
  }
  tables.push_back(wt);
  tables.push_back(parameter_table(f));

  Table trace{"loglik_trace", {"iteration", "loglik"}, {}};
  for (std::size_t i = 0; i < f.loglik_trace.size(); ++i) {
    trace.add({std::to_string(i + 1), fmt(f.loglik_trace[i], 6)});
  }
  tables.push_back(trace);

  emit(o, c, tables, out);
  for (const auto& w : f.warnings) err << "warning: " << w << '\n';
  if (!f.converged) {
    err << "EM did not converge within " << c.fit.max_em_iters << " iterations\n";
    return kNonConvergence;
  }
  return kOk;
}

int cmd_baselines(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig c = effective_config(o);
  if (o.methods) {
    c.baseline_methods.clear();
    std::stringstream ss(*o.methods);
    std::string m;
    while (std::getline(ss, m, ',')) {
      if (!m.empty()) c.baseline_methods.push_back(parse_baseline_method(m));
    }
  }
  Table t{"baselines", {"method", "target", "estimate", "lower", "upper", "status"}, {}};
  if (c.baseline_methods.empty()) {
    emit(o, c, {t}, out);
    return kOk;
  }
  const auto loaded = load_data(o, c);
  const auto& data = loaded.records;
  const auto& spec = loaded.spec;
  const auto target = EstimandTarget::weighted(Weighting::ComplierCount);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  bool partial = false;

  for (auto m : c.baseline_methods) {
    std::string label = "ate";
    try {
      IntervalEstimate e{nan, nan, nan, nan};
      switch (m) {
        case BaselineMethod::EmNonignorable:
        case BaselineMethod::CompleteCase: {
          label = target.label();
          Dataset used;
          if (m == BaselineMethod::CompleteCase) {
            for (const auto& r : data) {
              if (std::find(r.x.begin(), r.x.end(), kMissing) == r.x.end()) used.push_back(r);
            }
          }
          const Dataset& d = m == BaselineMethod::CompleteCase ? used : data;
          const FitResult f = m == BaselineMethod::CompleteCase ? complete_case_fit(data, spec, c.fit)
                                                                : fit_em(data, spec, c.fit);
          e.estimate = evaluate_target(f, target);
          if (o.resamples) {
            BootstrapConfig b = c.bootstrap;
            b.ci_level = c.ci_level;
            FitOptions fo;
            fo.model_missingness = m != BaselineMethod::CompleteCase;
            const auto rep = bootstrap_ci(d, spec, c.fit, b, {target}, f, fo);
            e.lower = rep.rows[0].lower;
            e.upper = rep.rows[0].upper;
          }
          break;
        }
        case BaselineMethod::MarImpute: {
          label = target.label();
          e.estimate = mar_impute_fit(data, spec, c.fit, c.imputation, {target}).pooled[0].estimate;
          break;
        }
        case BaselineMethod::Unadjusted: e = unadjusted_difference(data, c.ci_level); break;
        case BaselineMethod::Regression: e = regression_adjusted(data, spec, c.imputation, c.ci_level); break;
        case BaselineMethod::Propensity:
          e = propensity_subclassification(data, spec, c.imputation, c.n_subclasses, c.ci_level);
          break;
      }
      t.add({to_string(m), label, fmt(e.estimate), fmt(e.lower), fmt(e.upper), "ok"});
    } catch (const std::exception& ex) {
      partial = true;
      err << to_string(m) << ": " << ex.what() << '\n';
      t.add({to_string(m), label, "NA", "NA", "NA", "failed"});
    }
  }
  emit(o, c, {t}, out);
  return finish_status(partial);
}

int cmd_bootstrap(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  const RunConfig c = effective_config(o);
  const auto loaded = load_data(o, c);
  const auto& spec = loaded.spec;
  auto targets = cell_targets(target_cells(c, spec));
  targets.push_back(EstimandTarget::weighted(Weighting::CellProbability));
  targets.push_back(EstimandTarget::weighted(Weighting::ComplierCount));
  const FitResult point = fit_em(loaded.records, spec, c.fit);
  const auto report = bootstrap_ci(loaded.records, spec, c.fit, c.bootstrap, targets, point);

  Table t{"bootstrap", {"target", "estimate", "sd", "lower", "upper"}, {}};
  for (const auto& r : report.rows) {
    t.add({r.target.label(), fmt(r.estimate), fmt(r.sd), fmt(r.lower), fmt(r.upper)});
  }
  Table s{"bootstrap_summary", {"resamples", "dropped", "ci_level", "seed"}, {}};
  s.add({std::to_string(report.n_resamples), std::to_string(report.n_dropped), fmt(report.ci_level, 3),
         std::to_string(c.bootstrap.seed)});
  emit(o, c, {t, s}, out);
  if (!point.converged) {
    err << "point fit did not converge\n";
    return kNonConvergence;
  }
  if (report.n_dropped > 0) err << report.n_dropped << " bootstrap replicates failed and were dropped\n";
  return finish_status(report.n_dropped > 0);
}

int cmd_sensitivity(const CommandOptions& o, std::ostream& out, std::ostream& err) {
  RunConfig c = effective_config(o);
  const auto loaded = load_data(o, c);
  const auto& spec = loaded.spec;
  const auto cells = target_cells(c, spec);
  const FitResult base = fit_em(loaded.records, spec, c.fit);
  const auto base_report = bootstrap_ci(loaded.records, spec, c.fit, c.bootstrap, cell_targets(cells), base);

  c.grid.cells = cells;
  c.grid.workers = c.bootstrap.workers;
  if (c.grid_full_bootstrap) c.grid.bootstrap = c.bootstrap;
  const auto grid = sensitivity_grid(loaded.records, spec, c.grid, c.fit, base, base_report);

  Table b{"base", {"cell", "estimate", "lower", "upper"}, {}};
  for (const auto& r : base_report.rows) {
    b.add({cell_label(r.target.cell), fmt(r.estimate), fmt(r.lower), fmt(r.upper)});
  }
  Table t{"sensitivity",
          {"cell", "pi", "exp_xi", "exp_kappa", "estimate", "ci_low", "ci_high", "flip", "status"},
          {}};
  for (const auto& r : grid.rows) {
    t.add({cell_label(r.cell), fmt(r.point.pi, 3), fmt(r.point.outcome_odds_ratio, 4),
           fmt(r.point.response_odds_ratio, 4), r.ok ? fmt(r.estimate) : "NA", r.ok ? fmt(r.ci_low) : "NA",
           r.ok ? fmt(r.ci_high) : "NA", r.flip ? "1" : "0", r.ok ? "ok" : "failed"});
  }
  emit(o, c, {b, t}, out);
  if (grid.n_failed_points > 0) err << grid.n_failed_points << " grid points failed\n";
  if (base_report.n_dropped > 0) err << base_report.n_dropped << " base bootstrap replicates dropped\n";
  return finish_status(grid.n_failed_points > 0 || base_report.n_dropped > 0);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Complier average causal effects with nonignorably missing covariates"};
  app.require_subcommand(1);
  CommandOptions o;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "JSON run configuration");
    s->add_option("--out", o.out, "Output file (default: standard output)");
    s->add_option("--seed", o.seed, "Random seed");
    s->add_option("--workers", o.workers, "Worker threads (default: IVCACE_WORKERS or 1)");
    s->add_option("--format", o.format, "Table format: csv or text");
  };
  auto with_data = [&](CLI::App* s) {
    s->add_option("--data", o.data, "Dataset file")->required();
    s->add_option("--cells", o.cells, "Target cells as 1-based codes, e.g. 1,2;3,1");
  };

  auto* sim = app.add_subcommand("simulate", "Generate data or run the replication study");
  common(sim);
  sim->add_option("--scenario", o.scenario, "mcar, mar, nonignorable or registry");
  sim->add_option("--n", o.n, "Records per dataset");
  sim->add_flag("--study", o.study, "Run the replication study instead of writing one dataset");
  sim->add_option("--reps", o.reps, "Replications for --study");
  sim->add_option("--methods", o.methods, "Study methods: em_ni,complete_case,mar_impute");
  sim->add_option("--debug", o.debug, "Also write ground-truth columns to this file");

  auto* fit = app.add_subcommand("fit", "Fit the model and report estimands");
  common(fit);
  with_data(fit);

  auto* base = app.add_subcommand("baselines", "Compare against baseline estimators");
  common(base);
  with_data(base);
  base->add_option("--methods", o.methods, "Comma-separated subset of methods");
  base->add_option("--resamples", o.resamples, "Bootstrap resamples for the EM rows' intervals");

  auto* sens = app.add_subcommand("sensitivity", "Latent-confounder sensitivity grid");
  common(sens);
  with_data(sens);
  sens->add_option("--resamples", o.resamples, "Bootstrap resamples for the base interval");

  auto* boot = app.add_subcommand("bootstrap", "Bootstrap intervals for the CACE targets");
  common(boot);
  with_data(boot);
  boot->add_option("--resamples", o.resamples, "Bootstrap resamples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kValidation;
  }

  try {
    if (*sim) return cmd_simulate(o, out, err);
    if (*fit) return cmd_fit(o, out, err);
    if (*base) return cmd_baselines(o, out, err);
    if (*sens) return cmd_sensitivity(o, out, err);
    return cmd_bootstrap(o, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const EstimationError& e) {
    err << "estimation failed: " << e.what() << '\n';
    return kNonConvergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
}

}  // namespace ivcace::cli
