#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ivcace/baselines.hpp"
#include "ivcace/em.hpp"
#include "ivcace/estimands.hpp"
#include "ivcace/sensitivity.hpp"
#include "ivcace/simulation.hpp"
#include "ivcace_cli/dataset_io.hpp"

namespace ivcace::cli {

enum class BaselineMethod { EmNonignorable, CompleteCase, MarImpute, Unadjusted, Regression, Propensity };
const char* to_string(BaselineMethod m);
BaselineMethod parse_baseline_method(const std::string& s);
std::vector<BaselineMethod> all_baseline_methods();

struct RunConfig {
  std::optional<CovariateSpec> spec;
  CsvOptions csv;
  std::uint64_t seed = 1;
  std::optional<int> workers;
  std::string format = "csv";
  /// Target cells, 0-based; empty means every cell.
  std::vector<Cell> cells;

  FitConfig fit;
  BootstrapConfig bootstrap;
  ImputationConfig imputation;

  // simulate
  std::string scenario = "mcar";
  std::size_t n = 5000;
  std::size_t reps = 500;
  std::vector<StudyMethod> study_methods{StudyMethod::EmNonignorable, StudyMethod::CompleteCase,
                                         StudyMethod::MarImpute};
  double max_failure_fraction = 0.02;
  std::optional<SingleCovScenario> custom;

  // baselines
  std::vector<BaselineMethod> baseline_methods = all_baseline_methods();
  int n_subclasses = 5;
  double ci_level = 0.95;

  // sensitivity
  SensitivityGrid grid;
  bool grid_full_bootstrap = false;
};

/// Parses the JSON config text. Unknown keys anywhere are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// "1,2;3,1" -> {{0,1},{2,0}} (1-based codes in, 0-based out).
std::vector<Cell> parse_cells(const std::string& s);

/// --workers flag, then the config, then IVCACE_WORKERS, then 1.
int resolve_workers(std::optional<int> flag, const RunConfig& config);

}  // namespace ivcace::cli
