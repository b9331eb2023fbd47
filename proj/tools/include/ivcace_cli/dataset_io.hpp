#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ivcace/simulation.hpp"
#include "ivcace/types.hpp"

namespace ivcace::cli {

struct CsvOptions {
  std::string missing_token = "NA";
  char delimiter = ',';
};

struct LoadedData {
  CovariateSpec spec;
  Dataset records;
};

/// Reads a dataset with a header row. Columns z, d and y are required; every
/// other column is a covariate coded 1..L. With `spec`, each declared
/// covariate must be present and extra columns are an error. Without it the
/// layout is inferred: levels from the largest code, fully observed when the
/// column has no missing token. Inferred fully observed columns are moved in
/// front of the partial ones.
LoadedData read_dataset(std::istream& in, const std::optional<CovariateSpec>& spec,
                        const CsvOptions& opts = {});
LoadedData read_dataset_file(const std::string& path, const std::optional<CovariateSpec>& spec,
                             const CsvOptions& opts = {});

void write_dataset(std::ostream& out, const Dataset& data, const CovariateSpec& spec,
                   const CsvOptions& opts = {});

/// Ground-truth columns: row, u, true covariate codes, response flags, q.
void write_debug(std::ostream& out, const std::vector<DebugRow>& debug, const CovariateSpec& spec,
                 const CsvOptions& opts = {});

}  // namespace ivcace::cli
