#include "ivcace_cli/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

namespace ivcace::cli {

namespace {

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw ValidationError("line " + std::to_string(line) + ": " + msg);
}

int parse_int(const std::string& s, std::size_t line, const std::string& column) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    fail(line, "column '" + column + "': expected an integer, got '" + s + "'");
  }
  return v;
}

}  // namespace

LoadedData read_dataset(std::istream& in, const std::optional<CovariateSpec>& spec,
                        const CsvOptions& opts) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = split(line, opts.delimiter);
    break;
  }
  if (header.empty()) throw ValidationError("dataset has no header row");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) fail(lineno, "empty column name");
    if (!col.emplace(header[i], i).second) fail(lineno, "duplicate column '" + header[i] + "'");
  }
  for (const char* req : {"z", "d", "y"}) {
    if (!col.count(req)) throw ValidationError(std::string("dataset is missing required column '") + req + "'");
  }

  std::vector<std::string> cov_names;
  if (spec) {
    cov_names = spec->names;
    for (const auto& n : cov_names) {
      if (!col.count(n)) throw ValidationError("dataset is missing covariate column '" + n + "'");
    }
    for (const auto& h : header) {
      if (h != "z" && h != "d" && h != "y" &&
          std::find(cov_names.begin(), cov_names.end(), h) == cov_names.end()) {
        throw ValidationError("dataset column '" + h + "' is not a declared covariate");
      }
    }
  } else {
    for (const auto& h : header) {
      if (h != "z" && h != "d" && h != "y") cov_names.push_back(h);
    }
  }

  // Raw rows: covariate codes as read (1-based, or kMissing).
  struct Raw {
    std::vector<int> x;
    int z, d, y;
    std::size_t line;
  };
  std::vector<Raw> raw;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split(line, opts.delimiter);
    if (f.size() != header.size()) {
      fail(lineno, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    Raw r;
    r.line = lineno;
    auto binary = [&](const char* name) {
      const auto& s = f[col.at(name)];
      if (s == opts.missing_token) fail(lineno, std::string("missing value in column '") + name + "'");
      const int v = parse_int(s, lineno, name);
      if (v != 0 && v != 1) fail(lineno, std::string("column '") + name + "' must be 0 or 1");
      return v;
    };
    r.z = binary("z");
    r.d = binary("d");
    r.y = binary("y");
    for (const auto& n : cov_names) {
      const auto& s = f[col.at(n)];
      if (s == opts.missing_token) {
        r.x.push_back(kMissing);
      } else {
        const int v = parse_int(s, lineno, n);
        if (v < 1) fail(lineno, "column '" + n + "': level codes start at 1");
        r.x.push_back(v);
      }
    }
    raw.push_back(std::move(r));
  }
  if (raw.empty()) throw ValidationError("dataset has no records");

  LoadedData out;
  std::vector<std::size_t> order(cov_names.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  if (spec) {
    out.spec = *spec;
  } else {
    std::vector<int> levels(cov_names.size(), 0);
    std::vector<bool> full(cov_names.size(), true);
    for (const auto& r : raw) {
      for (std::size_t k = 0; k < cov_names.size(); ++k) {
        if (r.x[k] == kMissing) {
          full[k] = false;
        } else {
          levels[k] = std::max(levels[k], r.x[k]);
        }
      }
    }
    std::stable_partition(order.begin(), order.end(), [&](std::size_t k) { return full[k]; });
    for (std::size_t k : order) {
      out.spec.names.push_back(cov_names[k]);
      out.spec.levels.push_back(std::max(levels[k], 2));
      out.spec.fully_observed.push_back(full[k]);
    }
    // With a single partial covariate and nothing else to condition on, the
    // response probabilities form an unrestricted (y, z) table per class.
    out.spec.response_yz_interaction = out.spec.num_covariates() == 1 && out.spec.num_partial() == 1;
  }
  out.spec.validate();

  out.records.reserve(raw.size());
  for (const auto& r : raw) {
    Record rec;
    rec.z = r.z;
    rec.d = r.d;
    rec.y = r.y;
    for (std::size_t k : order) rec.x.push_back(r.x[k] == kMissing ? kMissing : r.x[k] - 1);
    try {
      validate_record(rec, out.spec, r.line);
    } catch (const ValidationError& e) {
      fail(r.line, e.what());
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

LoadedData read_dataset_file(const std::string& path, const std::optional<CovariateSpec>& spec,
                             const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset '" + path + "'");
  return read_dataset(in, spec, opts);
}

void write_dataset(std::ostream& out, const Dataset& data, const CovariateSpec& spec,
                   const CsvOptions& opts) {
  const char d = opts.delimiter;
  out << "z" << d << "d" << d << "y";
  for (const auto& n : spec.names) out << d << n;
  out << '\n';
  for (const auto& r : data) {
    out << r.z << d << r.d << d << r.y;
    for (int v : r.x) {
      out << d;
      if (v == kMissing) {
        out << opts.missing_token;
      } else {
        out << v + 1;
      }
    }
    out << '\n';
  }
}

void write_debug(std::ostream& out, const std::vector<DebugRow>& debug, const CovariateSpec& spec,
                 const CsvOptions& opts) {
  const char d = opts.delimiter;
  out << "row" << d << "u";
  for (const auto& n : spec.names) out << d << n << "_true";
  for (std::size_t j = spec.num_fully_observed(); j < spec.num_covariates(); ++j) {
    out << d << "r_" << spec.names[j];
  }
  out << d << "q\n";
  for (std::size_t i = 0; i < debug.size(); ++i) {
    const auto& g = debug[i];
    out << i + 1 << d << to_string(g.u);
    for (int v : g.x_true) out << d << v + 1;
    for (int r : g.r) out << d << r;
    out << d << g.q << '\n';
  }
}

}  // namespace ivcace::cli
