#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ivcace::cli {

/// A named table of preformatted cells.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
};

enum class OutputFormat { Delimited, Text };
OutputFormat parse_format(const std::string& s);

/// Delimited form: "# name" line, header, rows, blank line.
void write_delimited(std::ostream& out, const Table& t, char delim = ',');
/// Column-aligned form for reading at a terminal.
void write_text(std::ostream& out, const Table& t);
void write_tables(std::ostream& out, const std::vector<Table>& tables, OutputFormat fmt);

/// Fixed-point with `digits` decimals; NaN prints as NA.
std::string fmt(double v, int digits = 6);

}  // namespace ivcace::cli
