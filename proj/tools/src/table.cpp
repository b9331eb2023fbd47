#include "ivcace_cli/table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "ivcace/types.hpp"

namespace ivcace::cli {

void Table::add(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw std::logic_error("table " + name + ": row width mismatch");
  rows.push_back(std::move(row));
}

OutputFormat parse_format(const std::string& s) {
  if (s == "csv" || s == "delimited") return OutputFormat::Delimited;
  if (s == "text") return OutputFormat::Text;
  throw ValidationError("unknown output format '" + s + "' (expected csv or text)");
}

namespace {

// Quotes a field that contains the delimiter or a quote, doubling any quotes.
std::string quoted(const std::string& field, char delim) {
  if (field.find(delim) == std::string::npos && field.find('"') == std::string::npos) return field;
  std::string q = "\"";
  for (char ch : field) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

void write_row(std::ostream& out, const std::vector<std::string>& row, char delim) {
  for (std::size_t i = 0; i < row.size(); ++i) out << (i ? std::string(1, delim) : "") << quoted(row[i], delim);
  out << '\n';
}

}  // namespace

void write_delimited(std::ostream& out, const Table& t, char delim) {
  out << "# " << t.name << '\n';
  write_row(out, t.columns, delim);
  for (const auto& r : t.rows) write_row(out, r, delim);
  out << '\n';
}

void write_text(std::ostream& out, const Table& t) {
  std::vector<std::size_t> width(t.columns.size());
  for (std::size_t i = 0; i < t.columns.size(); ++i) width[i] = t.columns[i].size();
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << "  ";
      out << cells[i] << std::string(width[i] - cells[i].size(), ' ');
    }
    out << '\n';
  };
  out << t.name << '\n';
  line(t.columns);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.empty() ? 0 : width.size() - 1), '-') << '\n';
  for (const auto& r : t.rows) line(r);
  out << '\n';
}

void write_tables(std::ostream& out, const std::vector<Table>& tables, OutputFormat f) {
  for (const auto& t : tables) {
    if (f == OutputFormat::Delimited) {
      write_delimited(out, t);
    } else {
      write_text(out, t);
    }
  }
}

std::string fmt(double v, int digits) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos) s = s.substr(s[0] == '-' ? 1 : 0);
  return s;
}

}  // namespace ivcace::cli
