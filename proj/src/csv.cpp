#include "hdt/csv.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "hdt/errors.hpp"

namespace hdt::csv {

std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

std::string state_header(int d) {
  std::string out;
  for (int i = 0; i < d / 2; ++i) out += (i ? ",p_" : "p_") + std::to_string(i);
  for (int i = 0; i < d / 2; ++i) out += ",q_" + std::to_string(i);
  return out;
}

void write_row(std::ostream& out, const std::vector<double>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << format_double(row[i]);
  }
  out << '\n';
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

double parse_double(const std::string& field, std::size_t line_no) {
  std::size_t begin = field.find_first_not_of(" \t");
  std::size_t end = field.find_last_not_of(" \t");
  if (begin == std::string::npos) throw ParseError("empty field on line " + std::to_string(line_no), line_no);
  double v = 0.0;
  const char* first = field.data() + begin;
  const char* last = field.data() + end + 1;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("malformed number '" + field + "' on line " + std::to_string(line_no), line_no);
  }
  return v;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string partial = path + ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + partial + "' for writing");
    out << content;
    if (!out) throw Error("write to '" + partial + "' failed");
  }
  std::filesystem::rename(partial, path);
}

}  // namespace hdt::csv
