#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hdt::csv {

/// Shortest-safe round-trip form: 17 significant digits.
std::string format_double(double v);

/// `p_0,..,p_{h-1},q_0,..,q_{h-1}` for dimension d = 2h.
std::string state_header(int d);

void write_row(std::ostream& out, const std::vector<double>& row);

/// Splits one CSV line on commas (no quoting support needed for numeric data).
std::vector<std::string> split(const std::string& line);

/// Parses a numeric field; throws ParseError naming `line_no` on failure.
double parse_double(const std::string& field, std::size_t line_no);

/// Writes `content` to `path + ".partial"` and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace hdt::csv
