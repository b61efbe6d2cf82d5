#include "weakid/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "weakid/errors.hpp"

namespace weakid {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool is_missing(const std::string& s) {
  static const char* const kMissing[] = {"", "NA", "N/A", "NaN", "nan", ".", "null"};
  return std::any_of(std::begin(kMissing), std::end(kMissing),
                     [&s](const char* m) { return s == m; });
}

// Returns false for missing cells; throws ParseError for malformed ones.
bool parse_number(const std::string& raw, double& out, std::size_t line, const std::string& column) {
  const std::string s = trim(raw);
  if (is_missing(s)) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    std::ostringstream msg;
    msg << "line " << line << ", column '" << column << "': cannot parse '" << s << "' as a number";
    throw ParseError(msg.str());
  }
  return std::isfinite(out);
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  std::size_t found = header.size();
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] != name) continue;
    if (found != header.size()) throw SchemaError("column '" + name + "' appears more than once");
    found = j;
  }
  if (found == header.size()) throw SchemaError("column '" + name + "' not found in header");
  return found;
}

}  // namespace

std::vector<std::string> split_csv_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field");
  fields.push_back(std::move(field));
  return fields;
}

LoadedData load_csv(const std::string& path, const ColumnRoles& roles) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  return load_csv(in, roles);
}

LoadedData load_csv(std::istream& in, const ColumnRoles& roles) {
  if (roles.y1.empty() || roles.y2.empty()) throw SchemaError("y1 and y2 columns are required");
  if (roles.z.empty()) throw SchemaError("at least one instrument column is required");

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty file: header row missing");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_record(line);
  for (std::string& h : header) h = trim(h);

  std::vector<std::string> used = {roles.y1, roles.y2};
  used.insert(used.end(), roles.x.begin(), roles.x.end());
  used.insert(used.end(), roles.z.begin(), roles.z.end());
  std::vector<std::size_t> idx;
  for (const std::string& name : used) idx.push_back(column_index(header, name));

  const std::size_t kx = roles.x.size() + 1;
  const std::size_t kz = roles.z.size();
  std::vector<std::vector<double>> rows;
  LoadedData out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++out.rows_read;
    const std::vector<std::string> fields = split_csv_record(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "line " << line_no << ": expected " << header.size() << " fields, found "
          << fields.size();
      throw ParseError(msg.str());
    }
    std::vector<double> values(used.size());
    bool complete = true;
    for (std::size_t k = 0; k < used.size(); ++k) {
      complete = parse_number(fields[idx[k]], values[k], line_no, used[k]) && complete;
    }
    if (!complete) {
      ++out.rows_dropped;
      continue;
    }
    if (values[0] != 0.0 && values[0] != 1.0) {
      std::ostringstream msg;
      msg << "line " << line_no << ": outcome '" << roles.y1 << "' must be 0 or 1, found "
          << values[0];
      throw ValueError(msg.str());
    }
    rows.push_back(std::move(values));
  }
  if (out.rows_dropped > 0) {
    std::ostringstream msg;
    msg << "dropped " << out.rows_dropped << " of " << out.rows_read
        << " rows with missing or non-finite values in used columns";
    out.warnings.push_back(msg.str());
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  Dataset& d = out.data;
  d.y1.resize(n);
  d.y2.resize(n);
  d.X.resize(n, static_cast<Eigen::Index>(kx));
  d.Z.resize(n, static_cast<Eigen::Index>(kz));
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::vector<double>& r = rows[static_cast<std::size_t>(i)];
    d.y1(i) = r[0];
    d.y2(i) = r[1];
    d.X(i, 0) = 1.0;
    for (std::size_t j = 1; j < kx; ++j) d.X(i, static_cast<Eigen::Index>(j)) = r[1 + j];
    for (std::size_t j = 0; j < kz; ++j) d.Z(i, static_cast<Eigen::Index>(j)) = r[1 + kx + j];
  }
  out.x_names.push_back("const");
  out.x_names.insert(out.x_names.end(), roles.x.begin(), roles.x.end());
  out.z_names = roles.z;
  out.y2_name = roles.y2;
  d.validate();
  return out;
}

}  // namespace weakid
