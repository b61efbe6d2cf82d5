#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <vector>

#include "weakid/model.hpp"

namespace weakid {

/// Which CSV columns play which role. An intercept is always prepended to X.
struct ColumnRoles {
  std::string y1;
  std::string y2;
  std::vector<std::string> x;
  std::vector<std::string> z;
};

struct LoadedData {
  Dataset data;
  std::size_t rows_read = 0;
  /// Rows dropped because a used column was empty, NA or non-finite.
  std::size_t rows_dropped = 0;
  std::vector<std::string> warnings;
  /// X names including the leading "const".
  std::vector<std::string> x_names;
  std::vector<std::string> z_names;
  std::string y2_name;
};

/// Splits one RFC-4180 record (quotes, doubled quotes, embedded commas).
std::vector<std::string> split_csv_record(const std::string& line);

/// Reads a comma-separated file with a header row.
/// Throws ParseError on a malformed number, SchemaError when a role column is
/// absent or duplicated in the header, ValueError when y1 is not 0/1.
LoadedData load_csv(const std::string& path, const ColumnRoles& roles);
LoadedData load_csv(std::istream& in, const ColumnRoles& roles);

}  // namespace weakid
