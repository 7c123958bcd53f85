#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

namespace polymerlab {

// Shortest round-trip decimal form with '.' separator, independent of the
// process locale. Infinities print as "inf"/"-inf", NaN as "nan".
std::string format_double(double value);

// CSV table with a mandatory header row. Fields containing a comma, quote
// or newline are quoted.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

  void row(const std::vector<std::string>& fields);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t columns_;
};

std::string csv_escape(const std::string& field);

}  // namespace polymerlab
