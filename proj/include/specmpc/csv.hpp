#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace specmpc {

// Text that reads back to the same double ("%.17g").
std::string format_double(double v);

// Comma-separated writer. Values are written exactly as given; numbers should
// go through format_double so files are byte-stable.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);

  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::string path_;
  std::ofstream out_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column index by name; throws std::runtime_error when absent.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
};

// Throws std::runtime_error on unreadable files, ragged rows or an empty file.
CsvTable read_csv(const std::string& path);

double parse_double(const std::string& text);

// "name_0", "name_1", ...
std::vector<std::string> indexed_names(const std::string& name, int count);

}  // namespace specmpc
