#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace atb {

// Shortest round-trippable decimal form, C locale ('.' decimal point).
std::string fmt_double(double v);

// Comma-delimited, header row, LF line endings.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::string path_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace atb
