#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace qnmc {

/// Shortest text that round-trips the double exactly ("nan"/"inf" for
/// non-finite values). Output is locale-independent.
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);

  CsvWriter& operator<<(const std::string& field);
  CsvWriter& operator<<(const char* field) { return *this << std::string(field); }
  CsvWriter& operator<<(double v) { return *this << format_double(v); }
  CsvWriter& operator<<(int v) { return *this << std::to_string(v); }
  CsvWriter& operator<<(long v) { return *this << std::to_string(v); }
  CsvWriter& operator<<(unsigned long v) { return *this << std::to_string(v); }
  CsvWriter& operator<<(unsigned long long v) { return *this << std::to_string(v); }
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t field_ = 0;
};

/// Small header-keyed CSV table (no quoting; fields never contain commas here).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::string& path);
  std::size_t column(const std::string& name) const;
  const std::string& at(std::size_t row, const std::string& name) const { return rows[row][column(name)]; }
  double number(std::size_t row, const std::string& name) const;
};

}  // namespace qnmc
