#include "qnmc/csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "qnmc/errors.hpp"

namespace qnmc {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()) {
  if (!out_) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

CsvWriter& CsvWriter::operator<<(const std::string& field) {
  if (field_ >= columns_) throw std::logic_error("CsvWriter: too many fields in row");
  out_ << (field_ ? "," : "") << field;
  ++field_;
  return *this;
}

void CsvWriter::end_row() {
  if (field_ != columns_) throw std::logic_error("CsvWriter: row has wrong field count");
  out_ << '\n';
  field_ = 0;
}

CsvTable CsvTable::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("missing file: " + path);
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (std::getline(in, line)) t.header = split(line);
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split(line));
  return t;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw NotFoundError("CSV column not found: " + name);
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const auto& s = at(row, name);
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc()) throw InvalidArgument("CSV: not a number: '" + s + "'");
  return v;
}

}  // namespace qnmc
