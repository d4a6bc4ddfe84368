#include "bgmpc/timeseries.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace bgmpc {

StepSeries::StepSeries(std::vector<double> times_s, std::vector<double> values)
    : times_(std::move(times_s)), values_(std::move(values)) {
  if (times_.size() != values_.size())
    throw std::invalid_argument("StepSeries: times and values length mismatch");
  if (times_.empty()) throw std::invalid_argument("StepSeries: empty series");
  for (std::size_t i = 1; i < times_.size(); ++i)
    if (times_[i] <= times_[i - 1])
      throw std::invalid_argument("StepSeries: times must be strictly increasing");
}

StepSeries StepSeries::constant(double value) { return StepSeries({0.0}, {value}); }

double StepSeries::at(double t_s) const {
  if (values_.empty()) throw std::logic_error("StepSeries: empty");
  auto it = std::upper_bound(times_.begin(), times_.end(), t_s);
  if (it == times_.begin()) return values_.front();
  return values_[static_cast<std::size_t>(it - times_.begin()) - 1];
}

namespace csv {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '#') break;
    if (c == ',' || c == ' ' || c == '\t' || c == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::vector<double>> read_columns(const std::string& text,
                                              const std::vector<std::string>& columns) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;

  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    header = split_row(line);
    if (!header.empty()) break;
  }
  if (header.empty()) throw std::runtime_error("csv: missing header row");

  std::vector<std::size_t> index;
  for (const auto& want : columns) {
    auto it = std::find(header.begin(), header.end(), want);
    if (it == header.end())
      throw std::runtime_error("csv: missing required column '" + want + "'");
    index.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  std::vector<std::vector<double>> out(columns.size());
  while (std::getline(in, line)) {
    ++lineno;
    auto row = split_row(line);
    if (row.empty()) continue;
    if (row.size() < header.size())
      throw std::runtime_error("csv: line " + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(row.size()));
    for (std::size_t c = 0; c < index.size(); ++c) {
      try {
        std::size_t pos = 0;
        double v = std::stod(row[index[c]], &pos);
        if (pos != row[index[c]].size()) throw std::invalid_argument("trailing");
        out[c].push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error("csv: line " + std::to_string(lineno) +
                                 ": bad number '" + row[index[c]] + "'");
      }
    }
  }
  return out;
}

}  // namespace csv

}  // namespace bgmpc
