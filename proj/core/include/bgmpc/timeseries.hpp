#pragma once

#include <string>
#include <vector>

namespace bgmpc {

// Piecewise-constant (sample-and-hold) time series. at(t) returns the value
// of the latest sample with time <= t; queries before the first sample
// return the first value. Times must be strictly increasing.
class StepSeries {
 public:
  StepSeries() = default;
  StepSeries(std::vector<double> times_s, std::vector<double> values);

  // Constant series, defined for all t.
  static StepSeries constant(double value);

  double at(double t_s) const;
  bool empty() const { return values_.empty(); }
  std::size_t size() const { return values_.size(); }
  double start() const { return times_.empty() ? 0.0 : times_.front(); }
  double end() const { return times_.empty() ? 0.0 : times_.back(); }

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

  // Returns a copy with every sample mapped through f(time, value).
  template <typename F>
  StepSeries map(F&& f) const {
    StepSeries out = *this;
    for (std::size_t i = 0; i < out.values_.size(); ++i)
      out.values_[i] = f(out.times_[i], out.values_[i]);
    return out;
  }

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

namespace csv {

// Splits one line on commas/whitespace; '#' starts a comment.
std::vector<std::string> split_row(const std::string& line);

// Parses CSV text with a required header row. Returns one vector per
// requested column, all the same length. Throws on missing columns or
// malformed numbers (message carries the line number).
std::vector<std::vector<double>> read_columns(const std::string& text,
                                              const std::vector<std::string>& columns);

}  // namespace csv

}  // namespace bgmpc
