#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "seer/tensor.hpp"

namespace seer {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A multivariate series stored channel-major: values[c * length + t].
struct TimeSeriesFrame {
  std::vector<std::string> channel_names;
  std::int64_t channels = 0;
  std::int64_t length = 0;
  std::vector<double> values;
  std::string frequency;       // free-text label, not interpreted
  std::int64_t nan_count = 0;  // NaN cells zero-filled at ingestion

  double at(std::int64_t c, std::int64_t t) const { return values[c * length + t]; }
  double& at(std::int64_t c, std::int64_t t) { return values[c * length + t]; }

  // Lookback window [start, start+T) as an N x T tensor.
  Tensor window(std::int64_t start, std::int64_t T) const {
    std::vector<double> v(static_cast<std::size_t>(channels * T));
    for (std::int64_t c = 0; c < channels; ++c)
      for (std::int64_t t = 0; t < T; ++t) v[c * T + t] = at(c, start + t);
    return Tensor(Shape{channels, T}, std::move(v));
  }
};

struct WindowPair {
  std::int64_t origin = 0;    // index of the first lookback point
  std::int64_t lookback = 0;  // T
  std::int64_t horizon = 0;   // F
};

namespace detail {

inline double parse_cell(const std::string& cell, std::size_t row,
                         std::size_t col) {
  std::string s = cell;
  // trim
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.pop_back();
  if (s.empty() || s == "NaN" || s == "nan" || s == "NA")
    return std::numeric_limits<double>::quiet_NaN();
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size())
    throw DataError("unparseable cell '" + s + "' at row " + std::to_string(row) +
                    ", column " + std::to_string(col));
  return v;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

// CSV with a header row; first column is a timestamp/index and is dropped,
// remaining columns become channels. NaN cells are set to 0 with a count kept.
inline TimeSeriesFrame load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file " + path);
  auto header = detail::split_line(line);
  if (header.size() < 2)
    throw DataError(path + ": need a timestamp column plus at least one channel");
  TimeSeriesFrame f;
  for (std::size_t i = 1; i < header.size(); ++i) {
    std::string name = header[i];
    while (!name.empty() && (name.back() == '\r' || name.back() == ' '))
      name.pop_back();
    f.channel_names.push_back(name);
  }
  f.channels = static_cast<std::int64_t>(f.channel_names.size());
  std::vector<std::vector<double>> cols(f.channels);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_line(line);
    if (cells.size() != header.size())
      throw DataError(path + ": row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(header.size()));
    for (std::int64_t c = 0; c < f.channels; ++c) {
      double v = detail::parse_cell(cells[c + 1], row, static_cast<std::size_t>(c + 1));
      if (std::isnan(v)) {
        v = 0.0;  // zero-fill convention for missing points
        ++f.nan_count;
      }
      cols[c].push_back(v);
    }
  }
  f.length = cols.empty() ? 0 : static_cast<std::int64_t>(cols[0].size());
  f.values.resize(static_cast<std::size_t>(f.channels * f.length));
  for (std::int64_t c = 0; c < f.channels; ++c)
    for (std::int64_t t = 0; t < f.length; ++t) f.at(c, t) = cols[c][t];
  return f;
}

inline void save_csv(const TimeSeriesFrame& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "time";
  for (const auto& name : f.channel_names) out << "," << name;
  out << "\n";
  char buf[64];
  for (std::int64_t t = 0; t < f.length; ++t) {
    out << t;
    for (std::int64_t c = 0; c < f.channels; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", f.at(c, t));
      out << "," << buf;
    }
    out << "\n";
  }
}

// Contiguous chronological partition; floor lengths for train/val, remainder
// to test.
inline std::tuple<TimeSeriesFrame, TimeSeriesFrame, TimeSeriesFrame> split(
    const TimeSeriesFrame& f, double train_ratio, double val_ratio,
    double test_ratio) {
  if (std::fabs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw DataError("split ratios must sum to 1");
  const std::int64_t L = f.length;
  const std::int64_t ltrain = static_cast<std::int64_t>(std::floor(L * train_ratio));
  const std::int64_t lval = static_cast<std::int64_t>(std::floor(L * val_ratio));
  const std::int64_t ltest = L - ltrain - lval;
  auto take = [&](std::int64_t start, std::int64_t len) {
    TimeSeriesFrame part;
    part.channel_names = f.channel_names;
    part.frequency = f.frequency;
    part.channels = f.channels;
    part.length = len;
    part.values.resize(static_cast<std::size_t>(f.channels * len));
    for (std::int64_t c = 0; c < f.channels; ++c)
      for (std::int64_t t = 0; t < len; ++t) part.at(c, t) = f.at(c, start + t);
    return part;
  };
  return {take(0, ltrain), take(ltrain, lval), take(ltrain + lval, ltest)};
}

// All stride-stepped windows with origin in [0, L-T-F]; no drop-last.
inline std::vector<WindowPair> windows(const TimeSeriesFrame& f, std::int64_t T,
                                       std::int64_t F, std::int64_t stride = 1) {
  if (f.length < T + F)
    throw DataError("part of length " + std::to_string(f.length) +
                    " is too short for T+F=" + std::to_string(T + F));
  std::vector<WindowPair> out;
  for (std::int64_t i = 0; i + T + F <= f.length; i += stride)
    out.push_back(WindowPair{i, T, F});
  return out;
}

struct MetricParams {
  std::int64_t seasonality = 1;  // m in the seasonal-naive MASE scale
  double msmape_eps = 0.1;
};

struct MetricsResult {
  double mse = 0.0;
  double mae = 0.0;
  double mase = std::numeric_limits<double>::quiet_NaN();  // NaN = undefined
  double msmape = 0.0;
};

// yhat, y: flat value sequences of equal length. train_context (optional) is
// one channel of in-sample data for the seasonal-naive MASE denominator.
inline MetricsResult metrics(const std::vector<double>& yhat,
                             const std::vector<double>& y,
                             const std::vector<double>& train_context = {},
                             const MetricParams& mp = {}) {
  if (yhat.size() != y.size())
    throw DataError("metrics shape mismatch: " + std::to_string(yhat.size()) +
                    " vs " + std::to_string(y.size()));
  MetricsResult r;
  const double n = static_cast<double>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = yhat[i] - y[i];
    r.mse += e * e;
    r.mae += std::fabs(e);
    const double denom =
        std::max(std::fabs(yhat[i]) + std::fabs(y[i]) + mp.msmape_eps,
                 0.5 + mp.msmape_eps);
    r.msmape += 200.0 * std::fabs(e) / denom;
  }
  r.mse /= n;
  r.mae /= n;
  r.msmape /= n;
  if (train_context.size() > static_cast<std::size_t>(mp.seasonality)) {
    double naive = 0.0;
    const std::size_t m = static_cast<std::size_t>(mp.seasonality);
    for (std::size_t t = m; t < train_context.size(); ++t)
      naive += std::fabs(train_context[t] - train_context[t - m]);
    naive /= static_cast<double>(train_context.size() - m);
    if (naive > 0.0) r.mase = r.mae / naive;
  }
  return r;
}

}  // namespace seer
