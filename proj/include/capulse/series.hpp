#pragma once

// Multivariate series ingestion, standardization, chronological splits and
// sliding windows.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "capulse/numeric.hpp"

namespace capulse {

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Row-major [T_l x D] values with timestamps and optional 0/1 labels.
struct MultivariateSeries {
  numeric::Tensor values;
  std::vector<double> timestamps;
  std::optional<std::vector<int>> labels;
  std::vector<std::string> dim_names;

  std::size_t length() const { return values.rows(); }
  std::size_t dims() const { return values.cols(); }

  void validate() const {
    if (values.shape().size() != 2 || length() < 1 || dims() < 1) throw Error("series: need T_l >= 1 and D >= 1");
    if (timestamps.size() != length()) throw Error("series: timestamp count does not match length");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
      if (!(timestamps[i] > timestamps[i - 1]))
        throw Error("series: timestamps not strictly increasing at row " + std::to_string(i));
    if (labels) {
      if (labels->size() != length()) throw Error("series: label count does not match length");
      for (int l : *labels)
        if (l != 0 && l != 1) throw Error("series: labels must be 0 or 1");
    }
    if (dim_names.size() != dims()) throw Error("series: dim_names count does not match D");
  }

  /// Rows [begin, end) as a new series.
  MultivariateSeries slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > length()) throw Error("series: invalid slice");
    const std::size_t D = dims();
    MultivariateSeries s;
    s.values = numeric::Tensor({end - begin, D},
                               std::vector<double>(values.raw().begin() + static_cast<long>(begin * D),
                                                   values.raw().begin() + static_cast<long>(end * D)));
    s.timestamps.assign(timestamps.begin() + static_cast<long>(begin), timestamps.begin() + static_cast<long>(end));
    if (labels) s.labels = std::vector<int>(labels->begin() + static_cast<long>(begin), labels->begin() + static_cast<long>(end));
    s.dim_names = dim_names;
    return s;
  }
};

struct SplitSpec {
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
};

/// Row ranges of the three chronological splits.
struct SplitBounds {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t test_end = 0;
};

inline SplitBounds split_bounds(std::size_t length, const SplitSpec& spec = {}) {
  const double total = spec.train_frac + spec.val_frac + spec.test_frac;
  if (std::abs(total - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
  if (spec.train_frac <= 0 || spec.val_frac < 0 || spec.test_frac < 0) throw Error("split fractions must be positive");
  auto cut = [](double v) { return static_cast<std::size_t>(std::floor(v + 1e-9)); };
  SplitBounds b;
  b.train_end = cut(spec.train_frac * static_cast<double>(length));
  b.val_end = b.train_end + cut(spec.val_frac * static_cast<double>(length));
  b.test_end = length;
  return b;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// RFC3339 (YYYY-MM-DDTHH:MM:SS[.frac](Z|+HH:MM|-HH:MM)) to epoch seconds.
inline std::optional<double> parse_rfc3339(std::string_view s) {
  std::tm tm{};
  std::istringstream in{std::string(s)};
  in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
  if (in.fail()) {
    in.clear();
    in.str(std::string(s));
    in >> std::get_time(&tm, "%Y-%m-%d %H:%M:%S");
    if (in.fail()) return std::nullopt;
  }
  double frac = 0.0;
  std::string rest;
  std::getline(in, rest);
  std::string_view r = rest;
  if (!r.empty() && r.front() == '.') {
    std::size_t i = 1;
    while (i < r.size() && std::isdigit(static_cast<unsigned char>(r[i]))) ++i;
    auto f = parse_double(std::string("0") + std::string(r.substr(0, i)));
    if (!f) return std::nullopt;
    frac = *f;
    r.remove_prefix(i);
  }
  long offset = 0;
  if (r == "Z" || r == "z" || r.empty()) {
    offset = 0;
  } else if ((r.front() == '+' || r.front() == '-') && r.size() == 6 && r[3] == ':') {
    const int hh = std::stoi(std::string(r.substr(1, 2)));
    const int mm = std::stoi(std::string(r.substr(4, 2)));
    offset = (r.front() == '+' ? 1 : -1) * (hh * 3600 + mm * 60);
  } else {
    return std::nullopt;
  }
  const std::time_t epoch = timegm(&tm);
  return static_cast<double>(epoch - offset) + frac;
}

}  // namespace detail

inline bool is_timestamp_header(std::string_view h) {
  return h == "timestamp" || h == "time" || h == "ts" || h == "t";
}

/// Load a header-first CSV. An optional first column named `timestamp`,
/// `time`, `ts` or `t` (number or RFC3339) and an optional label column are
/// recognised; every other column is a float64 channel.
inline MultivariateSeries load_csv(const std::string& path, const std::string& label_column = "label") {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing header row", 1);
  const auto header = detail::split_csv(line);
  const bool has_ts = !header.empty() && is_timestamp_header(header[0]);
  long label_idx = -1;
  std::vector<std::size_t> data_cols;
  MultivariateSeries s;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i == 0 && has_ts) continue;
    if (header[i] == label_column) {
      label_idx = static_cast<long>(i);
      continue;
    }
    data_cols.push_back(i);
    s.dim_names.emplace_back(header[i]);
  }
  if (data_cols.empty()) throw Error("'" + path + "': no data columns");
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()),
                       lineno);
    if (has_ts) {
      auto ts = detail::parse_double(fields[0]);
      if (!ts) ts = detail::parse_rfc3339(fields[0]);
      if (!ts) throw ParseError("bad timestamp '" + std::string(fields[0]) + "'", lineno);
      s.timestamps.push_back(*ts);
    } else {
      s.timestamps.push_back(static_cast<double>(s.timestamps.size()));
    }
    for (std::size_t c : data_cols) {
      auto v = detail::parse_double(fields[c]);
      if (!v) throw ParseError("bad number '" + std::string(fields[c]) + "' in column '" + std::string(header[c]) + "'",
                               lineno);
      values.push_back(*v);
    }
    if (label_idx >= 0) {
      const auto f = fields[static_cast<std::size_t>(label_idx)];
      if (f != "0" && f != "1") throw ParseError("label must be 0 or 1, got '" + std::string(f) + "'", lineno);
      labels.push_back(f == "1" ? 1 : 0);
    }
  }
  if (s.timestamps.empty()) throw Error("'" + path + "': no data rows");
  s.values = numeric::Tensor({s.timestamps.size(), data_cols.size()}, std::move(values));
  if (label_idx >= 0) s.labels = std::move(labels);
  for (std::size_t i = 1; i < s.timestamps.size(); ++i)
    if (!(s.timestamps[i] > s.timestamps[i - 1]))
      throw Error("'" + path + "': timestamps not strictly increasing at line " + std::to_string(i + 2));
  return s;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  if (v == std::floor(v) && std::abs(v) < 1e15)
    os << static_cast<long long>(v);
  else
    os << std::setprecision(17) << v;
  return os.str();
}

/// Write the same schema `load_csv` reads: timestamp, channels, [label].
inline void save_csv(const MultivariateSeries& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "timestamp";
  for (const auto& n : s.dim_names) out << ',' << n;
  if (s.labels) out << ",label";
  out << '\n';
  const std::size_t D = s.dims();
  for (std::size_t t = 0; t < s.length(); ++t) {
    out << format_number(s.timestamps[t]);
    for (std::size_t d = 0; d < D; ++d) out << ',' << std::setprecision(17) << s.values[t * D + d];
    if (s.labels) out << ',' << (*s.labels)[t];
    out << '\n';
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;

  numeric::Tensor apply(const numeric::Tensor& x) const {
    numeric::Tensor out = x;
    const std::size_t D = x.cols();
    if (D != mean.size()) throw Error("standardization: dimension mismatch");
    for (std::size_t t = 0; t < x.rows(); ++t)
      for (std::size_t d = 0; d < D; ++d) out[t * D + d] = (x[t * D + d] - mean[d]) / stddev[d];
    return out;
  }
};

/// Fit per-dimension mean and population std on the training rows.
inline Standardization fit_standardization(const MultivariateSeries& s, const SplitSpec& split = {}) {
  const auto b = split_bounds(s.length(), split);
  if (b.train_end < 2) throw Error("standardize: training split needs at least 2 points");
  const std::size_t D = s.dims();
  Standardization st{std::vector<double>(D, 0.0), std::vector<double>(D, 0.0)};
  for (std::size_t t = 0; t < b.train_end; ++t)
    for (std::size_t d = 0; d < D; ++d) st.mean[d] += s.values[t * D + d];
  for (auto& m : st.mean) m /= static_cast<double>(b.train_end);
  for (std::size_t t = 0; t < b.train_end; ++t)
    for (std::size_t d = 0; d < D; ++d) {
      const double e = s.values[t * D + d] - st.mean[d];
      st.stddev[d] += e * e;
    }
  for (auto& v : st.stddev) {
    v = std::sqrt(v / static_cast<double>(b.train_end));
    if (v < 1e-8) v = 1.0;
  }
  return st;
}

inline std::pair<MultivariateSeries, Standardization> standardize(const MultivariateSeries& s,
                                                                  const SplitSpec& split = {}) {
  auto st = fit_standardization(s, split);
  MultivariateSeries out = s;
  out.values = st.apply(s.values);
  return {std::move(out), std::move(st)};
}

/// Sliding windows over a [n x D] matrix.
struct WindowBatch {
  std::vector<numeric::Tensor> windows;
  std::vector<std::size_t> starts;
  std::size_t length = 0;
  std::size_t stride = 1;
  std::size_t source_length = 0;

  std::size_t size() const { return windows.size(); }
  bool empty() const { return windows.empty(); }
};

inline WindowBatch make_windows(const numeric::Tensor& values, std::size_t T, std::size_t stride) {
  if (stride < 1) throw Error("make_windows: stride must be >= 1");
  const std::size_t n = values.rows(), D = values.cols();
  if (T < 1 || T > n)
    throw Error("make_windows: window length " + std::to_string(T) + " exceeds series length " + std::to_string(n));
  WindowBatch b;
  b.length = T;
  b.stride = stride;
  b.source_length = n;
  for (std::size_t s = 0; s + T <= n; s += stride) {
    b.starts.push_back(s);
    b.windows.emplace_back(numeric::Shape{T, D},
                           std::vector<double>(values.raw().begin() + static_cast<long>(s * D),
                                               values.raw().begin() + static_cast<long>((s + T) * D)));
  }
  return b;
}

inline WindowBatch make_windows(const MultivariateSeries& s, std::size_t T, std::size_t stride) {
  return make_windows(s.values, T, stride);
}

}  // namespace capulse
