#pragma once

// Delimiter-separated measurement logs: the interchange format between
// dataset generation, command execution, replay and training.
//
// Header row is mandatory:
//   [label,][method,]<space parameter names in order>,workload_mb,cpu_time_s,
//   acc_time_s,cpu_energy_j,acc_energy_j,cpu_workload_mb,acc_workload_mb
//
// `label` (e.g. a workload name such as "1024 x 4096") and `method` (EM/AML)
// are optional annotation columns. The delimiter is detected from the header:
// tab, then ';', then ','. Categorical values may be labels or integer codes.

#include <array>
#include <charconv>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "hetune/config_space.hpp"
#include "hetune/error.hpp"
#include "hetune/metrics.hpp"

namespace hetune {

inline constexpr std::array<std::string_view, 7> kMeasurementColumns = {
    "workload_mb", "cpu_time_s", "acc_time_s", "cpu_energy_j", "acc_energy_j", "cpu_workload_mb", "acc_workload_mb"};

struct LogRow {
  std::string label;
  std::string method;
  RawMeasurement measurement;
};

struct MeasurementLog {
  bool has_label = false;
  bool has_method = false;
  std::vector<LogRow> rows;
};

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(delim, start);
    auto f = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!f.empty() && (f.front() == ' ' || f.front() == '"')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '"' || f.back() == '\r')) f.remove_suffix(1);
    out.push_back(f);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline char detect_delimiter(std::string_view header) {
  if (header.find('\t') != std::string_view::npos) return '\t';
  if (header.find(';') != std::string_view::npos) return ';';
  return ',';
}

inline bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

/// Parses parameter values and the seven measurement fields starting at `first`.
inline RawMeasurement measurement_from_fields(const ParameterSpace& space, const std::vector<std::string_view>& fields,
                                              std::size_t first) {
  RawMeasurement m;
  m.config.values.resize(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) m.config.values[i] = space.parameter(i).code_of(fields[first + i]);
  double* dst[] = {&m.workload_mb,  &m.cpu_time_s,      &m.acc_time_s,     &m.cpu_energy_j,
                   &m.acc_energy_j, &m.cpu_workload_mb, &m.acc_workload_mb};
  for (std::size_t k = 0; k < kMeasurementColumns.size(); ++k) {
    const auto f = fields[first + space.size() + k];
    if (!parse_double(f, *dst[k]))
      throw EncodingError(std::string(kMeasurementColumns[k]) + ": not a number '" + std::string(f) + "'");
  }
  return m;
}

}  // namespace detail

/// Header line (without newline) for a log over `space`.
inline std::string log_header(const ParameterSpace& space, bool with_label = false, bool with_method = false) {
  std::string h;
  if (with_label) h += "label,";
  if (with_method) h += "method,";
  for (const auto& p : space.parameters()) h += p.name + ",";
  for (std::size_t k = 0; k < kMeasurementColumns.size(); ++k) {
    if (k) h += ',';
    h += kMeasurementColumns[k];
  }
  return h;
}

/// One data line: parameter values (categorical as labels) then the measurement.
inline std::string format_measurement_row(const ParameterSpace& space, const RawMeasurement& m) {
  std::string s;
  for (std::size_t i = 0; i < space.size(); ++i) s += space.parameter(i).format(m.config.values[i]) + ",";
  const double vals[] = {m.workload_mb,  m.cpu_time_s,      m.acc_time_s,     m.cpu_energy_j,
                         m.acc_energy_j, m.cpu_workload_mb, m.acc_workload_mb};
  for (std::size_t k = 0; k < std::size(vals); ++k) {
    if (k) s += ',';
    s += format_double(vals[k]);
  }
  return s;
}

/// Parses one headerless data line in the default column order. Returns false
/// (leaving `out` untouched) when the line is not a valid row for `space`.
inline bool try_parse_measurement_row(const ParameterSpace& space, std::string_view line, RawMeasurement& out) {
  const auto fields = detail::split_fields(line, detail::detect_delimiter(line));
  if (fields.size() != space.size() + kMeasurementColumns.size()) return false;
  try {
    auto m = detail::measurement_from_fields(space, fields, 0);
    if (!is_valid(space, m.config)) return false;
    check_measurement(m);
    out = std::move(m);
    return true;
  } catch (const Error&) {
    return false;
  }
}

inline void write_log(std::ostream& out, const ParameterSpace& space, const std::vector<LogRow>& rows,
                      bool with_label = false, bool with_method = false) {
  out << log_header(space, with_label, with_method) << '\n';
  for (const auto& r : rows) {
    if (with_label) out << r.label << ',';
    if (with_method) out << r.method << ',';
    out << format_measurement_row(space, r.measurement) << '\n';
  }
}

inline void write_log(std::ostream& out, const ParameterSpace& space, const std::vector<RawMeasurement>& rows) {
  out << log_header(space) << '\n';
  for (const auto& m : rows) out << format_measurement_row(space, m) << '\n';
}

/// Reads a log, validating the header against `space` and every row against
/// the space domains and measurement invariants. Errors carry the line number.
inline MeasurementLog read_log(std::istream& in, const ParameterSpace& space, const std::string& source = "<log>") {
  MeasurementLog log;
  std::string line;
  std::size_t lineno = 0;
  char delim = ',';
  std::size_t first = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    if (!have_header) {
      delim = detail::detect_delimiter(line);
      const auto cols = detail::split_fields(line, delim);
      if (!cols.empty() && cols[first] == "label") {
        log.has_label = true;
        ++first;
      }
      if (cols.size() > first && cols[first] == "method") {
        log.has_method = true;
        ++first;
      }
      if (cols.size() != first + space.size() + kMeasurementColumns.size())
        throw DataFormatError(source, lineno, "header has " + std::to_string(cols.size()) + " columns, expected " +
                                                  std::to_string(first + space.size() + kMeasurementColumns.size()));
      for (std::size_t i = 0; i < space.size(); ++i)
        if (cols[first + i] != space.parameter(i).name)
          throw DataFormatError(source, lineno, "expected column '" + space.parameter(i).name + "', found '" +
                                                    std::string(cols[first + i]) + "'");
      for (std::size_t k = 0; k < kMeasurementColumns.size(); ++k)
        if (cols[first + space.size() + k] != kMeasurementColumns[k])
          throw DataFormatError(source, lineno, "expected column '" + std::string(kMeasurementColumns[k]) +
                                                    "', found '" + std::string(cols[first + space.size() + k]) + "'");
      have_header = true;
      continue;
    }
    const auto fields = detail::split_fields(line, delim);
    if (fields.size() != first + space.size() + kMeasurementColumns.size())
      throw DataFormatError(source, lineno, "row has " + std::to_string(fields.size()) + " fields");
    LogRow row;
    try {
      if (log.has_label) row.label = std::string(fields[0]);
      if (log.has_method) row.method = std::string(fields[log.has_label ? 1 : 0]);
      row.measurement = detail::measurement_from_fields(space, fields, first);
      require_valid(space, row.measurement.config);
      check_measurement(row.measurement);
    } catch (const Error& e) {
      throw DataFormatError(source, lineno, e.what());
    }
    log.rows.push_back(std::move(row));
  }
  if (!have_header) throw DataFormatError(source, lineno, "missing header row");
  return log;
}

}  // namespace hetune
