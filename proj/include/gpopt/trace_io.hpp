#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gpopt/error.hpp"
#include "gpopt/loop.hpp"

namespace gpopt {

// Trace CSV: RFC 4180, LF line endings, header
//   iter,x_0,...,x_{d-1},y,inc_f,acq_value,wall_ms
// Reals are written with 17 significant digits; acq_value is empty for the
// initial design. Incumbent points are not stored: readers recover them from
// the row where inc_f last changed. Kernel hyperparameters are not stored.

namespace detail {

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw FormatError("unterminated quoted CSV field");
  fields.push_back(std::move(field));
  return fields;
}

inline double parse_real(const std::string& s, std::size_t line_no) {
  if (s.empty()) throw FormatError("empty numeric field on line " + std::to_string(line_no));
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end != begin + s.size() || errno == ERANGE)
    throw FormatError("bad numeric field '" + s + "' on line " + std::to_string(line_no));
  return v;
}

}  // namespace detail

inline std::string trace_header(Eigen::Index dimension) {
  std::string h = "iter";
  for (Eigen::Index j = 0; j < dimension; ++j) h += ",x_" + std::to_string(j);
  h += ",y,inc_f,acq_value,wall_ms";
  return h;
}

inline std::string trace_row(const TraceRecord& rec) {
  std::string row = std::to_string(rec.iteration);
  for (Eigen::Index j = 0; j < rec.x.size(); ++j) row += "," + detail::format_real(rec.x[j]);
  row += "," + detail::format_real(rec.y);
  row += "," + detail::format_real(rec.incumbent_f);
  row += ",";
  if (rec.acq_value) row += detail::format_real(*rec.acq_value);
  row += "," + detail::format_real(rec.wall_ms);
  return row;
}

/// Streams records to a CSV file, flushing after every row so the file is
/// readable mid-run and survives a crash.
class TraceWriter {
 public:
  TraceWriter(const std::string& path, Eigen::Index dimension) : path_(path), dimension_(dimension), out_(path) {
    if (!out_) throw IoError("cannot open trace file '" + path + "' for writing");
    out_ << trace_header(dimension) << '\n';
    flush();
  }

  void append(const TraceRecord& rec) {
    if (rec.x.size() != dimension_) throw InvalidArgument("trace record dimension mismatch");
    out_ << trace_row(rec) << '\n';
    flush();
  }

  const std::string& path() const noexcept { return path_; }

 private:
  void flush() {
    out_.flush();
    if (!out_) throw IoError("failed writing trace file '" + path_ + "'");
  }

  std::string path_;
  Eigen::Index dimension_;
  std::ofstream out_;
};

inline void write_trace(const Trace& trace, const std::string& path) {
  TraceWriter writer(path, trace.dimension);
  for (const auto& rec : trace.records) writer.append(rec);
}

inline Trace read_trace_stream(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("trace file is empty (missing header)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  if (header.size() < 6 || header.front() != "iter") throw FormatError("unrecognized trace header");
  const Eigen::Index d = static_cast<Eigen::Index>(header.size()) - 5;
  if (line != trace_header(d)) throw FormatError("unrecognized trace header '" + line + "'");

  Trace trace;
  trace.dimension = d;
  std::size_t line_no = 1;
  std::optional<double> previous_inc;
  Eigen::VectorXd inc_x;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (static_cast<Eigen::Index>(f.size()) != d + 5)
      throw FormatError("wrong field count on line " + std::to_string(line_no));
    TraceRecord rec;
    const double iter = detail::parse_real(f[0], line_no);
    if (iter != static_cast<double>(static_cast<int>(iter)) || iter < 0)
      throw FormatError("bad iteration index on line " + std::to_string(line_no));
    rec.iteration = static_cast<int>(iter);
    rec.x.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) rec.x[j] = detail::parse_real(f[static_cast<std::size_t>(1 + j)], line_no);
    const auto base = static_cast<std::size_t>(1 + d);
    rec.y = detail::parse_real(f[base], line_no);
    rec.incumbent_f = detail::parse_real(f[base + 1], line_no);
    if (!f[base + 2].empty()) rec.acq_value = detail::parse_real(f[base + 2], line_no);
    rec.wall_ms = detail::parse_real(f[base + 3], line_no);
    if (!previous_inc || rec.incumbent_f != *previous_inc) inc_x = rec.x;
    previous_inc = rec.incumbent_f;
    rec.incumbent_x = inc_x;
    trace.records.push_back(std::move(rec));
  }
  return trace;
}

inline Trace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file '" + path + "'");
  return read_trace_stream(in);
}

}  // namespace gpopt
