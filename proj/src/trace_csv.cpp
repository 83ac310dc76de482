#include "psqn/trace_csv.hpp"

#include <charconv>
#include <cstdint>
#include <type_traits>
#include <cmath>
#include <istream>
#include <ostream>

#include "psqn/libsvm.hpp"

namespace psqn {

CsvError::CsvError(const std::string& msg, std::size_t line)
    : std::runtime_error("trace csv line " + std::to_string(line) + ": " + msg), line_(line) {}

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace) {
    const double subopt = std::isnan(r.suboptimality) ? r.objective : r.suboptimality;
    out << r.epoch << ',' << r.iteration << ',' << format_double(r.objective) << ','
        << format_double(subopt) << ',' << r.grad_evals << ',' << r.metric_rebuilds << ','
        << r.elapsed_ns << '\n';
  }
}

namespace {

template <typename T>
T parse_field(const std::string& field, std::size_t line, const char* name) {
  T v{};
  const char* first = field.data();
  const char* last = first + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last) {
    throw CsvError(std::string("bad ") + name + " field '" + field + "'", line);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw CsvError(std::string("non-finite ") + name, line);
  }
  return v;
}

}  // namespace

std::vector<TraceRecord> read_trace_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw CsvError("missing header", line_no);
  if (line != kTraceHeader) throw CsvError("unexpected header '" + line + "'", line_no);
  std::vector<TraceRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 7) {
      throw CsvError("expected 7 fields, found " + std::to_string(fields.size()), line_no);
    }
    TraceRecord r;
    r.epoch = parse_field<std::size_t>(fields[0], line_no, "epoch");
    r.iteration = parse_field<std::size_t>(fields[1], line_no, "iter");
    r.objective = parse_field<double>(fields[2], line_no, "objective");
    r.suboptimality = parse_field<double>(fields[3], line_no, "subopt");
    r.grad_evals = parse_field<std::size_t>(fields[4], line_no, "grad_evals");
    r.metric_rebuilds = parse_field<std::size_t>(fields[5], line_no, "metric_rebuilds");
    r.elapsed_ns = parse_field<std::int64_t>(fields[6], line_no, "elapsed_ns");
    if (!out.empty()) {
      const TraceRecord& p = out.back();
      if (r.epoch <= p.epoch || r.iteration < p.iteration || r.grad_evals < p.grad_evals ||
          r.metric_rebuilds < p.metric_rebuilds || r.elapsed_ns < p.elapsed_ns) {
        throw CsvError("counters decrease", line_no);
      }
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace psqn
