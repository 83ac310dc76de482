#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "psqn/solver.hpp"

namespace psqn {

inline constexpr const char* kTraceHeader =
    "epoch,iter,objective,subopt,grad_evals,metric_rebuilds,elapsed_ns";

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& msg, std::size_t line);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Header line plus one row per record. Floats use shortest round-trip
/// formatting. When a record has no suboptimality (NaN) the subopt column
/// carries the raw objective instead.
void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace);

/// Strict reader: exact header, seven fields per row, every field fully
/// consumed, finite, counters non-decreasing.
std::vector<TraceRecord> read_trace_csv(std::istream& in);

}  // namespace psqn
