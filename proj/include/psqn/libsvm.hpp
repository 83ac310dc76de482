#pragma once

#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "psqn/model.hpp"

namespace psqn {

/// Logistic corpora ship labels as {0, 1} or {-1, +1}; Binary maps every
/// label <= 0 to -1 and everything else to +1. Raw keeps the parsed value.
enum class LabelMode { Raw, Binary };

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t line, std::size_t column);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Reads `<label> <idx>:<val> ...` lines with 1-based, strictly increasing
/// indices. Blank lines and `#` comments are skipped. d is the largest index
/// seen (at least min_dim).
Dataset parse_libsvm(std::istream& in, LabelMode mode = LabelMode::Raw,
                     std::size_t min_dim = 0);
Dataset read_libsvm_file(const std::string& path, LabelMode mode = LabelMode::Raw,
                         std::size_t min_dim = 0);

/// Writes 1-based indices with shortest round-trip number formatting.
void write_libsvm(std::ostream& out, const Dataset& data);

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace psqn
