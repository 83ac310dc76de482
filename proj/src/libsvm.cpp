#include "psqn/libsvm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>
#include <system_error>
#include <vector>

namespace psqn {

ParseError::ParseError(const std::string& msg, std::size_t line, std::size_t column)
    : std::runtime_error("line " + std::to_string(line) + ", column " +
                         std::to_string(column) + ": " + msg),
      line_(line),
      column_(column) {}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

bool parse_number(std::string_view text, double& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

bool parse_index(std::string_view text, std::size_t& out) {
  if (text.empty()) return false;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

}  // namespace

Dataset parse_libsvm(std::istream& in, LabelMode mode, std::size_t min_dim) {
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> indices;
  std::vector<double> values;
  std::vector<double> labels;
  std::size_t dim = min_dim;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    std::size_t pos = 0;
    bool have_label = false;
    std::size_t last_index = 0;
    while (true) {
      while (pos < view.size() && (view[pos] == ' ' || view[pos] == '\t' || view[pos] == '\r')) {
        ++pos;
      }
      if (pos >= view.size()) break;
      std::size_t end = pos;
      while (end < view.size() && view[end] != ' ' && view[end] != '\t' && view[end] != '\r') {
        ++end;
      }
      const std::string_view token = view.substr(pos, end - pos);
      const std::size_t column = pos + 1;
      if (!have_label) {
        double label = 0.0;
        if (!parse_number(token, label) || !std::isfinite(label)) {
          throw ParseError("malformed label '" + std::string(token) + "'", line_no, column);
        }
        if (mode == LabelMode::Binary) label = label <= 0.0 ? -1.0 : 1.0;
        labels.push_back(label);
        have_label = true;
      } else {
        const auto colon = token.find(':');
        std::size_t index = 0;
        double value = 0.0;
        if (colon == std::string_view::npos || !parse_index(token.substr(0, colon), index) ||
            !parse_number(token.substr(colon + 1), value) || !std::isfinite(value)) {
          throw ParseError("malformed feature token '" + std::string(token) + "'", line_no,
                           column);
        }
        if (index == 0) {
          throw ParseError("feature indices are 1-based, got 0", line_no, column);
        }
        if (index <= last_index) {
          throw ParseError("feature index " + std::to_string(index) +
                               " not greater than previous index " + std::to_string(last_index),
                           line_no, column);
        }
        last_index = index;
        indices.push_back(index - 1);
        values.push_back(value);
        dim = std::max(dim, index);
      }
      pos = end;
    }
    if (have_label) row_ptr.push_back(indices.size());
  }
  if (labels.empty()) throw ParseError("no data rows", line_no, 0);
  if (dim == 0) dim = 1;
  return Dataset(dim, std::move(row_ptr), std::move(indices), std::move(values),
                 std::move(labels));
}

Dataset read_libsvm_file(const std::string& path, LabelMode mode, std::size_t min_dim) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  return parse_libsvm(in, mode, min_dim);
}

void write_libsvm(std::ostream& out, const Dataset& data) {
  for (std::size_t i = 0; i < data.n(); ++i) {
    out << format_double(data.label(i));
    const RowView r = data.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) {
      out << ' ' << (r.indices[k] + 1) << ':' << format_double(r.values[k]);
    }
    out << '\n';
  }
}

}  // namespace psqn
