#include "trajcast/container.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace trajcast {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& text) {
  if (text.empty()) throw FormatError("empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE) {
    throw FormatError("not a number: '" + text + "'");
  }
  return v;
}

}  // namespace trajcast

namespace trajcast::container {

std::string peek_tag(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::string tag;
  std::getline(in, tag);
  return tag;
}

Reader::Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

void Reader::fail(const std::string& what) const {
  throw FormatError(source_ + ":" + std::to_string(line_no_) + ": " + what);
}

std::string Reader::line() {
  std::string s;
  if (!std::getline(in_, s)) {
    ++line_no_;
    fail("unexpected end of file");
  }
  ++line_no_;
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

void Reader::expect_tag(std::string_view tag) {
  std::string first;
  if (!std::getline(in_, first)) fail("empty file, expected format tag " + std::string(tag));
  ++line_no_;
  if (first != tag) fail("format tag mismatch: expected '" + std::string(tag) + "', found '" + first + "'");
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> Reader::section(std::string_view keyword) {
  auto tokens = split_tokens(line());
  if (tokens.empty() || tokens.front() != keyword) {
    fail("expected section '" + std::string(keyword) + "'");
  }
  tokens.erase(tokens.begin());
  return tokens;
}

std::vector<std::string> Reader::section(std::string_view keyword, std::size_t n_args) {
  auto args = section(keyword);
  if (args.size() != n_args) {
    fail("section '" + std::string(keyword) + "' expects " + std::to_string(n_args) + " arguments");
  }
  return args;
}

long long Reader::int_arg(const std::vector<std::string>& args, std::size_t i) const {
  const auto& s = args.at(i);
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) fail("not an integer: '" + s + "'");
  return v;
}

double Reader::real_arg(const std::vector<std::string>& args, std::size_t i) const {
  try {
    return parse_double(args.at(i));
  } catch (const FormatError& e) {
    fail(e.what());
  }
}

std::vector<double> Reader::reals(std::size_t n) {
  const auto tokens = split_tokens(line());
  if (tokens.size() != n) {
    fail("expected " + std::to_string(n) + " values, found " + std::to_string(tokens.size()));
  }
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(real_arg(tokens, i));
  return out;
}

Matrix Reader::matrix(Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = reals(static_cast<std::size_t>(cols));
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

void write_row(std::ostream& out, const Eigen::Ref<const RowVector>& row) {
  for (Eigen::Index c = 0; c < row.size(); ++c) {
    if (c) out << ' ';
    out << format_double(row(c));
  }
  out << '\n';
}

void write_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) write_row(out, m.row(r));
}

}  // namespace trajcast::container
