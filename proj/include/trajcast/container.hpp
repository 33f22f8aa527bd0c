#pragma once

// Line-oriented text containers. Every file starts with a format tag line
// (e.g. "trajcast-ds/1"); sections are "<keyword> <args...>" header lines
// followed by their payload lines.

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "trajcast/common.hpp"

namespace trajcast::container {

inline constexpr std::string_view kDatasetTag = "trajcast-ds/1";
inline constexpr std::string_view kGroundTruthTag = "trajcast-gt/1";
inline constexpr std::string_view kParamsTag = "trajcast-params/1";
inline constexpr std::string_view kModelTag = "trajcast-model/1";
inline constexpr std::string_view kEnsembleTag = "trajcast-ens/1";

// Reads the first line of a file without consuming the rest of the stream.
std::string peek_tag(const std::string& path);

class Reader {
 public:
  explicit Reader(std::istream& in, std::string source = "<stream>");

  void expect_tag(std::string_view tag);
  std::string line();
  // Reads a header line, checks its keyword and returns the remaining tokens.
  std::vector<std::string> section(std::string_view keyword);
  std::vector<std::string> section(std::string_view keyword, std::size_t n_args);
  long long int_arg(const std::vector<std::string>& args, std::size_t i) const;
  double real_arg(const std::vector<std::string>& args, std::size_t i) const;

  std::vector<double> reals(std::size_t n);
  Matrix matrix(Eigen::Index rows, Eigen::Index cols);

  [[noreturn]] void fail(const std::string& what) const;
  std::size_t line_number() const { return line_no_; }

 private:
  std::istream& in_;
  std::string source_;
  std::size_t line_no_ = 0;
};

void write_row(std::ostream& out, const Eigen::Ref<const RowVector>& row);
// Row-major, one matrix row per line. Zero-column rows are written as empty lines.
void write_matrix(std::ostream& out, const Matrix& m);

std::vector<std::string> split_tokens(const std::string& line);

}  // namespace trajcast::container
