#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace trajcast {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using IntVector = Eigen::VectorXi;

// Bad flags, invalid configurations, unmet preconditions. CLI exit code 2.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed input files or mismatched container tags. CLI exit code 2.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inputs that parse but do not agree with each other (e.g. unlabeled patient).
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite losses or activations. CLI exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest decimal text that parses back to the same double ("%.17g").
std::string format_double(double x);
double parse_double(const std::string& text);

// SplitMix64 mixing; used to derive independent seeds from (seed, index...).
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a) {
  return mix_seed(mix_seed(seed) ^ (a * 0xd1b54a32d192ed03ULL + 1));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace trajcast
