#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "trajcast/common.hpp"

namespace trajcast {

struct RocPoint {
  double threshold = std::numeric_limits<double>::infinity();
  double fpr = 0.0;
  double tpr = 0.0;
};

// Points run from threshold +inf (0,0) down to the lowest score (1,1).
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

// One threshold per distinct score (ties collapse into a single step);
// trapezoidal area accumulated in integer pair counts.
RocCurve roc(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const IntVector>& labels);

// Mann-Whitney statistic by brute force over all (positive, negative) pairs.
double auc_pairwise(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const IntVector>& labels);

inline double auc(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const IntVector>& labels) {
  return roc(scores, labels).auc;
}

// Ordered name/value pairs; written as a `name,value` CSV.
struct Metrics {
  std::vector<std::pair<std::string, double>> values;

  void set(const std::string& name, double value);
  double get(const std::string& name) const;
  bool has(const std::string& name) const;
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

void write_metrics_csv(std::ostream& out, const Metrics& m);
Metrics read_metrics_csv(std::istream& in);
void write_roc_csv(std::ostream& out, const RocCurve& curve);

}  // namespace trajcast
