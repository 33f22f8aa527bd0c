#include "trajcast/eval.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <sstream>

namespace trajcast {

namespace {

struct ClassCounts {
  std::int64_t pos = 0;
  std::int64_t neg = 0;
};

ClassCounts check_inputs(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const IntVector>& labels) {
  if (scores.size() != labels.size()) {
    throw ConfigError("auc: " + std::to_string(scores.size()) + " scores for " + std::to_string(labels.size()) +
                      " labels");
  }
  ClassCounts c;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == 1)
      ++c.pos;
    else if (labels(i) == 0)
      ++c.neg;
    else
      throw ConfigError("auc: labels must be 0 or 1");
    if (!std::isfinite(scores(i))) throw ConfigError("auc: scores must be finite");
  }
  if (c.pos == 0 || c.neg == 0) throw ConfigError("auc: both classes must be present");
  return c;
}

}  // namespace

RocCurve roc(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const IntVector>& labels) {
  const ClassCounts c = check_inputs(scores, labels);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return scores(a) > scores(b); });

  RocCurve curve;
  curve.points.push_back(RocPoint{});
  std::int64_t tp = 0, fp = 0;
  // Twice the area in units of (positive x negative) pairs.
  std::int64_t area2 = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double threshold = scores(order[k]);
    std::int64_t dtp = 0, dfp = 0;
    while (k < order.size() && scores(order[k]) == threshold) {
      (labels(order[k]) == 1 ? dtp : dfp) += 1;
      ++k;
    }
    area2 += dfp * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    curve.points.push_back(RocPoint{threshold, static_cast<double>(fp) / static_cast<double>(c.neg),
                                    static_cast<double>(tp) / static_cast<double>(c.pos)});
  }
  curve.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
  return curve;
}

double auc_pairwise(const Eigen::Ref<const Vector>& scores, const Eigen::Ref<const IntVector>& labels) {
  const ClassCounts c = check_inputs(scores, labels);
  std::int64_t twice_wins = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (labels(i) != 1) continue;
    for (Eigen::Index j = 0; j < scores.size(); ++j) {
      if (labels(j) != 0) continue;
      if (scores(i) > scores(j))
        twice_wins += 2;
      else if (scores(i) == scores(j))
        twice_wins += 1;
    }
  }
  return static_cast<double>(twice_wins) / (2.0 * static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

void Metrics::set(const std::string& name, double value) {
  for (auto& [k, v] : values) {
    if (k == name) {
      v = value;
      return;
    }
  }
  values.emplace_back(name, value);
}

bool Metrics::has(const std::string& name) const {
  return std::any_of(values.begin(), values.end(), [&](const auto& kv) { return kv.first == name; });
}

double Metrics::get(const std::string& name) const {
  for (const auto& [k, v] : values)
    if (k == name) return v;
  throw ConfigError("metrics: no entry '" + name + "'");
}

void write_metrics_csv(std::ostream& out, const Metrics& m) {
  out << "name,value\n";
  for (const auto& [k, v] : m.values) out << k << ',' << format_double(v) << '\n';
}

Metrics read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "name,value") throw FormatError("metrics CSV: header must be 'name,value'");
  Metrics m;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw FormatError("metrics CSV: row " + std::to_string(row) + ": missing comma");
    m.values.emplace_back(line.substr(0, comma), parse_double(line.substr(comma + 1)));
  }
  return m;
}

void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) {
    out << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
  }
}

}  // namespace trajcast
