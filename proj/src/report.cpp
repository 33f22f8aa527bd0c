#include "trajcast/report.hpp"

namespace trajcast {

Report report_scores(const TensorDataset& ds, const std::function<Vector(Split)>& scorer) {
  const auto test_idx = ds.patients_in(Split::test);
  if (test_idx.empty()) throw ConfigError("report: test split is empty");

  auto labels_of = [&](const std::vector<int>& idx) {
    IntVector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Eigen::Index>(r)) = ds.labels(idx[r]);
    return out;
  };

  Report rep;
  rep.test_roc = roc(scorer(Split::test), labels_of(test_idx));
  rep.metrics.set("test_auc", rep.test_roc.auc);
  const auto val_idx = ds.patients_in(Split::val);
  if (!val_idx.empty()) {
    const IntVector y = labels_of(val_idx);
    if (y.sum() > 0 && y.sum() < y.size()) rep.metrics.set("val_auc", auc(scorer(Split::val), y));
  }
  rep.metrics.set("positive_rate", ds.labels.cast<double>().mean());
  for (Split s : {Split::train, Split::val, Split::test}) {
    const auto idx = ds.patients_in(s);
    rep.metrics.set(std::string("n_") + to_string(s), static_cast<double>(idx.size()));
    if (!idx.empty()) {
      rep.metrics.set(std::string("positive_rate_") + to_string(s), labels_of(idx).cast<double>().mean());
    }
  }
  rep.metrics.set("fill_rate", fill_rate(ds));
  return rep;
}

Report report(const TrainedModel& model, const TensorDataset& ds) {
  return report_scores(ds, [&](Split s) { return predict(model, ds, s); });
}

Report report(const EnsembleModel& em, const TensorDataset& ds) {
  return report_scores(ds, [&](Split s) { return ensemble_predict(em, ds, s); });
}

}  // namespace trajcast
