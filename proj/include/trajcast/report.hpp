#pragma once

#include <functional>

#include "trajcast/data.hpp"
#include "trajcast/ensemble.hpp"
#include "trajcast/eval.hpp"
#include "trajcast/model.hpp"

namespace trajcast {

struct Report {
  Metrics metrics;  // test_auc, val_auc, positive_rate, n_* and positive_rate_* per split
  RocCurve test_roc;
};

// `scorer` returns probabilities for a split's patients in patient-index order.
Report report_scores(const TensorDataset& ds, const std::function<Vector(Split)>& scorer);
Report report(const TrainedModel& model, const TensorDataset& ds);
Report report(const EnsembleModel& em, const TensorDataset& ds);

}  // namespace trajcast
