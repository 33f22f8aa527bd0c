#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "trajcast/model.hpp"

namespace trajcast {

struct EnsembleSpec {
  int n_models = 200;
  int top_k = 20;
  double gamma_low = 0.0;
  double gamma_high = 0.1;
  double log_lambda_low = -8.0;
  double log_lambda_high = -2.0;
  bool natural_log = true;  // false: lambda = 10^u
  HyperParams base;         // template for everything but gamma, lambda and seed
  std::uint64_t seed = 0;

  void validate() const;
};

enum class MemberStatus : std::uint8_t { ok, failed };

struct MemberRecord {
  int model_index = 0;
  HyperParams hyper;
  double val_auc = -1.0;  // -1 for failed trainings
  MemberStatus status = MemberStatus::ok;
  bool selected = false;
  std::string failure;
};

// Every trained model of a run, indexed by model index (nullopt if failed).
struct ModelPool {
  std::vector<MemberRecord> records;
  std::vector<std::optional<TrainedModel>> models;
};

struct EnsembleModel {
  std::vector<TrainedModel> members;  // sorted by (val AUC desc, index asc)
  std::vector<int> member_index;
  std::vector<MemberRecord> report;  // all n_models, with `selected` flags
};

HyperParams sample_hparams(const EnsembleSpec& spec, int model_index);

// Trains spec.n_models generative models on `workers` threads. The result
// does not depend on the worker count or scheduling.
ModelPool train_pool(const TensorDataset& ds, const EnsembleSpec& spec, int workers = 1);

// Indices of successful models ordered by (val AUC desc, index asc).
std::vector<int> rank_models(const std::vector<MemberRecord>& records);

EnsembleModel select_top(const ModelPool& pool, int top_k);
EnsembleModel run_ensemble(const TensorDataset& ds, const EnsembleSpec& spec, int workers = 1);

// Unweighted mean of member probabilities.
Vector ensemble_predict(const EnsembleModel& em, const TensorDataset& ds, Split split);

struct CurvePoint {
  int k = 0;
  double test_auc = 0.0;
};

// Test AUC of the top-k ensemble for each k.
std::vector<CurvePoint> ensemble_curve(const ModelPool& pool, const TensorDataset& ds, const std::vector<int>& ks);

void write_selection_csv(std::ostream& out, const std::vector<MemberRecord>& records);
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);

void write_ensemble(std::ostream& out, const EnsembleModel& em);
EnsembleModel read_ensemble(std::istream& in, const std::string& source = "<stream>");
void save_ensemble(const std::string& path, const EnsembleModel& em);
EnsembleModel load_ensemble(const std::string& path);

}  // namespace trajcast
