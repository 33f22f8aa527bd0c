#pragma once

// Generative GRU classifier and the mean-imputed GRU baseline.
//
// Generative unroll for one batch (rows are patients):
//   h[0]  = tanh(X W_beta + b_beta)
//   y~[t] = g(h[t])                            decoder on the latest latent
//   y*[t] = [ Y[t] where observed else y~[t] ; mask[t] ]
//   h[t+1]= GRU(h[t], y*[t])
//   Y^[t] = g(h[t+1])                          reconstruction of bin t
//   p     = sigmoid(h[T] W_c + b_c)
// Loss: gamma * MSE(observed cells) + (1 - gamma) * BCE + lambda * sum ||W||^2
// over all weight matrices (biases excluded).
//
// The baseline feeds [mean-imputed values ; mask ; elapsed time] and has no
// decoder; it is trained on BCE + lambda * ||W||^2 only.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trajcast/container.hpp"
#include "trajcast/data.hpp"
#include "trajcast/ndiff.hpp"

namespace trajcast {

enum class Architecture : std::uint8_t { generative, baseline };

const char* to_string(Architecture a);
Architecture parse_architecture(const std::string& s);

struct HyperParams {
  double gamma = 0.01;
  double lambda = 1e-3;
  int latent_dim = 32;
  double learning_rate = 1e-3;
  int epochs = 40;
  int batch_size = 64;
  std::optional<double> grad_clip_norm = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

struct ModelDims {
  int covariates = 0;
  int features = 0;
  int bins = 0;
  int latent = 0;

  int input_width(Architecture arch) const { return (arch == Architecture::generative ? 2 : 3) * features; }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Dense per-step view of a group of patients. Values outside the mask are
// never read by the model.
struct SequenceBatch {
  Matrix covariates;            // B x K
  std::vector<Matrix> values;   // T matrices, B x M
  std::vector<Matrix> masks;    // T matrices, B x M, 1 where observed
  std::vector<Matrix> elapsed;  // T matrices, B x M, bins since last observation / T
  Matrix labels;                // B x 1

  Eigen::Index size() const { return covariates.rows(); }
  Eigen::Index observed_cells() const;
};

// Dense per-patient series of a normalized dataset, for fast batch assembly.
class Cohort {
 public:
  explicit Cohort(const TensorDataset& normalized);

  SequenceBatch batch(std::span<const int> patients) const;
  int n_bins() const { return n_bins_; }
  int n_features() const { return n_features_; }

 private:
  int n_bins_ = 0;
  int n_features_ = 0;
  Matrix covariates_;
  IntVector labels_;
  std::vector<Matrix> values_;   // per patient, T x M
  std::vector<Matrix> masks_;    // per patient, T x M
  std::vector<Matrix> elapsed_;  // per patient, T x M
};

ndiff::ParamStore init_params(Architecture arch, const ModelDims& dims, std::uint64_t seed);
ModelDims infer_dims(const ndiff::ParamStore& params, Architecture arch, int bins);

// True for weight matrices (W_*, U_*, *.W); false for biases.
bool is_weight(const std::string& name);

struct ForwardResult {
  std::vector<Matrix> latents;         // T + 1 matrices, B x D
  std::vector<Matrix> inputs;          // T matrices, B x (2M or 3M): the fed GRU input
  std::vector<Matrix> reconstruction;  // T matrices, B x M (generative only)
  Vector probabilities;                // B
};

ForwardResult forward(const ndiff::ParamStore& params, const SequenceBatch& batch);
ForwardResult forward_baseline(const ndiff::ParamStore& params, const SequenceBatch& batch);

struct LossTerms {
  double total = 0.0;
  double reconstruction = 0.0;
  double cross_entropy = 0.0;
  double penalty = 0.0;
  Eigen::Index observed_cells = 0;
  bool empty_reconstruction = false;  // gamma > 0 but no observed cell in the batch
};

// Evaluates the loss and, when requested, adds its gradient into the
// store's accumulators. The baseline ignores gamma.
LossTerms loss(ndiff::ParamStore& params, const SequenceBatch& batch, Architecture arch, double gamma,
               double lambda, bool with_gradient = true);

struct TrainedModel {
  Architecture arch = Architecture::generative;
  HyperParams hyper;
  ModelDims dims;
  ndiff::ParamStore params;
  NormStats norm;
  std::vector<std::string> feature_ids;
  std::vector<double> loss_trace;  // mean batch loss per epoch
  double val_auc = 0.0;
  int empty_reconstruction_batches = 0;
};

// Fits on the train split after normalizing with train-split statistics.
// Deterministic given (hp.seed, ds).
TrainedModel train(const TensorDataset& ds, const HyperParams& hp, Architecture arch);

// Probabilities for the split's patients in patient-index order; ds is raw
// (un-normalized) and is normalized with the model's stored statistics.
Vector predict(const TrainedModel& model, const TensorDataset& ds, Split split);
Vector predict_patients(const TrainedModel& model, const TensorDataset& ds, std::span<const int> patients);

void write_model(std::ostream& out, const TrainedModel& model);
TrainedModel read_model(std::istream& in, const std::string& source = "<stream>");
void save_model(const std::string& path, const TrainedModel& model);
TrainedModel load_model(const std::string& path);

// Reads one complete trajcast-model/1 container from a stream that may hold more.
TrainedModel read_model(container::Reader& in);

struct GradCheckCase {
  Architecture arch = Architecture::generative;
  double gamma = 0.0;
  ndiff::GradCheckResult result;
};

// Central-difference check of the full loss on a seeded random cohort with
// three covariates and half the cells observed, for gamma in {0, 0.05, 1}
// and both architectures.
std::vector<GradCheckCase> check_gradients(int latent, int features, int bins, int patients, std::uint64_t seed,
                                           double eps = 1e-5);

}  // namespace trajcast
