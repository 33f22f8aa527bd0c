#pragma once

// Ground-truth generator: simulates the latent-state generative process
//   h[0]   = beta(X) + eps,            eps ~ N(0, diag(init_noise_var))
//   h[t]   = tanh(A h[t-1] + a) + xi,  xi  ~ N(0, diag(trans_noise_var))
//   Y[t]   = G h[t] + g + N(0, obs_noise_sd^2)   for t = 0..T-1
//   z      ~ Bernoulli(sigmoid(w . h[T] + c))
// with observed cells drawn from a missingness model.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "trajcast/data.hpp"
#include "trajcast/ndiff.hpp"

namespace trajcast {

enum class Missingness : std::uint8_t { mcar, informative };

struct SynthConfig {
  int n_patients = 2000;
  int n_features = 10;
  int n_bins = 20;
  int n_covariates = 5;
  int latent_dim = 4;
  double obs_noise_sd = 0.3;
  std::vector<double> init_noise_var;   // diagonal of the h[0] noise covariance; empty -> 0.5 each
  std::vector<double> trans_noise_var;  // diagonal of the transition noise covariance; empty -> 0.001 each
  double p_obs = 0.10;
  Missingness missingness = Missingness::mcar;
  double informative_slope = 0.0;
  // Gains on the 1/sqrt(fan-in) parameter scale. The transition gain keeps
  // the latent process persistent; the classifier gain sets label signal.
  double transition_gain = 4.0;
  double classifier_gain = 8.0;
  SplitFractions fractions;
  std::uint64_t seed = 0;

  std::vector<double> init_noise_diag() const;
  std::vector<double> trans_noise_diag() const;
  void validate() const;
};

struct GroundTruth {
  // beta.W (K x D), beta.b, trans.W (D x D), trans.b, dec.W (D x M), dec.b,
  // cls.W (D x 1), cls.b; row-vector convention (h * W + b).
  ndiff::ParamStore params;
  std::vector<Matrix> latents;  // per patient, (T + 1) x D
};

struct SynthResult {
  TensorDataset dataset;
  GroundTruth truth;
  int label_attempts = 1;
};

SynthResult sample_dataset(const SynthConfig& cfg);

// sigmoid(w*(h*[T])) per patient: the Bayes reference score.
Vector oracle_scores(const GroundTruth& gt);

void write_ground_truth(std::ostream& out, const GroundTruth& gt);
GroundTruth read_ground_truth(std::istream& in, const std::string& source = "<stream>");

}  // namespace trajcast
