#include <array>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "trajcast/synthgen.hpp"

using namespace trajcast;

namespace {

SynthConfig noiseless(int n) {
  SynthConfig cfg;
  cfg.n_patients = n;
  cfg.obs_noise_sd = 0.0;
  cfg.init_noise_var.assign(4, 0.0);
  cfg.trans_noise_var.assign(4, 0.0);
  cfg.p_obs = 1.0;
  cfg.seed = 12;
  return cfg;
}

double pearson(const Vector& a, const Vector& b) {
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  return da.dot(db) / std::sqrt(da.squaredNorm() * db.squaredNorm());
}

}  // namespace

TEST_CASE("noise-free run reproduces the decoder exactly") {
  const SynthConfig cfg = noiseless(40);
  const auto a = sample_dataset(cfg);
  const auto b = sample_dataset(cfg);
  CHECK(a.dataset.entries == b.dataset.entries);
  CHECK(a.dataset.labels == b.dataset.labels);

  const auto& ds = a.dataset;
  REQUIRE(ds.entries.size() == static_cast<std::size_t>(40 * cfg.n_features * cfg.n_bins));
  const Matrix& w = a.truth.params.value("dec.W");
  const Matrix& bias = a.truth.params.value("dec.b");
  for (const auto& e : ds.entries) {
    const Matrix& h = a.truth.latents[static_cast<std::size_t>(e.patient)];
    const RowVector mean = h.row(e.bin) * w + bias.row(0);
    const double expect = mean(e.feature);
    CHECK(e.value == expect);
  }
}

TEST_CASE("latent recursion follows the transition map") {
  SynthConfig cfg = noiseless(40);
  const auto r = sample_dataset(cfg);
  const Matrix& tw = r.truth.params.value("trans.W");
  const RowVector tb = r.truth.params.value("trans.b").row(0);
  for (const auto& h : r.truth.latents) {
    REQUIRE(h.rows() == cfg.n_bins + 1);
    for (int t = 1; t <= cfg.n_bins; ++t) {
      const RowVector expect = (h.row(t - 1) * tw + tb).array().tanh().matrix();
      CHECK((h.row(t) - expect).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("identical covariates give identical trajectories without noise") {
  const auto r = sample_dataset(noiseless(300));
  const auto& x = r.dataset.covariates;
  const Vector scores = oracle_scores(r.truth);
  // Covariates are continuous, so compare each patient against a re-run of
  // its own covariate row through the deterministic maps.
  const Matrix& bw = r.truth.params.value("beta.W");
  const RowVector bb = r.truth.params.value("beta.b").row(0);
  for (int i = 0; i < 10; ++i) CHECK((r.truth.latents[static_cast<std::size_t>(i)].row(0) - (x.row(i) * bw + bb)).norm() == 0.0);
  CHECK(scores.allFinite());
}

TEST_CASE("oracle scores") {
  SynthConfig cfg;
  cfg.n_patients = 200;
  cfg.seed = 1;
  auto r = sample_dataset(cfg);
  const Vector s = oracle_scores(r.truth);
  CHECK(s.size() == 200);
  CHECK(s.minCoeff() > 0.0);
  CHECK(s.maxCoeff() < 1.0);

  r.truth.params.value("cls.W").setZero();
  r.truth.params.value("cls.b").setZero();
  CHECK((oracle_scores(r.truth).array() == 0.5).all());
}

TEST_CASE("label rate matches the mean oracle score") {
  SynthConfig cfg;
  cfg.n_patients = 4000;
  cfg.n_bins = 10;
  cfg.seed = 44;
  const auto r = sample_dataset(cfg);
  const Vector s = oracle_scores(r.truth);
  const double expected = s.mean();
  const double se = std::sqrt((s.array() * (1.0 - s.array())).sum()) / cfg.n_patients;
  CHECK(std::abs(r.dataset.labels.cast<double>().mean() - expected) < 3.0 * se);
}

TEST_CASE("MCAR fill rate does not depend on the label") {
  SynthConfig cfg;
  cfg.n_patients = 3000;
  cfg.seed = 8;
  const auto ds = sample_dataset(cfg).dataset;
  std::array<double, 2> observed{}, cells{};
  std::vector<int> per_patient(static_cast<std::size_t>(ds.n_patients), 0);
  for (const auto& e : ds.entries) ++per_patient[static_cast<std::size_t>(e.patient)];
  for (int i = 0; i < ds.n_patients; ++i) {
    observed[static_cast<std::size_t>(ds.labels(i))] += per_patient[static_cast<std::size_t>(i)];
    cells[static_cast<std::size_t>(ds.labels(i))] += ds.n_features * ds.n_bins;
  }
  const double p0 = observed[0] / cells[0], p1 = observed[1] / cells[1];
  const double se = std::sqrt(cfg.p_obs * (1 - cfg.p_obs) * (1 / cells[0] + 1 / cells[1]));
  CHECK(std::abs(p0 - p1) < 3.0 * se);
}

TEST_CASE("sparse run matches the requested fill rate") {
  SynthConfig cfg;
  cfg.p_obs = 0.059;
  cfg.seed = 5;
  const auto ds = sample_dataset(cfg).dataset;
  CHECK(std::abs(fill_rate(ds) - 0.059) <= 0.01);
}

TEST_CASE("informative missingness couples observation counts to the latent norm") {
  auto correlations = [](double gain, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.n_patients = 1500;
    cfg.missingness = Missingness::informative;
    cfg.informative_slope = 2.0;
    cfg.transition_gain = gain;
    cfg.seed = seed;
    const auto r = sample_dataset(cfg);
    Vector counts = Vector::Zero(cfg.n_patients), last(cfg.n_patients), mean(cfg.n_patients);
    for (const auto& e : r.dataset.entries) counts(e.patient) += 1.0;
    for (int i = 0; i < cfg.n_patients; ++i) {
      const Matrix& h = r.truth.latents[static_cast<std::size_t>(i)];
      last(i) = h.row(cfg.n_bins).norm();
      mean(i) = h.topRows(cfg.n_bins).rowwise().norm().mean();
    }
    return std::pair<double, double>(pearson(counts, last), pearson(counts, mean));
  };
  // Default dynamics settle into attractors of nearly equal norm, so the
  // coupling shows in the trajectory-average norm.
  CHECK(correlations(4.0, 10).second > 0.3);
  // With a weaker transition the final norm carries the coupling as well.
  const auto weak = correlations(2.0, 3);
  CHECK(weak.first > 0.0);
  CHECK(weak.second > 0.3);

  SynthConfig mcar;
  mcar.n_patients = 200;
  mcar.seed = 3;
  SynthConfig flat = mcar;
  flat.missingness = Missingness::informative;
  CHECK(sample_dataset(flat).dataset.entries == sample_dataset(mcar).dataset.entries);  // zero slope
}

TEST_CASE("ground truth container round trip") {
  SynthConfig cfg;
  cfg.n_patients = 20;
  cfg.seed = 3;
  const auto r = sample_dataset(cfg);
  std::stringstream ss;
  write_ground_truth(ss, r.truth);
  CHECK(ss.str().rfind("trajcast-gt/1\n", 0) == 0);
  const GroundTruth back = read_ground_truth(ss);
  CHECK(back.params.flatten() == r.truth.params.flatten());
  REQUIRE(back.latents.size() == r.truth.latents.size());
  for (std::size_t i = 0; i < back.latents.size(); ++i) CHECK(back.latents[i] == r.truth.latents[i]);
  CHECK(oracle_scores(back) == oracle_scores(r.truth));
}

TEST_CASE("different seeds give different data; the split is assigned") {
  SynthConfig cfg;
  cfg.n_patients = 100;
  cfg.seed = 1;
  const auto a = sample_dataset(cfg).dataset;
  cfg.seed = 2;
  const auto b = sample_dataset(cfg).dataset;
  CHECK_FALSE(a.entries == b.entries);
  CHECK(a.patients_in(Split::unassigned).empty());
  CHECK(a.patient_ids.front() == "p00");
  CHECK(a.patient_ids.back() == "p99");
  CHECK(a.feature_ids.back() == "f9");
}

TEST_CASE("invalid configurations are rejected") {
  SynthConfig cfg;
  cfg.p_obs = 0.0;
  CHECK_THROWS_AS(sample_dataset(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.p_obs = 1.5;
  CHECK_THROWS_AS(sample_dataset(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.obs_noise_sd = -1.0;
  CHECK_THROWS_AS(sample_dataset(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.init_noise_var = {0.1, 0.1};
  CHECK_THROWS_AS(sample_dataset(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.n_patients = 0;
  CHECK_THROWS_AS(sample_dataset(cfg), ConfigError);
}
