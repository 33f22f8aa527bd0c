#include "trajcast/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <tuple>

#include "trajcast/container.hpp"
#include "trajcast/ndiff_io.hpp"

namespace trajcast {

namespace {

constexpr std::uint64_t kParamStream = 0x5eed0001;
constexpr std::uint64_t kPatientStream = 0x5eed0002;
constexpr std::uint64_t kLabelStream = 0x5eed0003;

Matrix uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

std::string padded(char prefix, int i, int width) {
  std::string digits = std::to_string(i);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

int digits(int n) { return n <= 10 ? 1 : static_cast<int>(std::floor(std::log10(n - 1))) + 1; }

}  // namespace

std::vector<double> SynthConfig::init_noise_diag() const {
  return init_noise_var.empty() ? std::vector<double>(static_cast<std::size_t>(latent_dim), 0.5) : init_noise_var;
}

std::vector<double> SynthConfig::trans_noise_diag() const {
  return trans_noise_var.empty() ? std::vector<double>(static_cast<std::size_t>(latent_dim), 0.001) : trans_noise_var;
}

void SynthConfig::validate() const {
  if (n_patients <= 0 || n_features <= 0 || n_bins <= 0 || n_covariates <= 0 || latent_dim <= 0) {
    throw ConfigError("synth: all dimensions must be positive");
  }
  if (!(obs_noise_sd >= 0.0)) throw ConfigError("synth: obs_noise_sd must be >= 0");
  for (const auto* diag : {&init_noise_var, &trans_noise_var}) {
    if (!diag->empty() && diag->size() != static_cast<std::size_t>(latent_dim)) {
      throw ConfigError("synth: noise covariance diagonal must have latent_dim entries");
    }
    for (double v : *diag)
      if (!(v >= 0.0)) throw ConfigError("synth: noise variances must be >= 0");
  }
  if (!(p_obs > 0.0 && p_obs <= 1.0)) throw ConfigError("synth: p_obs must lie in (0, 1]");
  if (!std::isfinite(informative_slope)) throw ConfigError("synth: informative slope must be finite");
  if (!(transition_gain >= 0.0) || !(classifier_gain >= 0.0)) throw ConfigError("synth: gains must be >= 0");
}

SynthResult sample_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_patients, m = cfg.n_features, t_max = cfg.n_bins, k = cfg.n_covariates, d = cfg.latent_dim;

  SynthResult result;
  GroundTruth& gt = result.truth;
  {
    std::mt19937_64 rng(derive_seed(cfg.seed, kParamStream));
    const double bk = 1.0 / std::sqrt(static_cast<double>(k));
    const double bd = 1.0 / std::sqrt(static_cast<double>(d));
    gt.params.add("beta.W", uniform_matrix(rng, k, d, bk));
    gt.params.add("beta.b", uniform_matrix(rng, 1, d, bk));
    gt.params.add("trans.W", uniform_matrix(rng, d, d, bd * cfg.transition_gain));
    gt.params.add("trans.b", uniform_matrix(rng, 1, d, bd));
    gt.params.add("dec.W", uniform_matrix(rng, d, m, bd));
    gt.params.add("dec.b", uniform_matrix(rng, 1, m, bd));
    gt.params.add("cls.W", uniform_matrix(rng, d, 1, bd * cfg.classifier_gain));
    gt.params.add("cls.b", uniform_matrix(rng, 1, 1, bd));
  }
  const Matrix& beta_w = gt.params.value("beta.W");
  const RowVector beta_b = gt.params.value("beta.b").row(0);
  const Matrix& trans_w = gt.params.value("trans.W");
  const RowVector trans_b = gt.params.value("trans.b").row(0);
  const Matrix& dec_w = gt.params.value("dec.W");
  const RowVector dec_b = gt.params.value("dec.b").row(0);

  const auto init_sd = Eigen::Map<const Vector>(cfg.init_noise_diag().data(), d).cwiseSqrt().eval();
  const auto trans_sd = Eigen::Map<const Vector>(cfg.trans_noise_diag().data(), d).cwiseSqrt().eval();
  const double base_logit = std::log(cfg.p_obs) - std::log1p(-cfg.p_obs);

  TensorDataset& ds = result.dataset;
  ds.n_patients = n;
  ds.n_features = m;
  ds.n_bins = t_max;
  ds.covariates.resize(n, k);
  gt.latents.resize(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(cfg.seed, kPatientStream, static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    RowVector x(k);
    for (int c = 0; c < k; ++c) x(c) = normal(rng);
    ds.covariates.row(i) = x;

    Matrix& h = gt.latents[static_cast<std::size_t>(i)];
    h.resize(t_max + 1, d);
    h.row(0) = x * beta_w + beta_b;
    for (int c = 0; c < d; ++c) h(0, c) += init_sd(c) * normal(rng);
    for (int t = 1; t <= t_max; ++t) {
      h.row(t) = (h.row(t - 1) * trans_w + trans_b).array().tanh().matrix();
      for (int c = 0; c < d; ++c) h(t, c) += trans_sd(c) * normal(rng);
    }
    for (int t = 0; t < t_max; ++t) {
      const RowVector mean = h.row(t) * dec_w + dec_b;
      double p = cfg.p_obs;
      if (cfg.missingness == Missingness::informative) {
        p = sigmoid(base_logit + cfg.informative_slope * h.row(t).norm());
      }
      for (int j = 0; j < m; ++j) {
        const double value = mean(j) + cfg.obs_noise_sd * normal(rng);
        if (unit(rng) < p) ds.entries.push_back(Entry{i, j, t, value});
      }
    }
  }
  std::sort(ds.entries.begin(), ds.entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.patient, a.feature, a.bin) < std::tie(b.patient, b.feature, b.bin);
  });

  const Vector scores = oracle_scores(gt);
  ds.labels.resize(n);
  constexpr int kMaxAttempts = 10;
  bool both = false;
  for (int attempt = 0; attempt < kMaxAttempts && !both; ++attempt) {
    result.label_attempts = attempt + 1;
    const auto stream = derive_seed(cfg.seed, kLabelStream, static_cast<std::uint64_t>(attempt));
    for (int i = 0; i < n; ++i) {
      std::mt19937_64 rng(derive_seed(stream, static_cast<std::uint64_t>(i)));
      ds.labels(i) = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < scores(i) ? 1 : 0;
    }
    const int pos = ds.labels.sum();
    both = pos > 0 && pos < n;
  }
  if (!both) throw ConfigError("synth: sampled labels contain a single class after 10 attempts");

  const int pw = digits(n), fw = digits(m), cw = digits(k);
  for (int i = 0; i < n; ++i) ds.patient_ids.push_back(padded('p', i, pw));
  for (int j = 0; j < m; ++j) ds.feature_ids.push_back(padded('f', j, fw));
  for (int c = 0; c < k; ++c) ds.covariate_names.push_back(padded('x', c, cw));
  ds.split.assign(static_cast<std::size_t>(n), Split::unassigned);
  if (ds.entries.empty()) throw ConfigError("synth: no cell was observed; raise p_obs or the dimensions");
  ds = split(std::move(ds), cfg.fractions, cfg.seed);
  ds.validate();
  return result;
}

Vector oracle_scores(const GroundTruth& gt) {
  const Matrix& w = gt.params.value("cls.W");
  const double b = gt.params.value("cls.b")(0, 0);
  Vector scores(static_cast<Eigen::Index>(gt.latents.size()));
  for (std::size_t i = 0; i < gt.latents.size(); ++i) {
    const Matrix& h = gt.latents[i];
    scores(static_cast<Eigen::Index>(i)) = sigmoid((h.row(h.rows() - 1) * w)(0, 0) + b);
  }
  return scores;
}

void write_ground_truth(std::ostream& out, const GroundTruth& gt) {
  out << container::kGroundTruthTag << '\n';
  const Eigen::Index rows = gt.latents.empty() ? 0 : gt.latents.front().rows();
  const Eigen::Index cols = gt.latents.empty() ? 0 : gt.latents.front().cols();
  ndiff::write_params(out, gt.params);
  out << "latents " << gt.latents.size() << ' ' << rows << ' ' << cols << '\n';
  for (const auto& h : gt.latents) container::write_matrix(out, h);
}

GroundTruth read_ground_truth(std::istream& in, const std::string& source) {
  container::Reader r(in, source);
  r.expect_tag(container::kGroundTruthTag);
  GroundTruth gt;
  gt.params = ndiff::read_params(r);
  const auto args = r.section("latents", 3);
  const auto n = r.int_arg(args, 0), rows = r.int_arg(args, 1), cols = r.int_arg(args, 2);
  if (n < 0 || rows < 0 || cols < 0) r.fail("invalid latent dimensions");
  for (long long i = 0; i < n; ++i) gt.latents.push_back(r.matrix(rows, cols));
  return gt;
}

}  // namespace trajcast
