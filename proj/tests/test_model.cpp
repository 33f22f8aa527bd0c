#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "trajcast/model.hpp"
#include "trajcast/synthgen.hpp"

using namespace trajcast;

namespace {

TensorDataset small_dataset(int n, int m, int t, std::uint64_t seed, double p_obs = 0.4) {
  SynthConfig cfg;
  cfg.n_patients = std::max(n, 40);  // enough for a three-way split
  cfg.n_features = m;
  cfg.n_bins = t;
  cfg.n_covariates = 3;
  cfg.latent_dim = 2;
  cfg.p_obs = p_obs;
  cfg.seed = seed;
  return sample_dataset(cfg).dataset;
}

// The first n patients (all when n < 0) as one normalized batch.
SequenceBatch full_batch(const TensorDataset& ds, int n = -1) {
  const TensorDataset norm = normalize(ds, compute_norm_stats(ds));
  const Cohort cohort(norm);
  std::vector<int> idx(static_cast<std::size_t>(n < 0 ? ds.n_patients : n));
  std::iota(idx.begin(), idx.end(), 0);
  return cohort.batch(idx);
}

ModelDims dims_for(const TensorDataset& ds, int latent) {
  return ModelDims{static_cast<int>(ds.n_covariates()), ds.n_features, ds.n_bins, latent};
}

// Worst relative error over coordinates whose gradient clears the
// central-difference roundoff floor, and worst absolute error elsewhere.
struct GradAgreement {
  double rel = 0.0;
  double abs_small = 0.0;
};

GradAgreement data_grad_check(Architecture arch, double gamma, double lambda) {
  const TensorDataset ds = small_dataset(8, 3, 5, 17);
  const SequenceBatch batch = full_batch(ds, 8);
  ndiff::ParamStore params = init_params(arch, dims_for(ds, 4), 99);
  const double eps = 1e-5;
  params.zero_grad();
  const double f0 = loss(params, batch, arch, gamma, lambda).total;
  const Vector analytic = params.flat_grad();
  const Vector base = params.flatten();
  const double floor = 1e3 * std::numeric_limits<double>::epsilon() * std::abs(f0) / eps;
  GradAgreement out;
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Vector probe = base;
    probe(i) = base(i) + eps;
    params.unflatten(probe);
    const double up = loss(params, batch, arch, gamma, lambda, false).total;
    probe(i) = base(i) - eps;
    params.unflatten(probe);
    const double down = loss(params, batch, arch, gamma, lambda, false).total;
    const double a = analytic(i), n = (up - down) / (2 * eps);
    if (std::abs(a) > floor) {
      out.rel = std::max(out.rel, std::abs(a - n) / (std::abs(a) + std::abs(n)));
    } else {
      out.abs_small = std::max(out.abs_small, std::abs(a - n));
    }
  }
  params.unflatten(base);
  return out;
}

}  // namespace

TEST_CASE("gradients match central differences on the reference fixture") {
  for (const auto& c : check_gradients(4, 3, 5, 8, 0, 1e-5)) {
    CAPTURE(to_string(c.arch));
    CAPTURE(c.gamma);
    CAPTURE(c.result.worst_name);
    CHECK(c.result.max_rel_error < 1e-4);
  }
}

TEST_CASE("gradients match central differences on synthetic data") {
  for (double gamma : {0.0, 0.05, 1.0}) {
    CAPTURE(gamma);
    for (Architecture arch : {Architecture::generative, Architecture::baseline}) {
      CAPTURE(to_string(arch));
      const GradAgreement g = data_grad_check(arch, gamma, 1e-3);
      CHECK(g.rel < 1e-4);
      CHECK(g.abs_small < 1e-9);
    }
  }
}

TEST_CASE("parameter names and shapes") {
  const ModelDims d{3, 2, 4, 5};
  const auto gen = init_params(Architecture::generative, d, 1);
  const auto base = init_params(Architecture::baseline, d, 1);
  CHECK(gen.contains("dec.W"));
  CHECK_FALSE(base.contains("dec.W"));
  CHECK(gen.value("gru.W_z").rows() == 4);  // 2M inputs
  CHECK(base.value("gru.W_z").rows() == 6);  // 3M inputs
  CHECK(gen.value("gru.U_h").rows() == 5);
  CHECK(gen.value("beta.W").rows() == 3);
  CHECK(gen.value("dec.W").cols() == 2);
  CHECK(infer_dims(gen, Architecture::generative, 4) == d);
  for (const auto& [name, e] : gen.entries()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(e.value.rows()));
    CHECK(e.value.cwiseAbs().maxCoeff() <= bound);
  }
  CHECK(is_weight("gru.U_r"));
  CHECK(is_weight("dec.W"));
  CHECK_FALSE(is_weight("gru.b_r"));
  CHECK_FALSE(is_weight("cls.b"));
}

TEST_CASE("imputation is exactly the decoded previous latent") {
  const TensorDataset ds = small_dataset(6, 2, 3, 5);
  const SequenceBatch batch = full_batch(ds, 6);
  const auto params = init_params(Architecture::generative, dims_for(ds, 3), 4);
  const ForwardResult fr = forward(params, batch);
  const Matrix& W = params.value("dec.W");
  const Matrix& b = params.value("dec.b");
  const auto m = batch.masks[0].cols();
  for (std::size_t t = 0; t < batch.values.size(); ++t) {
    const Matrix decoded = (fr.latents[t] * W).rowwise() + b.row(0);
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        const double expect = batch.masks[t](i, j) > 0.5 ? batch.values[t](i, j) : decoded(i, j);
        CHECK(fr.inputs[t](i, j) == doctest::Approx(expect).epsilon(1e-14));
        CHECK(fr.inputs[t](i, m + j) == batch.masks[t](i, j));
      }
    }
  }
}

TEST_CASE("hand unroll for a patient with nothing observed") {
  // D = 2, M = 2, T = 3, one covariate.
  SequenceBatch batch;
  batch.covariates = (Matrix(1, 1) << 0.7).finished();
  batch.labels = Matrix::Ones(1, 1);
  for (int t = 0; t < 3; ++t) {
    batch.values.push_back(Matrix::Constant(1, 2, 123.0));
    batch.masks.push_back(Matrix::Zero(1, 2));
    batch.elapsed.push_back(Matrix::Zero(1, 2));
  }
  auto params = init_params(Architecture::generative, ModelDims{1, 2, 3, 2}, 21);
  const ForwardResult fr = forward(params, batch);

  auto sig = [](const Matrix& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); };
  auto row = [&](const Matrix& x, const char* w, const char* b) {
    return ((x * params.value(w)).rowwise() + params.value(b).row(0)).eval();
  };
  Matrix h = row(batch.covariates, "beta.W", "beta.b").array().tanh().matrix();
  CHECK((fr.latents[0] - h).cwiseAbs().maxCoeff() < 1e-14);
  for (int t = 0; t < 3; ++t) {
    const Matrix ytil = row(h, "dec.W", "dec.b");
    Matrix x(1, 4);
    x << ytil, Matrix::Zero(1, 2);
    const Matrix z = sig(x * params.value("gru.W_z") + h * params.value("gru.U_z") + params.value("gru.b_z"));
    const Matrix r = sig(x * params.value("gru.W_r") + h * params.value("gru.U_r") + params.value("gru.b_r"));
    const Matrix cand = (x * params.value("gru.W_h") + (r.cwiseProduct(h)) * params.value("gru.U_h") +
                         params.value("gru.b_h"))
                            .array()
                            .tanh()
                            .matrix();
    h = ((1.0 - z.array()) * h.array() + z.array() * cand.array()).matrix();
    CHECK((fr.inputs[static_cast<std::size_t>(t)] - x).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((fr.latents[static_cast<std::size_t>(t) + 1] - h).cwiseAbs().maxCoeff() < 1e-14);
  }
  const double p = 1.0 / (1.0 + std::exp(-(h * params.value("cls.W") + params.value("cls.b"))(0, 0)));
  CHECK(fr.probabilities(0) == doctest::Approx(p).epsilon(1e-14));

  // No observed cells: the reconstruction term contributes nothing.
  const LossTerms terms = loss(params, batch, Architecture::generative, 0.5, 0.0, false);
  CHECK(terms.reconstruction == 0.0);
  CHECK(terms.empty_reconstruction);
  CHECK(terms.total == doctest::Approx(0.5 * -std::log(p)).epsilon(1e-14));
}

TEST_CASE("unobserved values never influence loss or gradient") {
  const TensorDataset ds = small_dataset(10, 3, 4, 8);
  SequenceBatch batch = full_batch(ds);
  for (auto arch : {Architecture::generative, Architecture::baseline}) {
    auto params = init_params(arch, dims_for(ds, 4), 2);
    params.zero_grad();
    const double l0 = loss(params, batch, arch, 0.3, 1e-3).total;
    const Vector g0 = params.flat_grad();

    SequenceBatch mutated = batch;
    for (std::size_t t = 0; t < mutated.values.size(); ++t) {
      for (Eigen::Index i = 0; i < mutated.values[t].size(); ++i) {
        if (mutated.masks[t].data()[i] < 0.5) mutated.values[t].data()[i] = 1e6 * static_cast<double>(i + 1);
      }
    }
    params.zero_grad();
    const double l1 = loss(params, mutated, arch, 0.3, 1e-3).total;
    CHECK(l0 == l1);
    CHECK(g0 == params.flat_grad());
  }
}

TEST_CASE("gamma zero loss is cross entropy plus penalty") {
  const TensorDataset ds = small_dataset(12, 3, 4, 31);
  const SequenceBatch batch = full_batch(ds);
  auto params = init_params(Architecture::generative, dims_for(ds, 4), 6);
  const LossTerms t = loss(params, batch, Architecture::generative, 0.0, 1e-2, false);
  CHECK(t.total == doctest::Approx(t.cross_entropy + 1e-2 * t.penalty).epsilon(1e-14));

  double penalty = 0.0;
  for (const auto& [name, e] : params.entries())
    if (is_weight(name)) penalty += e.value.squaredNorm();
  CHECK(t.penalty == doctest::Approx(penalty).epsilon(1e-12));

  const ForwardResult fr = forward(params, batch);
  double bce = 0.0;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const double p = fr.probabilities(i);
    bce -= batch.labels(i, 0) > 0.5 ? std::log(p) : std::log(1.0 - p);
  }
  CHECK(t.cross_entropy == doctest::Approx(bce / static_cast<double>(batch.size())).epsilon(1e-12));
}

TEST_CASE("fully observed batch gives no decoder gradient without reconstruction or penalty") {
  const TensorDataset ds = small_dataset(6, 2, 3, 13, 1.0);
  const SequenceBatch batch = full_batch(ds, 6);
  REQUIRE(batch.observed_cells() == 6 * 2 * 3);
  auto params = init_params(Architecture::generative, dims_for(ds, 3), 3);
  params.zero_grad();
  loss(params, batch, Architecture::generative, 0.0, 0.0);
  CHECK(params.grad("dec.W").isZero(0.0));
  CHECK(params.grad("dec.b").isZero(0.0));
  CHECK_FALSE(params.grad("cls.W").isZero(0.0));
}

TEST_CASE("baseline ignores gamma") {
  const TensorDataset ds = small_dataset(10, 3, 4, 3);
  const SequenceBatch batch = full_batch(ds);
  auto params = init_params(Architecture::baseline, dims_for(ds, 4), 1);
  CHECK(loss(params, batch, Architecture::baseline, 0.0, 1e-3, false).total ==
        loss(params, batch, Architecture::baseline, 0.9, 1e-3, false).total);
}

TEST_CASE("baseline input carries elapsed time since last observation") {
  const TensorDataset ds = small_dataset(8, 2, 5, 4);
  const SequenceBatch batch = full_batch(ds, 8);
  const double T = 5.0;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      int last = -1;
      for (int t = 0; t < 5; ++t) {
        if (batch.masks[static_cast<std::size_t>(t)](i, j) > 0.5) last = t;
        const double expect = last < 0 ? (t + 1) / T : (t - last) / T;
        CHECK(batch.elapsed[static_cast<std::size_t>(t)](i, j) == doctest::Approx(expect));
      }
    }
  }
}

TEST_CASE("training is deterministic and serializes exactly") {
  const TensorDataset ds = small_dataset(60, 3, 5, 77);
  HyperParams hp;
  hp.latent_dim = 4;
  hp.epochs = 3;
  hp.batch_size = 16;
  hp.seed = 5;
  for (auto arch : {Architecture::generative, Architecture::baseline}) {
    const TrainedModel a = train(ds, hp, arch);
    const TrainedModel b = train(ds, hp, arch);
    CHECK(a.params.flatten() == b.params.flatten());
    CHECK(a.loss_trace == b.loss_trace);
    CHECK(a.loss_trace.size() == 3);

    std::stringstream ss;
    write_model(ss, a);
    const TrainedModel c = read_model(ss);
    CHECK(c.params.flatten() == a.params.flatten());
    CHECK(c.hyper == a.hyper);
    CHECK(c.arch == arch);
    CHECK(c.dims == a.dims);
    CHECK(c.val_auc == a.val_auc);
    CHECK(predict(c, ds, Split::test) == predict(a, ds, Split::test));

    std::stringstream again;
    write_model(again, c);
    CHECK(again.str() == ss.str());
  }
  const TrainedModel a = train(ds, hp, Architecture::generative);
  hp.seed = 6;
  CHECK(train(ds, hp, Architecture::generative).params.flatten() != a.params.flatten());
}

TEST_CASE("training loss decreases on a learnable problem") {
  const TensorDataset ds = small_dataset(200, 3, 6, 12);
  HyperParams hp;
  hp.latent_dim = 8;
  hp.epochs = 15;
  hp.learning_rate = 1e-2;
  hp.batch_size = 32;
  const TrainedModel m = train(ds, hp, Architecture::generative);
  CHECK(m.loss_trace.back() < m.loss_trace.front());
}

TEST_CASE("hyperparameter validation") {
  HyperParams hp;
  hp.gamma = 1.5;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = HyperParams{};
  hp.lambda = -1.0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = HyperParams{};
  hp.latent_dim = 0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  hp = HyperParams{};
  hp.batch_size = 0;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
  CHECK_NOTHROW(HyperParams{}.validate());
}

TEST_CASE("prediction rejects a dataset with different features") {
  const TensorDataset ds = small_dataset(40, 3, 4, 1);
  HyperParams hp;
  hp.latent_dim = 3;
  hp.epochs = 1;
  const TrainedModel m = train(ds, hp, Architecture::generative);
  const TensorDataset other = small_dataset(40, 2, 4, 1);
  CHECK_THROWS_AS(predict(m, other, Split::test), ConfigError);
}

TEST_CASE("model container rejects a wrong tag") {
  std::stringstream ss("trajcast-ds/1\n");
  CHECK_THROWS_AS(read_model(ss), FormatError);
}
