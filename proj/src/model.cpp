#include "trajcast/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <tuple>

#include "trajcast/eval.hpp"
#include "trajcast/ndiff_io.hpp"

namespace trajcast {

using ndiff::Tape;
using ndiff::Var;

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr Eigen::Index kPredictChunk = 256;

void check_finite(const Var& v, const char* what, int step) {
  if (!v.value().allFinite()) {
    throw NumericalError(std::string("non-finite ") + what + " at time step " + std::to_string(step));
  }
}

// Values where observed, zero elsewhere; unobserved entries are not read.
Matrix observed_or_zero(const Matrix& mask, const Matrix& values) {
  Matrix out = Matrix::Zero(mask.rows(), mask.cols());
  for (Eigen::Index c = 0; c < mask.cols(); ++c)
    for (Eigen::Index r = 0; r < mask.rows(); ++r)
      if (mask(r, c) != 0.0) out(r, c) = values(r, c);
  return out;
}

Var affine(Tape& tape, ndiff::ParamStore& p, Var x, const std::string& layer) {
  return ndiff::add_row(ndiff::matmul(x, tape.param(p, layer + ".W")), tape.param(p, layer + ".b"));
}

// Standard GRU cell; the reset gate acts on h before U_h.
Var gru_step(Tape& tape, ndiff::ParamStore& p, Var h, Var x) {
  auto gate = [&](const char* tag, Var hh) {
    const std::string s(tag);
    return ndiff::add_row(ndiff::add(ndiff::matmul(x, tape.param(p, "gru.W_" + s)),
                                     ndiff::matmul(hh, tape.param(p, "gru.U_" + s))),
                          tape.param(p, "gru.b_" + s));
  };
  const Var z = ndiff::sigmoid(gate("z", h));
  const Var r = ndiff::sigmoid(gate("r", h));
  const Var candidate = ndiff::tanh(gate("h", ndiff::mul(r, h)));
  return ndiff::add(ndiff::mul(ndiff::one_minus(z), h), ndiff::mul(z, candidate));
}

struct Unrolled {
  std::vector<Var> latents;
  std::vector<Var> inputs;
  std::vector<Var> reconstruction;
  Var probabilities;
  std::optional<Var> squared_error_sum;  // generative only
  Eigen::Index observed = 0;
};

void check_batch(const SequenceBatch& batch, const ModelDims& dims) {
  const auto t_max = static_cast<std::size_t>(dims.bins);
  if (batch.size() == 0) throw ConfigError("empty batch");
  if (batch.covariates.cols() != dims.covariates) {
    throw ConfigError("batch has " + std::to_string(batch.covariates.cols()) + " covariates, model expects " +
                      std::to_string(dims.covariates));
  }
  if (batch.values.size() != t_max || batch.masks.size() != t_max) throw ConfigError("batch has wrong number of bins");
  for (std::size_t t = 0; t < t_max; ++t) {
    if (batch.values[t].cols() != dims.features || batch.masks[t].cols() != dims.features ||
        batch.values[t].rows() != batch.size() || batch.masks[t].rows() != batch.size()) {
      throw ConfigError("batch step " + std::to_string(t) + " has the wrong shape");
    }
  }
}

Unrolled unroll(Tape& tape, ndiff::ParamStore& p, const SequenceBatch& batch, Architecture arch) {
  const int bins = static_cast<int>(batch.values.size());
  const ModelDims dims = infer_dims(p, arch, bins);
  check_batch(batch, dims);

  Unrolled u;
  Var h = ndiff::tanh(affine(tape, p, tape.constant(batch.covariates), "beta"));
  check_finite(h, "initial latent", 0);
  u.latents.push_back(h);

  if (arch == Architecture::generative) {
    Var decoded = affine(tape, p, h, "dec");
    for (int t = 0; t < bins; ++t) {
      const auto& mask = batch.masks[static_cast<std::size_t>(t)];
      const auto& values = batch.values[static_cast<std::size_t>(t)];
      const Var y = ndiff::where(mask, values, decoded);
      const Var input = ndiff::concat_cols(y, tape.constant(mask));
      h = gru_step(tape, p, h, input);
      check_finite(h, "latent", t + 1);
      decoded = affine(tape, p, h, "dec");
      check_finite(decoded, "reconstruction", t + 1);

      const Var diff = ndiff::sub(tape.constant(observed_or_zero(mask, values)), decoded);
      const Var term = ndiff::sum_over(mask, ndiff::mul(diff, diff));
      u.squared_error_sum = u.squared_error_sum ? ndiff::add(*u.squared_error_sum, term) : term;
      u.observed += (mask.array() != 0.0).count();

      u.inputs.push_back(input);
      u.latents.push_back(h);
      u.reconstruction.push_back(decoded);
    }
  } else {
    if (batch.elapsed.size() != static_cast<std::size_t>(bins)) throw ConfigError("baseline batch lacks elapsed times");
    for (int t = 0; t < bins; ++t) {
      const auto& mask = batch.masks[static_cast<std::size_t>(t)];
      Matrix x(batch.size(), 3 * dims.features);
      x << observed_or_zero(mask, batch.values[static_cast<std::size_t>(t)]), mask,
          batch.elapsed[static_cast<std::size_t>(t)];
      const Var input = tape.constant(std::move(x));
      h = gru_step(tape, p, h, input);
      check_finite(h, "latent", t + 1);
      u.inputs.push_back(input);
      u.latents.push_back(h);
    }
  }
  u.probabilities = ndiff::sigmoid(affine(tape, p, h, "cls"));
  check_finite(u.probabilities, "probability", bins);
  return u;
}

ForwardResult collect(const Unrolled& u) {
  ForwardResult r;
  for (const auto& v : u.latents) r.latents.push_back(v.value());
  for (const auto& v : u.inputs) r.inputs.push_back(v.value());
  for (const auto& v : u.reconstruction) r.reconstruction.push_back(v.value());
  r.probabilities = u.probabilities.value().col(0);
  return r;
}

class Adam {
 public:
  Adam(Eigen::Index n, double lr) : lr_(lr), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

  void step(ndiff::ParamStore& params, const Vector& grad) {
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    Vector p = params.flatten();
    p.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEpsilon);
    params.unflatten(p);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;
  double lr_;
  int t_ = 0;
  Vector m_, v_;
};

}  // namespace

const char* to_string(Architecture a) { return a == Architecture::generative ? "generative" : "baseline"; }

Architecture parse_architecture(const std::string& s) {
  if (s == "generative") return Architecture::generative;
  if (s == "baseline") return Architecture::baseline;
  throw ConfigError("unknown architecture '" + s + "' (expected generative or baseline)");
}

void HyperParams::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be > 0");
}

Eigen::Index SequenceBatch::observed_cells() const {
  Eigen::Index n = 0;
  for (const auto& m : masks) n += (m.array() != 0.0).count();
  return n;
}

Cohort::Cohort(const TensorDataset& ds) : n_bins_(ds.n_bins), n_features_(ds.n_features) {
  covariates_ = ds.covariates;
  labels_ = ds.labels;
  const auto n = static_cast<std::size_t>(ds.n_patients);
  values_.assign(n, Matrix::Zero(n_bins_, n_features_));
  masks_.assign(n, Matrix::Zero(n_bins_, n_features_));
  elapsed_.assign(n, Matrix::Zero(n_bins_, n_features_));
  for (const auto& e : ds.entries) {
    values_[static_cast<std::size_t>(e.patient)](e.bin, e.feature) = e.value;
    masks_[static_cast<std::size_t>(e.patient)](e.bin, e.feature) = 1.0;
  }
  const double scale = 1.0 / n_bins_;
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < n_features_; ++j) {
      int last = -1;
      for (int t = 0; t < n_bins_; ++t) {
        if (masks_[i](t, j) != 0.0) last = t;
        elapsed_[i](t, j) = last < 0 ? (t + 1) * scale : (t - last) * scale;
      }
    }
  }
}

SequenceBatch Cohort::batch(std::span<const int> patients) const {
  const auto b = static_cast<Eigen::Index>(patients.size());
  SequenceBatch out;
  out.covariates.resize(b, covariates_.cols());
  out.labels.resize(b, 1);
  out.values.assign(static_cast<std::size_t>(n_bins_), Matrix(b, n_features_));
  out.masks.assign(static_cast<std::size_t>(n_bins_), Matrix(b, n_features_));
  out.elapsed.assign(static_cast<std::size_t>(n_bins_), Matrix(b, n_features_));
  for (Eigen::Index r = 0; r < b; ++r) {
    const int i = patients[static_cast<std::size_t>(r)];
    if (i < 0 || i >= labels_.size()) throw ConfigError("patient index " + std::to_string(i) + " out of range");
    const auto ui = static_cast<std::size_t>(i);
    out.covariates.row(r) = covariates_.row(i);
    out.labels(r, 0) = labels_(i);
    for (int t = 0; t < n_bins_; ++t) {
      const auto ut = static_cast<std::size_t>(t);
      out.values[ut].row(r) = values_[ui].row(t);
      out.masks[ut].row(r) = masks_[ui].row(t);
      out.elapsed[ut].row(r) = elapsed_[ui].row(t);
    }
  }
  return out;
}

bool is_weight(const std::string& name) {
  const auto dot = name.rfind('.');
  const char c = dot == std::string::npos ? name.front() : name[dot + 1];
  return c == 'W' || c == 'U';
}

ndiff::ParamStore init_params(Architecture arch, const ModelDims& dims, std::uint64_t seed) {
  if (dims.features <= 0 || dims.latent <= 0 || dims.covariates < 0 || dims.bins <= 0) {
    throw ConfigError("init_params: invalid model dimensions");
  }
  const int d = dims.latent, in = dims.input_width(arch), m = dims.features;
  const int k = std::max(dims.covariates, 1);
  struct Spec {
    const char* name;
    int rows, cols, fan_in;
  };
  std::vector<Spec> specs = {
      {"beta.W", dims.covariates, d, k}, {"beta.b", 1, d, k},   {"cls.W", d, 1, d},      {"cls.b", 1, 1, d},
      {"gru.U_h", d, d, d},               {"gru.U_r", d, d, d},  {"gru.U_z", d, d, d},    {"gru.W_h", in, d, in},
      {"gru.W_r", in, d, in},             {"gru.W_z", in, d, in}, {"gru.b_h", 1, d, d},   {"gru.b_r", 1, d, d},
      {"gru.b_z", 1, d, d},
  };
  if (arch == Architecture::generative) {
    specs.push_back({"dec.W", d, m, d});
    specs.push_back({"dec.b", 1, m, d});
  }
  std::sort(specs.begin(), specs.end(), [](const Spec& a, const Spec& b) { return std::string(a.name) < b.name; });

  std::mt19937_64 rng(seed);
  ndiff::ParamStore p;
  for (const auto& s : specs) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(s.rows, s.cols);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
    p.add(s.name, std::move(w));
  }
  return p;
}

ModelDims infer_dims(const ndiff::ParamStore& params, Architecture arch, int bins) {
  ModelDims dims;
  dims.latent = static_cast<int>(params.value("gru.U_z").rows());
  dims.covariates = static_cast<int>(params.value("beta.W").rows());
  const auto width = params.value("gru.W_z").rows();
  const int per_feature = arch == Architecture::generative ? 2 : 3;
  if (width % per_feature != 0) throw ConfigError("parameter shapes do not match the architecture");
  dims.features = static_cast<int>(width / per_feature);
  dims.bins = bins;
  if (arch == Architecture::generative && !params.contains("dec.W")) {
    throw ConfigError("generative parameters lack a decoder");
  }
  return dims;
}

ForwardResult forward(const ndiff::ParamStore& params, const SequenceBatch& batch) {
  ndiff::ParamStore scratch = params;
  Tape tape;
  return collect(unroll(tape, scratch, batch, Architecture::generative));
}

ForwardResult forward_baseline(const ndiff::ParamStore& params, const SequenceBatch& batch) {
  ndiff::ParamStore scratch = params;
  Tape tape;
  return collect(unroll(tape, scratch, batch, Architecture::baseline));
}

LossTerms loss(ndiff::ParamStore& params, const SequenceBatch& batch, Architecture arch, double gamma, double lambda,
               bool with_gradient) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("loss: gamma must lie in [0, 1]");
  if (!(lambda >= 0.0)) throw ConfigError("loss: lambda must be >= 0");
  if (arch == Architecture::baseline) gamma = 0.0;

  Tape tape;
  const Unrolled u = unroll(tape, params, batch, arch);
  LossTerms terms;
  terms.observed_cells = u.observed;

  const Var bce = ndiff::binary_cross_entropy(u.probabilities, batch.labels);
  terms.cross_entropy = bce.scalar();
  Var total = gamma < 1.0 ? ndiff::scale(bce, 1.0 - gamma) : ndiff::scale(bce, 0.0);

  if (u.squared_error_sum) {
    const Var mse = ndiff::scale(*u.squared_error_sum, u.observed > 0 ? 1.0 / static_cast<double>(u.observed) : 0.0);
    terms.reconstruction = mse.scalar();
    if (gamma > 0.0) {
      terms.empty_reconstruction = u.observed == 0;
      total = ndiff::add(total, ndiff::scale(mse, gamma));
    }
  }

  if (lambda > 0.0) {
    std::optional<Var> penalty;
    for (const auto& name : params.names()) {
      if (!is_weight(name)) continue;
      const Var sq = ndiff::sum_squares(tape.param(params, name));
      penalty = penalty ? ndiff::add(*penalty, sq) : sq;
    }
    if (penalty) {
      terms.penalty = penalty->scalar();
      total = ndiff::add(total, ndiff::scale(*penalty, lambda));
    }
  }
  terms.total = total.scalar();
  if (with_gradient) tape.backward(total);
  return terms;
}

TrainedModel train(const TensorDataset& ds, const HyperParams& hp, Architecture arch) {
  hp.validate();
  ds.validate();
  const auto train_idx = ds.patients_in(Split::train);
  const auto val_idx = ds.patients_in(Split::val);
  if (train_idx.empty() || val_idx.empty()) throw ConfigError("train: train and val splits must be nonempty");
  const auto train_pos = std::count_if(train_idx.begin(), train_idx.end(), [&](int i) { return ds.labels(i) == 1; });
  if (train_pos == 0 || train_pos == static_cast<long>(train_idx.size())) {
    throw ConfigError("train: the train split must contain both classes");
  }

  TrainedModel model;
  model.arch = arch;
  model.hyper = hp;
  model.feature_ids = ds.feature_ids;
  model.dims = ModelDims{ds.n_covariates(), ds.n_features, ds.n_bins, hp.latent_dim};
  model.norm = compute_norm_stats(ds);
  const Cohort cohort(normalize(ds, model.norm));
  model.params = init_params(arch, model.dims, derive_seed(hp.seed, kInitStream));

  const double gamma = arch == Architecture::generative ? hp.gamma : 0.0;
  Adam adam(model.params.size(), hp.learning_rate);
  std::mt19937_64 rng(derive_seed(hp.seed, kShuffleStream));
  std::vector<int> order = train_idx;
  const auto batch_size = static_cast<std::size_t>(hp.batch_size);

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t first = 0; first < order.size(); first += batch_size) {
      const std::size_t count = std::min(batch_size, order.size() - first);
      const SequenceBatch batch = cohort.batch(std::span<const int>(order).subspan(first, count));
      model.params.zero_grad();
      LossTerms terms;
      try {
        terms = loss(model.params, batch, arch, gamma, hp.lambda);
      } catch (const NumericalError& e) {
        throw NumericalError("train: epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) + ": " +
                             e.what());
      }
      Vector grad = model.params.flat_grad();
      if (!std::isfinite(terms.total) || !grad.allFinite()) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(batches));
      }
      if (terms.empty_reconstruction) ++model.empty_reconstruction_batches;
      if (hp.grad_clip_norm) {
        const double norm = grad.norm();
        if (norm > *hp.grad_clip_norm) grad *= *hp.grad_clip_norm / norm;
      }
      adam.step(model.params, grad);
      sum += terms.total;
      ++batches;
    }
    model.loss_trace.push_back(sum / batches);
  }
  model.params.zero_grad();

  IntVector val_labels(static_cast<Eigen::Index>(val_idx.size()));
  for (std::size_t r = 0; r < val_idx.size(); ++r) val_labels(static_cast<Eigen::Index>(r)) = ds.labels(val_idx[r]);
  model.val_auc = auc(predict_patients(model, ds, val_idx), val_labels);
  return model;
}

Vector predict_patients(const TrainedModel& model, const TensorDataset& ds, std::span<const int> patients) {
  if (ds.n_features != model.dims.features || ds.n_bins != model.dims.bins ||
      ds.n_covariates() != model.dims.covariates) {
    throw ConfigError("predict: dataset dimensions (M=" + std::to_string(ds.n_features) + ", T=" +
                      std::to_string(ds.n_bins) + ", K=" + std::to_string(ds.n_covariates()) +
                      ") do not match the model (M=" + std::to_string(model.dims.features) + ", T=" +
                      std::to_string(model.dims.bins) + ", K=" + std::to_string(model.dims.covariates) + ")");
  }
  if (!model.feature_ids.empty() && model.feature_ids != ds.feature_ids) {
    throw ConfigError("predict: dataset feature ids differ from the model's");
  }
  const Cohort cohort(normalize(ds, model.norm));
  Vector scores(static_cast<Eigen::Index>(patients.size()));
  for (std::size_t first = 0; first < patients.size(); first += kPredictChunk) {
    const std::size_t count = std::min<std::size_t>(kPredictChunk, patients.size() - first);
    const SequenceBatch batch = cohort.batch(patients.subspan(first, count));
    const ForwardResult r = model.arch == Architecture::generative ? forward(model.params, batch)
                                                                   : forward_baseline(model.params, batch);
    scores.segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(count)) = r.probabilities;
  }
  return scores;
}

Vector predict(const TrainedModel& model, const TensorDataset& ds, Split split) {
  const auto idx = ds.patients_in(split);
  return predict_patients(model, ds, idx);
}

void write_model(std::ostream& out, const TrainedModel& model) {
  const auto& hp = model.hyper;
  out << container::kModelTag << '\n';
  out << "arch " << to_string(model.arch) << '\n';
  out << "dims " << model.dims.covariates << ' ' << model.dims.features << ' ' << model.dims.bins << ' '
      << model.dims.latent << '\n';
  out << "hyper " << format_double(hp.gamma) << ' ' << format_double(hp.lambda) << ' ' << hp.latent_dim << ' '
      << format_double(hp.learning_rate) << ' ' << hp.epochs << ' ' << hp.batch_size << ' '
      << format_double(hp.grad_clip_norm.value_or(0.0)) << ' ' << hp.seed << '\n';
  out << "val_auc " << format_double(model.val_auc) << '\n';
  out << "empty_reconstruction_batches " << model.empty_reconstruction_batches << '\n';
  out << "features " << model.feature_ids.size() << '\n';
  for (const auto& f : model.feature_ids) out << f << '\n';
  out << "norm\n";
  container::write_row(out, model.norm.feature_mean.transpose());
  container::write_row(out, model.norm.feature_std.transpose());
  container::write_row(out, model.norm.covariate_mean.transpose());
  container::write_row(out, model.norm.covariate_std.transpose());
  out << "loss_trace " << model.loss_trace.size() << '\n';
  for (double v : model.loss_trace) out << format_double(v) << '\n';
  ndiff::write_params(out, model.params);
}

TrainedModel read_model(container::Reader& r) {
  r.expect_tag(container::kModelTag);
  TrainedModel m;
  try {
    m.arch = parse_architecture(r.section("arch", 1)[0]);
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  const auto dims = r.section("dims", 4);
  m.dims = ModelDims{static_cast<int>(r.int_arg(dims, 0)), static_cast<int>(r.int_arg(dims, 1)),
                     static_cast<int>(r.int_arg(dims, 2)), static_cast<int>(r.int_arg(dims, 3))};
  if (m.dims.covariates < 0 || m.dims.features <= 0 || m.dims.bins <= 0 || m.dims.latent <= 0) r.fail("invalid dims");
  const auto hp = r.section("hyper", 8);
  m.hyper.gamma = r.real_arg(hp, 0);
  m.hyper.lambda = r.real_arg(hp, 1);
  m.hyper.latent_dim = static_cast<int>(r.int_arg(hp, 2));
  m.hyper.learning_rate = r.real_arg(hp, 3);
  m.hyper.epochs = static_cast<int>(r.int_arg(hp, 4));
  m.hyper.batch_size = static_cast<int>(r.int_arg(hp, 5));
  const double clip = r.real_arg(hp, 6);
  m.hyper.grad_clip_norm = clip > 0.0 ? std::optional<double>(clip) : std::nullopt;
  m.hyper.seed = std::stoull(hp[7]);
  m.val_auc = r.real_arg(r.section("val_auc", 1), 0);
  m.empty_reconstruction_batches = static_cast<int>(r.int_arg(r.section("empty_reconstruction_batches", 1), 0));
  const auto nf = r.int_arg(r.section("features", 1), 0);
  for (long long j = 0; j < nf; ++j) m.feature_ids.push_back(r.line());
  r.section("norm", 0);
  auto vec = [&](Eigen::Index n) {
    const auto v = r.reals(static_cast<std::size_t>(n));
    return Vector(Eigen::Map<const Vector>(v.data(), n));
  };
  m.norm.feature_mean = vec(m.dims.features);
  m.norm.feature_std = vec(m.dims.features);
  m.norm.covariate_mean = vec(m.dims.covariates);
  m.norm.covariate_std = vec(m.dims.covariates);
  const auto nl = r.int_arg(r.section("loss_trace", 1), 0);
  for (long long e = 0; e < nl; ++e) m.loss_trace.push_back(r.reals(1)[0]);
  m.params = ndiff::read_params(r);
  try {
    if (!(infer_dims(m.params, m.arch, m.dims.bins) == m.dims)) r.fail("parameter shapes disagree with dims");
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  return m;
}

TrainedModel read_model(std::istream& in, const std::string& source) {
  container::Reader r(in, source);
  return read_model(r);
}

void save_model(const std::string& path, const TrainedModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_model(out, model);
}

TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_model(in, path);
}

std::vector<GradCheckCase> check_gradients(int latent, int features, int bins, int patients, std::uint64_t seed,
                                           double eps) {
  if (latent < 1 || features < 1 || bins < 1 || patients < 2) {
    throw ConfigError("gradient check needs positive dimensions and at least two patients");
  }
  constexpr int kCovariates = 3;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution observed(0.5);

  TensorDataset ds;
  ds.n_patients = patients;
  ds.n_features = features;
  ds.n_bins = bins;
  ds.covariates.resize(patients, kCovariates);
  ds.labels.resize(patients);
  for (int i = 0; i < patients; ++i) {
    for (int c = 0; c < kCovariates; ++c) ds.covariates(i, c) = normal(rng);
    ds.labels(i) = i % 2;
    for (int j = 0; j < features; ++j)
      for (int t = 0; t < bins; ++t)
        if (observed(rng)) ds.entries.push_back(Entry{i, j, t, normal(rng)});
  }
  if (ds.entries.empty()) ds.entries.push_back(Entry{0, 0, 0, normal(rng)});
  std::sort(ds.entries.begin(), ds.entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.patient, a.feature, a.bin) < std::tie(b.patient, b.feature, b.bin);
  });
  const Cohort cohort(ds);
  std::vector<int> all(static_cast<std::size_t>(patients));
  std::iota(all.begin(), all.end(), 0);
  const SequenceBatch batch = cohort.batch(all);

  std::vector<GradCheckCase> out;
  for (Architecture arch : {Architecture::generative, Architecture::baseline}) {
    for (double gamma : {0.0, 0.05, 1.0}) {
      ndiff::ParamStore params = init_params(arch, ModelDims{kCovariates, features, bins, latent}, derive_seed(seed, 1));
      auto fn = [&](ndiff::ParamStore& p) { return loss(p, batch, arch, gamma, 1e-3, true).total; };
      out.push_back(GradCheckCase{arch, gamma, ndiff::grad_check(fn, params, eps)});
    }
  }
  return out;
}

}  // namespace trajcast
