#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "trajcast/container.hpp"
#include "trajcast/data.hpp"
#include "trajcast/ensemble.hpp"
#include "trajcast/eval.hpp"
#include "trajcast/model.hpp"
#include "trajcast/report.hpp"
#include "trajcast/synthgen.hpp"

using namespace trajcast;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  return out;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void check_unit_interval(const char* flag, double v, bool allow_zero) {
  const bool ok = (allow_zero ? v >= 0.0 : v > 0.0) && v <= 1.0;
  if (!ok) {
    throw ConfigError(std::string(flag) + " must lie in " + (allow_zero ? "[0, 1]" : "(0, 1]") + ", got " +
                      format_double(v));
  }
}

struct SplitFlags {
  double train = 0.70, val = 0.15, test = 0.15;

  void add(CLI::App* app) {
    app->add_option("--train-frac", train, "train fraction")->capture_default_str();
    app->add_option("--val-frac", val, "validation fraction")->capture_default_str();
    app->add_option("--test-frac", test, "test fraction")->capture_default_str();
  }
  SplitFractions get() const { return SplitFractions{train, val, test}; }
};

struct HyperFlags {
  HyperParams hp;
  double clip = 5.0;

  void add(CLI::App* app, bool with_mixing) {
    if (with_mixing) {
      app->add_option("--gamma", hp.gamma, "reconstruction weight in [0, 1]")->capture_default_str();
      app->add_option("--lambda", hp.lambda, "L2 weight penalty")->capture_default_str();
      app->add_option("--seed", hp.seed, "training seed")->capture_default_str();
    }
    app->add_option("--latent-dim", hp.latent_dim, "latent dimension D")->capture_default_str();
    app->add_option("--lr", hp.learning_rate, "learning rate")->capture_default_str();
    app->add_option("--epochs", hp.epochs, "training epochs")->capture_default_str();
    app->add_option("--batch-size", hp.batch_size, "mini-batch size")->capture_default_str();
    app->add_option("--clip", clip, "global gradient-norm clip; 0 disables")->capture_default_str();
  }
  HyperParams get() const {
    HyperParams out = hp;
    if (clip < 0.0) throw ConfigError("--clip must be >= 0");
    out.grad_clip_norm = clip > 0.0 ? std::optional<double>(clip) : std::nullopt;
    return out;
  }
};

// ---- synth

struct SynthCmd {
  SynthConfig cfg;
  double init_noise = 0.5;
  double trans_noise = 0.001;
  std::string missingness = "mcar";
  SplitFlags fractions;
  std::string out, truth;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("synth", "sample a synthetic dataset with known ground truth");
    app->add_option("--n", cfg.n_patients, "patients N")->capture_default_str();
    app->add_option("--m", cfg.n_features, "features M")->capture_default_str();
    app->add_option("--t", cfg.n_bins, "time bins T")->capture_default_str();
    app->add_option("--k", cfg.n_covariates, "covariates K")->capture_default_str();
    app->add_option("--d", cfg.latent_dim, "true latent dimension")->capture_default_str();
    app->add_option("--sigma", cfg.obs_noise_sd, "observation noise sd")->capture_default_str();
    app->add_option("--init-noise", init_noise, "initial-state noise variance per latent dim")->capture_default_str();
    app->add_option("--trans-noise", trans_noise, "transition noise variance per latent dim")->capture_default_str();
    app->add_option("--p-obs", cfg.p_obs, "base observation probability per cell")->capture_default_str();
    app->add_option("--missingness", missingness, "mcar or informative")
        ->check(CLI::IsMember({"mcar", "informative"}))
        ->capture_default_str();
    app->add_option("--slope", cfg.informative_slope, "informative missingness slope")->capture_default_str();
    app->add_option("--transition-gain", cfg.transition_gain, "scale on the true transition weights")
        ->capture_default_str();
    app->add_option("--classifier-gain", cfg.classifier_gain, "scale on the true classifier weights")
        ->capture_default_str();
    app->add_option("--seed", cfg.seed, "generator seed")->capture_default_str();
    fractions.add(app);
    app->add_option("--out", out, "dataset output path")->required();
    app->add_option("--truth", truth, "ground-truth output path");
    app->callback([this] { run(); });
  }

  void run() {
    check_unit_interval("--p-obs", cfg.p_obs, false);
    cfg.init_noise_var.assign(static_cast<std::size_t>(std::max(cfg.latent_dim, 0)), init_noise);
    cfg.trans_noise_var.assign(static_cast<std::size_t>(std::max(cfg.latent_dim, 0)), trans_noise);
    cfg.missingness = missingness == "informative" ? Missingness::informative : Missingness::mcar;
    cfg.fractions = fractions.get();
    const SynthResult r = sample_dataset(cfg);
    save_dataset(out, r.dataset);
    if (!truth.empty()) {
      auto f = open_out(truth);
      write_ground_truth(f, r.truth);
    }
    std::cout << "synth: " << r.dataset.n_patients << " patients, " << r.dataset.entries.size()
              << " observed cells, fill rate " << fixed(fill_rate(r.dataset)) << ", positive rate "
              << fixed(r.dataset.labels.cast<double>().mean()) << "\n";
  }
};

// ---- tensorize

struct TensorizeCmd {
  std::string records, covariates, labels, out;
  BinningSpec spec;
  std::vector<std::string> sum_features;
  SplitFlags fractions;
  std::uint64_t seed = 0;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("tensorize", "bin long-format CSV records into a dataset");
    app->add_option("--records", records, "records CSV (patient_id,feature_id,time_hours,value)")->required();
    app->add_option("--covariates", covariates, "covariates CSV (patient_id,<covariates...>)")->required();
    app->add_option("--labels", labels, "labels CSV (patient_id,label)")->required();
    app->add_option("--bin-width", spec.bin_width, "bin width in hours")->capture_default_str();
    app->add_option("--horizon", spec.horizon_bins, "number of bins T")->capture_default_str();
    app->add_option("--sum", sum_features, "feature aggregated by sum (repeatable); others use mean");
    fractions.add(app);
    app->add_option("--seed", seed, "split seed")->capture_default_str();
    app->add_option("--out", out, "dataset output path")->required();
    app->callback([this] { run(); });
  }

  void run() {
    for (const auto& f : sum_features) spec.aggregators[f] = Aggregator::sum;
    const LongInputs in = ingest_long_csv(records, covariates, labels);
    TensorizeResult r = tensorize(in.records, in.covariates, in.labels, spec);
    r.dataset = split(std::move(r.dataset), fractions.get(), seed);
    save_dataset(out, r.dataset);
    std::cout << "tensorize: " << r.dataset.n_patients << " patients, " << r.dataset.n_features << " features, "
              << r.dataset.n_bins << " bins, fill rate " << fixed(fill_rate(r.dataset)) << ", dropped "
              << r.dropped_beyond_horizon << " records beyond the horizon\n";
  }
};

// ---- train

struct TrainCmd {
  std::string data, out, arch = "generative";
  HyperFlags hyper;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("train", "train one generative or baseline model");
    app->add_option("--data", data, "dataset path")->required();
    app->add_option("--out", out, "model output path")->required();
    app->add_option("--arch", arch, "generative or baseline")
        ->check(CLI::IsMember({"generative", "baseline"}))
        ->capture_default_str();
    hyper.add(app, true);
    app->callback([this] { run(); });
  }

  void run() {
    const HyperParams hp = hyper.get();
    const TensorDataset ds = load_dataset(data);
    const TrainedModel m = train(ds, hp, parse_architecture(arch));
    save_model(out, m);
    std::cout << "train: arch " << arch << ", val_auc " << fixed(m.val_auc) << ", final loss "
              << fixed(m.loss_trace.back()) << " after " << m.loss_trace.size() << " epochs\n";
  }
};

// ---- ensemble

struct EnsembleCmd {
  std::string data, out, report_path, curve_path;
  EnsembleSpec spec;
  HyperFlags hyper;
  int workers = 1;
  bool log10 = false;
  std::vector<int> ks;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("ensemble", "random-search a model pool and keep the best by validation AUC");
    app->add_option("--data", data, "dataset path")->required();
    app->add_option("--out", out, "ensemble output path")->required();
    app->add_option("--n-models", spec.n_models, "models to train")->capture_default_str();
    app->add_option("--top-k", spec.top_k, "models kept")->capture_default_str();
    app->add_option("--workers", workers, "training threads")->capture_default_str();
    app->add_option("--gamma-low", spec.gamma_low, "gamma prior lower bound")->capture_default_str();
    app->add_option("--gamma-high", spec.gamma_high, "gamma prior upper bound")->capture_default_str();
    app->add_option("--log-lambda-low", spec.log_lambda_low, "log-lambda prior lower bound")->capture_default_str();
    app->add_option("--log-lambda-high", spec.log_lambda_high, "log-lambda prior upper bound")
        ->capture_default_str();
    app->add_flag("--log10", log10, "read the log-lambda bounds as base 10 instead of natural");
    app->add_option("--seed", spec.seed, "master seed")->capture_default_str();
    hyper.add(app, false);
    app->add_option("--report", report_path, "selection report CSV");
    app->add_option("--curve", curve_path, "ensemble-size curve CSV (k,test_auc)");
    app->add_option("--ks", ks, "ensemble sizes for --curve (default 1..top-k)")->delimiter(',');
    app->callback([this] { run(); });
  }

  void run() {
    spec.base = hyper.get();
    spec.natural_log = !log10;
    spec.validate();
    if (workers < 1) throw ConfigError("--workers must be >= 1");
    const TensorDataset ds = load_dataset(data);
    const ModelPool pool = train_pool(ds, spec, workers);
    const EnsembleModel em = select_top(pool, spec.top_k);
    save_ensemble(out, em);
    if (!report_path.empty()) {
      auto f = open_out(report_path);
      write_selection_csv(f, em.report);
    }
    if (!curve_path.empty()) {
      if (ks.empty()) {
        ks.resize(static_cast<std::size_t>(spec.top_k));
        std::iota(ks.begin(), ks.end(), 1);
      }
      auto f = open_out(curve_path);
      write_curve_csv(f, ensemble_curve(pool, ds, ks));
    }
    int failed = 0;
    for (const auto& r : em.report) failed += r.status == MemberStatus::failed ? 1 : 0;
    double best = em.report.empty() ? 0.0 : -1.0;
    for (const auto& r : em.report)
      if (r.selected) best = std::max(best, r.val_auc);
    std::cout << "ensemble: selected " << em.members.size() << " of " << spec.n_models << " models (" << failed
              << " failed), best member val_auc " << fixed(best) << ", members";
    for (int idx : em.member_index) std::cout << ' ' << idx;
    std::cout << "\n";
  }
};

// ---- eval

struct EvalCmd {
  std::string model, data, metrics, roc_path;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("eval", "score a model or ensemble on a dataset");
    app->add_option("--model", model, "model or ensemble path")->required();
    app->add_option("--data", data, "dataset path")->required();
    app->add_option("--metrics", metrics, "metrics CSV (name,value)");
    app->add_option("--roc", roc_path, "test ROC CSV (threshold,fpr,tpr)");
    app->callback([this] { run(); });
  }

  void run() {
    const TensorDataset ds = load_dataset(data);
    const std::string tag = container::peek_tag(model);
    Report rep;
    if (tag == container::kModelTag) {
      rep = report(load_model(model), ds);
    } else if (tag == container::kEnsembleTag) {
      rep = report(load_ensemble(model), ds);
    } else {
      throw FormatError(model + ": expected a model or ensemble container, found '" + tag + "'");
    }
    if (!metrics.empty()) {
      auto f = open_out(metrics);
      write_metrics_csv(f, rep.metrics);
    }
    if (!roc_path.empty()) {
      auto f = open_out(roc_path);
      write_roc_csv(f, rep.test_roc);
    }
    std::cout << "eval: test_auc " << fixed(rep.metrics.get("test_auc"));
    if (rep.metrics.has("val_auc")) std::cout << ", val_auc " << fixed(rep.metrics.get("val_auc"));
    std::cout << "\n";
  }
};

// ---- gradcheck

struct GradCheckCmd {
  int d = 4, m = 3, t = 5, n = 8;
  std::uint64_t seed = 0;
  double eps = 1e-5;
  double tolerance = 1e-4;
  int status = kExitOk;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
    app->add_option("--d", d, "latent dimension")->capture_default_str();
    app->add_option("--m", m, "features")->capture_default_str();
    app->add_option("--t", t, "bins")->capture_default_str();
    app->add_option("--n", n, "patients")->capture_default_str();
    app->add_option("--seed", seed, "fixture seed")->capture_default_str();
    app->add_option("--eps", eps, "finite-difference step")->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() {
    double worst = 0.0;
    for (const auto& c : check_gradients(d, m, t, n, seed, eps)) {
      std::printf("gradcheck: %-10s gamma %-4g max rel error %.3e at %s\n", to_string(c.arch), c.gamma,
                  c.result.max_rel_error, c.result.worst_name.c_str());
      worst = std::max(worst, c.result.max_rel_error);
    }
    std::printf("gradcheck: max relative error %.3e (%s)\n", worst, worst < tolerance ? "pass" : "fail");
    status = worst < tolerance ? kExitOk : kExitNumerical;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative GRU classification of sparse patient trajectories"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file; explicit flags take precedence");

  SynthCmd synth;
  TensorizeCmd tensorize_cmd;
  TrainCmd train_cmd;
  EnsembleCmd ensemble;
  EvalCmd eval;
  GradCheckCmd gradcheck;
  synth.add(app);
  tensorize_cmd.add(app);
  train_cmd.add(app);
  ensemble.add(app);
  eval.add(app);
  gradcheck.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {  // ConfigError, ShapeError
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return gradcheck.status;
}
