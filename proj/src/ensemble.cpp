#include "trajcast/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "trajcast/eval.hpp"

namespace trajcast {

namespace {

constexpr std::uint64_t kPriorStream = 0x9a11;
constexpr std::uint64_t kMemberSeedStream = 0x9a12;

IntVector labels_of(const TensorDataset& ds, const std::vector<int>& idx) {
  IntVector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Eigen::Index>(r)) = ds.labels(idx[r]);
  return out;
}

const char* status_name(MemberStatus s) { return s == MemberStatus::ok ? "ok" : "failed"; }

}  // namespace

void EnsembleSpec::validate() const {
  if (n_models < 1) throw ConfigError("n_models must be >= 1");
  if (top_k < 1 || top_k > n_models) throw ConfigError("top_k must lie in [1, n_models]");
  if (!(gamma_low <= gamma_high) || gamma_low < 0.0 || gamma_high > 1.0) {
    throw ConfigError("gamma prior bounds must be ordered within [0, 1]");
  }
  if (!(log_lambda_low <= log_lambda_high)) throw ConfigError("log-lambda prior bounds must be ordered");
  base.validate();
}

HyperParams sample_hparams(const EnsembleSpec& spec, int model_index) {
  if (model_index < 0 || model_index >= spec.n_models) {
    throw ConfigError("model index " + std::to_string(model_index) + " outside [0, n_models)");
  }
  std::mt19937_64 rng(derive_seed(spec.seed, kPriorStream, static_cast<std::uint64_t>(model_index)));
  HyperParams hp = spec.base;
  hp.gamma = std::uniform_real_distribution<double>(spec.gamma_low, spec.gamma_high)(rng);
  const double u = std::uniform_real_distribution<double>(spec.log_lambda_low, spec.log_lambda_high)(rng);
  hp.lambda = spec.natural_log ? std::exp(u) : std::pow(10.0, u);
  hp.seed = derive_seed(spec.seed, kMemberSeedStream, static_cast<std::uint64_t>(model_index));
  return hp;
}

ModelPool train_pool(const TensorDataset& ds, const EnsembleSpec& spec, int workers) {
  spec.validate();
  if (workers < 1) throw ConfigError("workers must be >= 1");
  const auto n = static_cast<std::size_t>(spec.n_models);
  ModelPool pool;
  pool.records.resize(n);
  pool.models.resize(n);

  std::atomic<std::size_t> next{0};
  std::exception_ptr config_failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      MemberRecord& rec = pool.records[i];
      rec.model_index = static_cast<int>(i);
      rec.hyper = sample_hparams(spec, static_cast<int>(i));
      try {
        pool.models[i] = train(ds, rec.hyper, Architecture::generative);
        rec.val_auc = pool.models[i]->val_auc;
        rec.status = MemberStatus::ok;
      } catch (const NumericalError& e) {
        rec.val_auc = -1.0;
        rec.status = MemberStatus::failed;
        rec.failure = e.what();
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!config_failure) config_failure = std::current_exception();
        next = n;
      }
    }
  };
  const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), n));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < n_threads; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  if (config_failure) std::rethrow_exception(config_failure);
  return pool;
}

std::vector<int> rank_models(const std::vector<MemberRecord>& records) {
  std::vector<const MemberRecord*> ok;
  for (const auto& r : records)
    if (r.status == MemberStatus::ok) ok.push_back(&r);
  std::sort(ok.begin(), ok.end(), [](const MemberRecord* a, const MemberRecord* b) {
    if (a->val_auc != b->val_auc) return a->val_auc > b->val_auc;
    return a->model_index < b->model_index;
  });
  std::vector<int> out;
  for (const auto* r : ok) out.push_back(r->model_index);
  return out;
}

EnsembleModel select_top(const ModelPool& pool, int top_k) {
  const auto ranked = rank_models(pool.records);
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (static_cast<int>(ranked.size()) < top_k) {
    throw NumericalError("only " + std::to_string(ranked.size()) + " models trained successfully, top_k is " +
                         std::to_string(top_k));
  }
  EnsembleModel em;
  em.report = pool.records;
  std::sort(em.report.begin(), em.report.end(),
            [](const MemberRecord& a, const MemberRecord& b) { return a.model_index < b.model_index; });
  for (int k = 0; k < top_k; ++k) {
    const int idx = ranked[static_cast<std::size_t>(k)];
    auto it = std::find_if(pool.records.begin(), pool.records.end(),
                           [idx](const MemberRecord& r) { return r.model_index == idx; });
    const auto pos = static_cast<std::size_t>(it - pool.records.begin());
    if (!pool.models[pos]) throw ConfigError("model " + std::to_string(idx) + " is missing from the pool");
    em.members.push_back(*pool.models[pos]);
    em.member_index.push_back(idx);
    for (auto& r : em.report)
      if (r.model_index == idx) r.selected = true;
  }
  return em;
}

EnsembleModel run_ensemble(const TensorDataset& ds, const EnsembleSpec& spec, int workers) {
  return select_top(train_pool(ds, spec, workers), spec.top_k);
}

Vector ensemble_predict(const EnsembleModel& em, const TensorDataset& ds, Split split) {
  if (em.members.empty()) throw ConfigError("ensemble has no members");
  Vector total;
  for (const auto& m : em.members) {
    Vector p = predict(m, ds, split);
    if (total.size() == 0)
      total = std::move(p);
    else
      total += p;
  }
  return total / static_cast<double>(em.members.size());
}

std::vector<CurvePoint> ensemble_curve(const ModelPool& pool, const TensorDataset& ds, const std::vector<int>& ks) {
  const auto ranked = rank_models(pool.records);
  const auto test_idx = ds.patients_in(Split::test);
  const IntVector labels = labels_of(ds, test_idx);
  int needed = 0;
  for (int k : ks) {
    if (k < 1 || k > static_cast<int>(ranked.size())) {
      throw ConfigError("curve size " + std::to_string(k) + " exceeds the " + std::to_string(ranked.size()) +
                        " successful models");
    }
    needed = std::max(needed, k);
  }
  std::vector<Vector> scores;
  for (int r = 0; r < needed; ++r) {
    const int idx = ranked[static_cast<std::size_t>(r)];
    for (std::size_t p = 0; p < pool.records.size(); ++p) {
      if (pool.records[p].model_index == idx) scores.push_back(predict_patients(*pool.models[p], ds, test_idx));
    }
  }
  std::vector<CurvePoint> curve;
  for (int k : ks) {
    Vector mean = scores[0];
    for (int r = 1; r < k; ++r) mean += scores[static_cast<std::size_t>(r)];
    mean /= static_cast<double>(k);
    curve.push_back(CurvePoint{k, auc(mean, labels)});
  }
  return curve;
}

void write_selection_csv(std::ostream& out, const std::vector<MemberRecord>& records) {
  out << "model_index,gamma,lambda,seed,val_auc,selected,status\n";
  for (const auto& r : records) {
    out << r.model_index << ',' << format_double(r.hyper.gamma) << ',' << format_double(r.hyper.lambda) << ','
        << r.hyper.seed << ',' << format_double(r.val_auc) << ',' << (r.selected ? 1 : 0) << ','
        << status_name(r.status) << '\n';
  }
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "k,test_auc\n";
  for (const auto& p : curve) out << p.k << ',' << format_double(p.test_auc) << '\n';
}

void write_ensemble(std::ostream& out, const EnsembleModel& em) {
  out << container::kEnsembleTag << '\n';
  out << "report " << em.report.size() << '\n';
  write_selection_csv(out, em.report);
  out << "members " << em.members.size() << '\n';
  for (std::size_t k = 0; k < em.members.size(); ++k) {
    out << "member " << em.member_index[k] << '\n';
    write_model(out, em.members[k]);
  }
}

EnsembleModel read_ensemble(std::istream& in, const std::string& source) {
  container::Reader r(in, source);
  r.expect_tag(container::kEnsembleTag);
  EnsembleModel em;
  const auto n_report = r.int_arg(r.section("report", 1), 0);
  if (r.line() != "model_index,gamma,lambda,seed,val_auc,selected,status") r.fail("bad selection header");
  for (long long i = 0; i < n_report; ++i) {
    std::string line = r.line();
    for (auto& c : line)
      if (c == ',') c = ' ';
    const auto f = container::split_tokens(line);
    if (f.size() != 7) r.fail("selection row needs 7 fields");
    MemberRecord rec;
    rec.model_index = static_cast<int>(r.int_arg(f, 0));
    rec.hyper.gamma = r.real_arg(f, 1);
    rec.hyper.lambda = r.real_arg(f, 2);
    rec.hyper.seed = std::stoull(f[3]);
    rec.val_auc = r.real_arg(f, 4);
    rec.selected = r.int_arg(f, 5) != 0;
    if (f[6] != "ok" && f[6] != "failed") r.fail("unknown status '" + f[6] + "'");
    rec.status = f[6] == "ok" ? MemberStatus::ok : MemberStatus::failed;
    em.report.push_back(rec);
  }
  const auto n_members = r.int_arg(r.section("members", 1), 0);
  if (n_members < 1) r.fail("ensemble has no members");
  for (long long k = 0; k < n_members; ++k) {
    em.member_index.push_back(static_cast<int>(r.int_arg(r.section("member", 1), 0)));
    em.members.push_back(read_model(r));
  }
  return em;
}

void save_ensemble(const std::string& path, const EnsembleModel& em) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_ensemble(out, em);
}

EnsembleModel load_ensemble(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_ensemble(in, path);
}

}  // namespace trajcast
