#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "trajcast/eval.hpp"
#include "trajcast/report.hpp"
#include "trajcast/synthgen.hpp"

using namespace trajcast;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

IntVector ivec(std::initializer_list<int> v) {
  IntVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) out(i++) = x;
  return out;
}

// Random instance with at least one sample of each class. Scores are drawn
// from `levels` distinct values when levels > 0, which forces ties.
std::pair<Vector, IntVector> instance(std::mt19937_64& rng, int n, int levels) {
  Vector s(n);
  IntVector y(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    s(i) = levels > 0 ? std::floor(u(rng) * levels) / levels : u(rng);
    y(i) = u(rng) < 0.4 ? 1 : 0;
  }
  y(0) = 1;
  y(1) = 0;
  return {s, y};
}

}  // namespace

TEST_CASE("documented AUC examples") {
  CHECK(auc(vec({0.9, 0.1}), ivec({1, 0})) == 1.0);
  CHECK(auc(vec({0.1, 0.9}), ivec({1, 0})) == 0.0);
  CHECK(auc(vec({0.3, 0.3, 0.3, 0.3}), ivec({1, 0, 1, 0})) == 0.5);
  CHECK(auc_pairwise(vec({0.9, 0.1}), ivec({1, 0})) == 1.0);
  CHECK(auc_pairwise(vec({0.5, 0.5}), ivec({1, 0})) == 0.5);
}

TEST_CASE("constant scores give one diagonal segment") {
  const RocCurve c = roc(vec({0.2, 0.2, 0.2}), ivec({1, 0, 0}));
  REQUIRE(c.points.size() == 2);
  CHECK(std::isinf(c.points[0].threshold));
  CHECK(c.points[1].fpr == 1.0);
  CHECK(c.points[1].tpr == 1.0);
}

TEST_CASE("single-class and mismatched inputs are rejected") {
  CHECK_THROWS_AS(roc(vec({0.1, 0.2}), ivec({1, 1})), ConfigError);
  CHECK_THROWS_AS(auc_pairwise(vec({0.1, 0.2}), ivec({0, 0})), ConfigError);
  CHECK_THROWS_AS(roc(vec({0.1, 0.2}), ivec({1, 0, 1})), ConfigError);
}

TEST_CASE("trapezoidal AUC equals the pairwise statistic") {
  std::mt19937_64 rng(2718);
  std::uniform_int_distribution<int> size(2, 200);
  for (int trial = 0; trial < 1000; ++trial) {
    const int levels = trial % 4 == 0 ? 0 : (trial % 4 == 1 ? 2 : (trial % 4 == 2 ? 5 : 1));
    const auto [s, y] = instance(rng, size(rng), levels);
    CHECK(std::abs(auc(s, y) - auc_pairwise(s, y)) < 1e-12);
  }
}

TEST_CASE("ROC curve shape invariants") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto [s, y] = instance(rng, 50, trial % 2 ? 4 : 0);
    const RocCurve c = roc(s, y);
    CHECK(c.points.front().fpr == 0.0);
    CHECK(c.points.front().tpr == 0.0);
    CHECK(c.points.back().fpr == 1.0);
    CHECK(c.points.back().tpr == 1.0);
    for (std::size_t k = 1; k < c.points.size(); ++k) {
      CHECK(c.points[k].fpr >= c.points[k - 1].fpr);
      CHECK(c.points[k].tpr >= c.points[k - 1].tpr);
      CHECK(c.points[k].threshold < c.points[k - 1].threshold);
    }
    CHECK(c.auc >= 0.0);
    CHECK(c.auc <= 1.0);
  }
}

TEST_CASE("AUC under monotone transforms and score reversal") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto [s, y] = instance(rng, 80, trial % 3 ? 6 : 0);
    const Vector warped = (3.0 * s.array()).exp() - 7.0;
    CHECK(auc(warped, y) == auc(s, y));
    const Vector flipped = 1.0 - s.array();
    CHECK(std::abs(auc(flipped, y) - (1.0 - auc(s, y))) < 1e-12);
  }
}

TEST_CASE("metrics CSV round trip") {
  Metrics m;
  m.set("test_auc", 0.8123456789012345);
  m.set("n_test", 300);
  m.set("tiny", 1e-300);
  std::stringstream ss;
  write_metrics_csv(ss, m);
  CHECK(ss.str().rfind("name,value\n", 0) == 0);
  const Metrics back = read_metrics_csv(ss);
  CHECK(back == m);
  CHECK(back.get("n_test") == 300);
  CHECK_FALSE(back.has("val_auc"));
  CHECK_THROWS(back.get("val_auc"));
}

TEST_CASE("ROC CSV header and rows") {
  std::stringstream ss;
  write_roc_csv(ss, roc(vec({0.9, 0.4, 0.1}), ivec({1, 0, 1})));
  std::string header;
  std::getline(ss, header);
  CHECK(header == "threshold,fpr,tpr");
  int rows = 0;
  for (std::string line; std::getline(ss, line);) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("report on scored synthetic data") {
  SynthConfig cfg;
  cfg.n_patients = 400;
  cfg.seed = 9;
  const auto sr = sample_dataset(cfg);
  const Vector oracle = oracle_scores(sr.truth);
  const auto& ds = sr.dataset;
  const Report r = report_scores(ds, [&](Split s) {
    const auto idx = ds.patients_in(s);
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = oracle(idx[k]);
    return out;
  });
  for (const char* key : {"test_auc", "val_auc", "positive_rate", "n_train", "n_val", "n_test", "fill_rate"}) {
    CAPTURE(key);
    CHECK(r.metrics.has(key));
  }
  CHECK(r.metrics.get("test_auc") >= 0.0);
  CHECK(r.metrics.get("test_auc") <= 1.0);
  CHECK(r.metrics.get("test_auc") == r.test_roc.auc);
  CHECK(r.metrics.get("n_train") + r.metrics.get("n_val") + r.metrics.get("n_test") == 400);
}
