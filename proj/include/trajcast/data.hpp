#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "trajcast/common.hpp"

namespace trajcast {

struct LongRecord {
  std::string patient_id;
  std::string feature_id;
  double time = 0.0;  // hours since the patient's reference time
  double value = 0.0;
};

enum class Aggregator : std::uint8_t { mean, sum };

struct BinningSpec {
  double bin_width = 1.0;
  int horizon_bins = 48;
  std::map<std::string, Aggregator> aggregators;  // features not listed use mean

  Aggregator aggregator_for(const std::string& feature_id) const;
  void validate() const;
};

struct CovariateTable {
  std::vector<std::string> names;
  std::vector<std::string> patient_ids;
  Matrix values;  // rows follow patient_ids
};

struct LabelTable {
  std::vector<std::string> patient_ids;
  IntVector labels;
};

struct LongInputs {
  std::vector<LongRecord> records;
  CovariateTable covariates;
  LabelTable labels;
};

enum class Split : std::uint8_t { train, val, test, unassigned };

const char* to_string(Split s);
Split parse_split(const std::string& s);

// One observed cell of the N x M x T tensor.
struct Entry {
  int patient = 0;
  int feature = 0;
  int bin = 0;
  double value = 0.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

// Sparse patients x features x bins tensor with its mask (implied by the
// entries), static covariates, binary labels and split assignment. Entries
// are kept sorted by (patient, feature, bin) and unique per cell.
struct TensorDataset {
  int n_patients = 0;
  int n_features = 0;
  int n_bins = 0;
  double bin_width = 1.0;
  std::vector<Entry> entries;
  Matrix covariates;  // n_patients x K
  IntVector labels;
  std::vector<std::string> patient_ids;
  std::vector<std::string> feature_ids;
  std::vector<std::string> covariate_names;
  std::vector<Split> split;

  int n_covariates() const { return static_cast<int>(covariates.cols()); }
  std::vector<int> patients_in(Split s) const;
  // Half-open range [first, last) of entries belonging to each patient.
  std::vector<std::array<std::size_t, 2>> patient_ranges() const;

  // Throws ConfigError describing the first broken invariant.
  void validate() const;
};

struct NormStats {
  Vector feature_mean;
  Vector feature_std;
  Vector covariate_mean;
  Vector covariate_std;
};

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct TensorizeResult {
  TensorDataset dataset;
  std::size_t dropped_beyond_horizon = 0;
};

// Parses the three CSV inputs (see README for the schemas) and reconciles
// their patient sets: every patient in records or covariates must carry a
// label, and every labeled patient must have a covariate row.
LongInputs ingest_long_csv(const std::string& records_path, const std::string& covariates_path,
                           const std::string& labels_path);
LongInputs parse_long_csv(std::istream& records, std::istream& covariates, std::istream& labels);

// Bin index is floor(time / bin_width); records past the horizon are dropped.
// Patients follow the label table order; features are sorted by id. The
// result does not depend on record order.
TensorizeResult tensorize(const std::vector<LongRecord>& records, const CovariateTable& covariates,
                          const LabelTable& labels, const BinningSpec& spec);

double fill_rate(const TensorDataset& ds);

// Mean/std over observed train-split entries (all patients when no split is
// assigned). Degenerate features get std 1; unobserved features mean 0, std 1.
NormStats compute_norm_stats(const TensorDataset& ds);
TensorDataset normalize(const TensorDataset& ds, const NormStats& stats);

// Label-stratified, seeded assignment.
TensorDataset split(TensorDataset ds, const SplitFractions& fractions, std::uint64_t seed);

void write_dataset(std::ostream& out, const TensorDataset& ds);
TensorDataset read_dataset(std::istream& in, const std::string& source = "<stream>");
void save_dataset(const std::string& path, const TensorDataset& ds);
TensorDataset load_dataset(const std::string& path);

}  // namespace trajcast
