#include "trajcast/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "trajcast/container.hpp"

namespace trajcast {

namespace {

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

class CsvSource {
 public:
  CsvSource(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  std::vector<std::string> header() {
    std::string line;
    if (!std::getline(in_, line)) throw FormatError(name_ + ": missing header row");
    ++row_;
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    return split_csv_line(line);
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++row_;
      if (blank(line)) continue;
      fields = split_csv_line(line);
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(name_ + ": row " + std::to_string(row_) + ": " + what);
  }

  double number(const std::string& field, const char* column) const {
    try {
      const double v = parse_double(field);
      if (!std::isfinite(v)) fail(std::string("non-finite ") + column);
      return v;
    } catch (const FormatError&) {
      fail(std::string("bad ") + column + " '" + field + "'");
    }
  }

 private:
  std::istream& in_;
  std::string name_;
  std::size_t row_ = 0;
};

}  // namespace

Aggregator BinningSpec::aggregator_for(const std::string& feature_id) const {
  auto it = aggregators.find(feature_id);
  return it == aggregators.end() ? Aggregator::mean : it->second;
}

void BinningSpec::validate() const {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) throw ConfigError("bin_width must be positive");
  if (horizon_bins <= 0) throw ConfigError("horizon_bins must be positive");
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "none";
  }
  return "none";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "none") return Split::unassigned;
  throw ConfigError("unknown split '" + s + "'");
}

std::vector<int> TensorDataset::patients_in(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < n_patients; ++i)
    if (split[static_cast<std::size_t>(i)] == s) out.push_back(i);
  return out;
}

std::vector<std::array<std::size_t, 2>> TensorDataset::patient_ranges() const {
  std::vector<std::array<std::size_t, 2>> ranges(static_cast<std::size_t>(n_patients), {0, 0});
  std::size_t k = 0;
  for (int i = 0; i < n_patients; ++i) {
    const std::size_t first = k;
    while (k < entries.size() && entries[k].patient == i) ++k;
    ranges[static_cast<std::size_t>(i)] = {first, k};
  }
  return ranges;
}

void TensorDataset::validate() const {
  if (n_patients <= 0 || n_features <= 0 || n_bins <= 0) throw ConfigError("dataset dimensions must be positive");
  const auto n = static_cast<std::size_t>(n_patients);
  if (covariates.rows() != n_patients) throw ConfigError("covariate rows do not match patient count");
  if (!covariates.allFinite()) throw ConfigError("covariates must be finite and fully observed");
  if (labels.size() != n_patients) throw ConfigError("label count does not match patient count");
  if (patient_ids.size() != n || split.size() != n) throw ConfigError("patient index maps have wrong length");
  if (feature_ids.size() != static_cast<std::size_t>(n_features)) throw ConfigError("feature map has wrong length");
  if (covariate_names.size() != static_cast<std::size_t>(covariates.cols())) {
    throw ConfigError("covariate name map has wrong length");
  }
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels(i) != 0 && labels(i) != 1) throw ConfigError("labels must be 0 or 1");
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Entry& e = entries[k];
    if (e.patient < 0 || e.patient >= n_patients || e.feature < 0 || e.feature >= n_features || e.bin < 0 ||
        e.bin >= n_bins) {
      throw ConfigError("entry " + std::to_string(k) + " has out-of-range indices");
    }
    if (!std::isfinite(e.value)) throw ConfigError("entry " + std::to_string(k) + " is not finite");
    if (k > 0) {
      const Entry& p = entries[k - 1];
      if (std::tie(p.patient, p.feature, p.bin) >= std::tie(e.patient, e.feature, e.bin)) {
        throw ConfigError("entries must be sorted and unique per cell");
      }
    }
  }
}

LongInputs parse_long_csv(std::istream& records_in, std::istream& covariates_in, std::istream& labels_in) {
  LongInputs out;

  CsvSource labels_csv(labels_in, "labels");
  if (labels_csv.header() != std::vector<std::string>{"patient_id", "label"}) {
    labels_csv.fail("header must be 'patient_id,label'");
  }
  std::unordered_map<std::string, std::size_t> labeled;
  std::vector<int> label_values;
  std::vector<std::string> fields;
  while (labels_csv.next(fields)) {
    if (fields.size() != 2) labels_csv.fail("expected 2 fields");
    if (fields[0].empty()) labels_csv.fail("empty patient_id");
    if (fields[1] != "0" && fields[1] != "1") labels_csv.fail("label must be 0 or 1, got '" + fields[1] + "'");
    if (!labeled.emplace(fields[0], out.labels.patient_ids.size()).second) {
      labels_csv.fail("duplicate patient '" + fields[0] + "'");
    }
    out.labels.patient_ids.push_back(fields[0]);
    label_values.push_back(fields[1] == "1" ? 1 : 0);
  }
  out.labels.labels = Eigen::Map<const IntVector>(label_values.data(), static_cast<Eigen::Index>(label_values.size()));

  CsvSource cov_csv(covariates_in, "covariates");
  const auto cov_header = cov_csv.header();
  if (cov_header.empty() || cov_header[0] != "patient_id") cov_csv.fail("first column must be 'patient_id'");
  out.covariates.names.assign(cov_header.begin() + 1, cov_header.end());
  const std::size_t k = out.covariates.names.size();
  std::vector<std::vector<double>> cov_rows;
  std::set<std::string> cov_seen;
  while (cov_csv.next(fields)) {
    if (fields.size() != k + 1) cov_csv.fail("expected " + std::to_string(k + 1) + " fields");
    if (!labeled.count(fields[0])) throw IntegrityError("patient '" + fields[0] + "' in covariates has no label");
    if (!cov_seen.insert(fields[0]).second) cov_csv.fail("duplicate patient '" + fields[0] + "'");
    std::vector<double> row;
    for (std::size_t c = 0; c < k; ++c) row.push_back(cov_csv.number(fields[c + 1], "covariate"));
    out.covariates.patient_ids.push_back(fields[0]);
    cov_rows.push_back(std::move(row));
  }
  out.covariates.values.resize(static_cast<Eigen::Index>(cov_rows.size()), static_cast<Eigen::Index>(k));
  for (std::size_t r = 0; r < cov_rows.size(); ++r)
    for (std::size_t c = 0; c < k; ++c)
      out.covariates.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cov_rows[r][c];
  for (const auto& id : out.labels.patient_ids) {
    if (!cov_seen.count(id)) throw IntegrityError("patient '" + id + "' has no covariate row");
  }

  CsvSource rec_csv(records_in, "records");
  if (rec_csv.header() != std::vector<std::string>{"patient_id", "feature_id", "time_hours", "value"}) {
    rec_csv.fail("header must be 'patient_id,feature_id,time_hours,value'");
  }
  while (rec_csv.next(fields)) {
    if (fields.size() != 4) rec_csv.fail("expected 4 fields");
    if (fields[0].empty() || fields[1].empty()) rec_csv.fail("empty patient_id or feature_id");
    LongRecord r{fields[0], fields[1], rec_csv.number(fields[2], "time_hours"), rec_csv.number(fields[3], "value")};
    if (r.time < 0.0) rec_csv.fail("negative time_hours");
    if (!labeled.count(r.patient_id)) throw IntegrityError("patient '" + r.patient_id + "' in records has no label");
    out.records.push_back(std::move(r));
  }
  return out;
}

LongInputs ingest_long_csv(const std::string& records_path, const std::string& covariates_path,
                           const std::string& labels_path) {
  std::ifstream records(records_path), covariates(covariates_path), labels(labels_path);
  if (!records) throw FormatError("cannot open " + records_path);
  if (!covariates) throw FormatError("cannot open " + covariates_path);
  if (!labels) throw FormatError("cannot open " + labels_path);
  return parse_long_csv(records, covariates, labels);
}

TensorizeResult tensorize(const std::vector<LongRecord>& records, const CovariateTable& covariates,
                          const LabelTable& labels, const BinningSpec& spec) {
  spec.validate();
  if (records.empty()) throw ConfigError("tensorize: no records");
  const auto n = static_cast<int>(labels.patient_ids.size());

  std::unordered_map<std::string, int> patient_index;
  for (int i = 0; i < n; ++i) patient_index.emplace(labels.patient_ids[static_cast<std::size_t>(i)], i);

  std::set<std::string> feature_set;
  for (const auto& r : records) feature_set.insert(r.feature_id);
  std::vector<std::string> feature_ids(feature_set.begin(), feature_set.end());
  std::unordered_map<std::string, int> feature_index;
  for (std::size_t j = 0; j < feature_ids.size(); ++j) feature_index.emplace(feature_ids[j], static_cast<int>(j));

  TensorizeResult result;
  std::vector<Entry> raw;
  raw.reserve(records.size());
  for (const auto& r : records) {
    if (!std::isfinite(r.time) || r.time < 0.0 || !std::isfinite(r.value)) {
      throw ConfigError("tensorize: invalid record for patient '" + r.patient_id + "'");
    }
    auto pi = patient_index.find(r.patient_id);
    if (pi == patient_index.end()) throw IntegrityError("patient '" + r.patient_id + "' in records has no label");
    const double b = std::floor(r.time / spec.bin_width);
    if (b >= static_cast<double>(spec.horizon_bins)) {
      ++result.dropped_beyond_horizon;
      continue;
    }
    raw.push_back(Entry{pi->second, feature_index.at(r.feature_id), static_cast<int>(b), r.value});
  }
  // Sorting on the value as well fixes the summation order within a cell.
  std::sort(raw.begin(), raw.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.patient, a.feature, a.bin, a.value) < std::tie(b.patient, b.feature, b.bin, b.value);
  });

  TensorDataset& ds = result.dataset;
  for (std::size_t k = 0; k < raw.size();) {
    std::size_t end = k;
    double total = 0.0;
    while (end < raw.size() && raw[end].patient == raw[k].patient && raw[end].feature == raw[k].feature &&
           raw[end].bin == raw[k].bin) {
      total += raw[end].value;
      ++end;
    }
    Entry cell = raw[k];
    const auto agg = spec.aggregator_for(feature_ids[static_cast<std::size_t>(cell.feature)]);
    cell.value = agg == Aggregator::sum ? total : total / static_cast<double>(end - k);
    ds.entries.push_back(cell);
    k = end;
  }
  if (ds.entries.empty()) throw ConfigError("tensorize: no observations inside the horizon (fill rate 0)");

  ds.n_patients = n;
  ds.n_features = static_cast<int>(feature_ids.size());
  ds.n_bins = spec.horizon_bins;
  ds.bin_width = spec.bin_width;
  ds.feature_ids = std::move(feature_ids);
  ds.patient_ids = labels.patient_ids;
  ds.labels = labels.labels;
  ds.covariate_names = covariates.names;
  ds.split.assign(static_cast<std::size_t>(n), Split::unassigned);

  std::unordered_map<std::string, Eigen::Index> cov_row;
  for (std::size_t r = 0; r < covariates.patient_ids.size(); ++r) {
    cov_row.emplace(covariates.patient_ids[r], static_cast<Eigen::Index>(r));
  }
  ds.covariates.resize(n, covariates.values.cols());
  for (int i = 0; i < n; ++i) {
    auto it = cov_row.find(ds.patient_ids[static_cast<std::size_t>(i)]);
    if (it == cov_row.end()) {
      throw IntegrityError("patient '" + ds.patient_ids[static_cast<std::size_t>(i)] + "' has no covariate row");
    }
    ds.covariates.row(i) = covariates.values.row(it->second);
  }
  ds.validate();
  return result;
}

double fill_rate(const TensorDataset& ds) {
  const double cells = static_cast<double>(ds.n_patients) * ds.n_features * ds.n_bins;
  return cells > 0 ? static_cast<double>(ds.entries.size()) / cells : 0.0;
}

NormStats compute_norm_stats(const TensorDataset& ds) {
  const bool any_assigned =
      std::any_of(ds.split.begin(), ds.split.end(), [](Split s) { return s != Split::unassigned; });
  auto in_train = [&](int i) { return !any_assigned || ds.split[static_cast<std::size_t>(i)] == Split::train; };

  const auto m = ds.n_features;
  NormStats stats;
  Vector sum = Vector::Zero(m), count = Vector::Zero(m);
  for (const auto& e : ds.entries) {
    if (!in_train(e.patient)) continue;
    sum(e.feature) += e.value;
    count(e.feature) += 1.0;
  }
  stats.feature_mean = Vector::Zero(m);
  for (int j = 0; j < m; ++j)
    if (count(j) > 0) stats.feature_mean(j) = sum(j) / count(j);
  Vector sq = Vector::Zero(m);
  for (const auto& e : ds.entries) {
    if (!in_train(e.patient)) continue;
    const double d = e.value - stats.feature_mean(e.feature);
    sq(e.feature) += d * d;
  }
  stats.feature_std = Vector::Ones(m);
  for (int j = 0; j < m; ++j) {
    if (count(j) > 0) {
      const double sd = std::sqrt(sq(j) / count(j));
      if (sd > 1e-12) stats.feature_std(j) = sd;
    }
  }

  const auto k = ds.covariates.cols();
  stats.covariate_mean = Vector::Zero(k);
  stats.covariate_std = Vector::Ones(k);
  std::vector<int> rows;
  for (int i = 0; i < ds.n_patients; ++i)
    if (in_train(i)) rows.push_back(i);
  if (!rows.empty()) {
    for (Eigen::Index c = 0; c < k; ++c) {
      double s = 0.0;
      for (int i : rows) s += ds.covariates(i, c);
      const double mean = s / static_cast<double>(rows.size());
      double v = 0.0;
      for (int i : rows) v += (ds.covariates(i, c) - mean) * (ds.covariates(i, c) - mean);
      const double sd = std::sqrt(v / static_cast<double>(rows.size()));
      stats.covariate_mean(c) = mean;
      if (sd > 1e-12) stats.covariate_std(c) = sd;
    }
  }
  return stats;
}

TensorDataset normalize(const TensorDataset& ds, const NormStats& stats) {
  if (stats.feature_mean.size() != ds.n_features || stats.feature_std.size() != ds.n_features) {
    throw ConfigError("normalize: statistics cover " + std::to_string(stats.feature_mean.size()) +
                      " features, dataset has " + std::to_string(ds.n_features));
  }
  if (stats.covariate_mean.size() != ds.covariates.cols() || stats.covariate_std.size() != ds.covariates.cols()) {
    throw ConfigError("normalize: covariate statistics do not match the dataset");
  }
  TensorDataset out = ds;
  for (auto& e : out.entries) {
    if (e.feature < 0 || e.feature >= ds.n_features) {
      throw ConfigError("normalize: unknown feature index " + std::to_string(e.feature));
    }
    e.value = (e.value - stats.feature_mean(e.feature)) / stats.feature_std(e.feature);
  }
  out.covariates =
      (ds.covariates.rowwise() - stats.covariate_mean.transpose()).array().rowwise() /
      stats.covariate_std.transpose().array();
  return out;
}

TensorDataset split(TensorDataset ds, const SplitFractions& f, std::uint64_t seed) {
  const std::array<double, 3> frac{f.train, f.val, f.test};
  for (double x : frac)
    if (!(x >= 0.0) || !std::isfinite(x)) throw ConfigError("split fractions must be non-negative");
  if (std::abs(frac[0] + frac[1] + frac[2] - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  constexpr std::array<Split, 3> kinds{Split::train, Split::val, Split::test};
  ds.split.assign(static_cast<std::size_t>(ds.n_patients), Split::unassigned);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<int> members;
    for (int i = 0; i < ds.n_patients; ++i)
      if (ds.labels(i) == cls) members.push_back(i);
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(cls)));
    std::shuffle(members.begin(), members.end(), rng);

    // Largest-remainder apportionment; ties go to the earlier split.
    const double n = static_cast<double>(members.size());
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double exact = frac[s] * n;
      counts[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      rem[s] = exact - static_cast<double>(counts[s]);
      assigned += counts[s];
    }
    while (assigned < members.size()) {
      std::size_t best = 0;
      for (std::size_t s = 1; s < 3; ++s)
        if (rem[s] > rem[best]) best = s;
      ++counts[best];
      rem[best] = -1.0;
      ++assigned;
    }
    std::size_t k = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t c = 0; c < counts[s]; ++c) ds.split[static_cast<std::size_t>(members[k++])] = kinds[s];
  }
  for (Split s : kinds) {
    if (ds.patients_in(s).empty()) throw ConfigError(std::string("split: '") + to_string(s) + "' would be empty");
  }
  return ds;
}

void write_dataset(std::ostream& out, const TensorDataset& ds) {
  out << container::kDatasetTag << '\n';
  out << "dims " << ds.n_patients << ' ' << ds.n_features << ' ' << ds.n_bins << ' ' << ds.covariates.cols() << '\n';
  out << "bin_width " << format_double(ds.bin_width) << '\n';
  out << "patients\n";
  for (const auto& id : ds.patient_ids) out << id << '\n';
  out << "features\n";
  for (const auto& id : ds.feature_ids) out << id << '\n';
  out << "covariate_names\n";
  for (const auto& id : ds.covariate_names) out << id << '\n';
  out << "labels\n";
  for (Eigen::Index i = 0; i < ds.labels.size(); ++i) out << (i ? " " : "") << ds.labels(i);
  out << '\n';
  out << "split\n";
  for (std::size_t i = 0; i < ds.split.size(); ++i) out << (i ? " " : "") << to_string(ds.split[i]);
  out << '\n';
  out << "covariates\n";
  container::write_matrix(out, ds.covariates);
  out << "entries " << ds.entries.size() << '\n';
  for (const auto& e : ds.entries) {
    out << e.patient << ' ' << e.feature << ' ' << e.bin << ' ' << format_double(e.value) << '\n';
  }
}

TensorDataset read_dataset(std::istream& in, const std::string& source) {
  container::Reader r(in, source);
  r.expect_tag(container::kDatasetTag);
  TensorDataset ds;
  const auto dims = r.section("dims", 4);
  ds.n_patients = static_cast<int>(r.int_arg(dims, 0));
  ds.n_features = static_cast<int>(r.int_arg(dims, 1));
  ds.n_bins = static_cast<int>(r.int_arg(dims, 2));
  const auto k = r.int_arg(dims, 3);
  if (ds.n_patients <= 0 || ds.n_features <= 0 || ds.n_bins <= 0 || k < 0) r.fail("invalid dims");
  ds.bin_width = r.real_arg(r.section("bin_width", 1), 0);
  r.section("patients", 0);
  for (int i = 0; i < ds.n_patients; ++i) ds.patient_ids.push_back(r.line());
  r.section("features", 0);
  for (int j = 0; j < ds.n_features; ++j) ds.feature_ids.push_back(r.line());
  r.section("covariate_names", 0);
  for (long long c = 0; c < k; ++c) ds.covariate_names.push_back(r.line());
  r.section("labels", 0);
  {
    const auto tokens = container::split_tokens(r.line());
    if (tokens.size() != static_cast<std::size_t>(ds.n_patients)) r.fail("label count mismatch");
    ds.labels.resize(ds.n_patients);
    for (int i = 0; i < ds.n_patients; ++i) ds.labels(i) = static_cast<int>(r.int_arg(tokens, static_cast<std::size_t>(i)));
  }
  r.section("split", 0);
  {
    const auto tokens = container::split_tokens(r.line());
    if (tokens.size() != static_cast<std::size_t>(ds.n_patients)) r.fail("split count mismatch");
    try {
      for (const auto& t : tokens) ds.split.push_back(parse_split(t));
    } catch (const ConfigError& e) {
      r.fail(e.what());
    }
  }
  r.section("covariates", 0);
  ds.covariates = r.matrix(ds.n_patients, k);
  const auto entries = r.section("entries", 1);
  const auto n_entries = r.int_arg(entries, 0);
  if (n_entries < 0) r.fail("negative entry count");
  ds.entries.reserve(static_cast<std::size_t>(n_entries));
  for (long long e = 0; e < n_entries; ++e) {
    const auto t = container::split_tokens(r.line());
    if (t.size() != 4) r.fail("entry needs 4 fields");
    ds.entries.push_back(Entry{static_cast<int>(r.int_arg(t, 0)), static_cast<int>(r.int_arg(t, 1)),
                               static_cast<int>(r.int_arg(t, 2)), r.real_arg(t, 3)});
  }
  try {
    ds.validate();
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  return ds;
}

void save_dataset(const std::string& path, const TensorDataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_dataset(out, ds);
}

TensorDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_dataset(in, path);
}

}  // namespace trajcast
