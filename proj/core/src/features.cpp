#include "stamping/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "stamping/dsp.hpp"
#include "stamping/error.hpp"

namespace stamping::features {

using linalg::Matrix;
using segmentation::Stage;

void FeatureVector::validate() const {
  if (names.size() != values.size()) throw DimensionError("feature names and values differ in length");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!seen.insert(names[i]).second) throw ValidationError("duplicate feature name '" + names[i] + "'");
    if (!std::isfinite(values[i])) throw ValidationError("feature '" + names[i] + "' is not finite");
  }
}

double FeatureVector::at(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[i];
  throw DimensionError("no feature named '" + std::string(name) + "'");
}

FeatureVector FeatureVector::select(const std::vector<std::string>& wanted) const {
  FeatureVector out;
  out.names = wanted;
  out.values.reserve(wanted.size());
  for (const auto& w : wanted) out.values.push_back(at(w));
  return out;
}

FeatureTable FeatureTable::from_rows(const std::vector<FeatureVector>& rows) {
  FeatureTable t;
  if (rows.empty()) return t;
  t.names = rows.front().names;
  t.values = Matrix(rows.size(), t.names.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].names != t.names) throw DimensionError("feature rows have different names");
    std::copy(rows[r].values.begin(), rows[r].values.end(), t.values.row(r).begin());
  }
  return t;
}

FeatureVector FeatureTable::row(std::size_t r) const {
  const auto v = values.row(r);
  return {names, std::vector<double>(v.begin(), v.end())};
}

FeatureTable FeatureTable::select(const std::vector<std::string>& wanted) const {
  std::vector<std::size_t> idx;
  for (const auto& w : wanted) {
    auto it = std::find(names.begin(), names.end(), w);
    if (it == names.end()) throw DimensionError("no feature named '" + w + "'");
    idx.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  FeatureTable out;
  out.names = wanted;
  out.values = Matrix(rows(), wanted.size());
  for (std::size_t r = 0; r < rows(); ++r)
    for (std::size_t c = 0; c < idx.size(); ++c) out.values(r, c) = values(r, idx[c]);
  return out;
}

void FeatureTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t c = 0; c < cols(); ++c) out << (c ? "," : "") << values(r, c);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& segmental_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (int s = 2; s <= 5; ++s)
      for (const char* f : {"Length", "P2P", "Energy"}) n.push_back("S" + std::to_string(s) + "_" + f);
    return n;
  }();
  return names;
}

const std::vector<std::string>& statistical_feature_names() {
  static const std::vector<std::string> names{"mean",           "variance",
                                              "peak",           "p2p",
                                              "energy",         "rms",
                                              "spectral_density", "fundamental_frequency",
                                              "frequency_center", "bandwidth",
                                              "harmonic_ratio"};
  return names;
}

FeatureVector extract_segmental_features(const signals::StrokeSignal& signal,
                                         const segmentation::StageSegmentation& seg) {
  if (seg.length() != signal.samples.size()) throw DimensionError("segmentation does not match the signal length");
  FeatureVector fv;
  fv.names = segmental_feature_names();
  for (Stage s : {Stage::S2, Stage::S3, Stage::S4, Stage::S5}) {
    const auto slice = segmentation::stage_slice(signal, seg, s);
    double p2p = 0.0, energy = 0.0;
    if (!slice.empty()) {
      const auto [lo, hi] = std::minmax_element(slice.begin(), slice.end());
      p2p = *hi - *lo;
      for (double v : slice) energy += v * v;
    }
    fv.values.push_back(1000.0 * static_cast<double>(slice.size()) / signal.sample_rate_hz);
    fv.values.push_back(p2p);
    fv.values.push_back(energy);
  }
  return fv;
}

StatisticalFeatures extract_statistical_features(const signals::StrokeSignal& signal) {
  const auto& x = signal.samples;
  if (x.size() < 8) throw LengthError("statistical features need at least 8 samples");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0, energy = 0.0, peak = 0.0;
  for (double v : x) {
    var += (v - mean) * (v - mean);
    energy += v * v;
    peak = std::max(peak, std::abs(v));
  }
  var /= n;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());

  StatisticalFeatures out;
  out.features.names = statistical_feature_names();
  out.features.values = {mean, var, peak, *hi - *lo, energy, std::sqrt(energy / n)};

  const auto ps = dsp::power_spectrum(signal, dsp::Window::Hann);
  const double total = ps.total();
  if (!(total > 0.0)) {
    out.spectrum_degenerate = true;
    out.features.values.insert(out.features.values.end(), 5, 0.0);
    return out;
  }
  const std::size_t bins = ps.power.size();
  const double density = total / static_cast<double>(bins);

  double max_power = 0.0;
  for (std::size_t k = 0; k < bins; ++k)
    if (ps.freqs_hz[k] > 50.0) max_power = std::max(max_power, ps.power[k]);
  // Lowest bin within rounding of the maximum, so equal tones pick the lower one.
  std::size_t f0_bin = 0;
  for (std::size_t k = 0; k < bins; ++k)
    if (ps.freqs_hz[k] > 50.0 && ps.power[k] >= max_power * (1.0 - 1e-9)) {
      f0_bin = k;
      break;
    }
  const double f0 = ps.freqs_hz[f0_bin];

  double center = 0.0;
  for (std::size_t k = 0; k < bins; ++k) center += ps.freqs_hz[k] * ps.power[k];
  center /= total;
  double spread = 0.0;
  for (std::size_t k = 0; k < bins; ++k) spread += (ps.freqs_hz[k] - center) * (ps.freqs_hz[k] - center) * ps.power[k];
  const double bandwidth = std::sqrt(spread / total);

  std::set<std::size_t> harmonic_bins;
  const double df = ps.bin_width_hz();
  if (f0_bin > 0 && df > 0.0)
    for (int h = 2; h <= 5; ++h) {
      const auto centre = static_cast<long long>(std::llround(h * f0 / df));
      for (long long b = centre - 1; b <= centre + 1; ++b)
        if (b >= 0 && b < static_cast<long long>(bins)) harmonic_bins.insert(static_cast<std::size_t>(b));
    }
  double harmonic = 0.0;
  for (auto b : harmonic_bins) harmonic += ps.power[b];

  out.features.values.insert(out.features.values.end(), {density, f0, center, bandwidth, harmonic / total});
  return out;
}

// ---------------------------------------------------------------------------

Standardizer Standardizer::fit(const FeatureTable& table) {
  if (table.rows() < 2) throw ValidationError("standardizer needs at least 2 rows");
  Standardizer s;
  s.input_names_ = table.names;
  const double m = static_cast<double>(table.rows());
  for (std::size_t c = 0; c < table.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < table.rows(); ++r) mean += table.values(r, c);
    mean /= m;
    double var = 0.0;
    for (std::size_t r = 0; r < table.rows(); ++r) {
      const double d = table.values(r, c) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / m);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      s.dropped_.push_back(table.names[c]);
      continue;
    }
    s.retained_.push_back(c);
    s.output_names_.push_back(table.names[c]);
    s.means_.push_back(mean);
    s.stds_.push_back(sd);
  }
  return s;
}

FeatureVector Standardizer::apply(const FeatureVector& x) const {
  if (x.names != input_names_) throw DimensionError("feature vector does not match the standardizer's inputs");
  FeatureVector out;
  out.names = output_names_;
  out.values.resize(retained_.size());
  for (std::size_t i = 0; i < retained_.size(); ++i) out.values[i] = (x.values[retained_[i]] - means_[i]) / stds_[i];
  return out;
}

FeatureTable Standardizer::apply(const FeatureTable& table) const {
  if (table.names != input_names_) throw DimensionError("feature table does not match the standardizer's inputs");
  FeatureTable out;
  out.names = output_names_;
  out.values = Matrix(table.rows(), retained_.size());
  for (std::size_t r = 0; r < table.rows(); ++r)
    for (std::size_t i = 0; i < retained_.size(); ++i)
      out.values(r, i) = (table.values(r, retained_[i]) - means_[i]) / stds_[i];
  return out;
}

nlohmann::json Standardizer::to_json() const {
  return {{"input_names", input_names_}, {"retained", retained_}, {"dropped", dropped_},
          {"means", means_},             {"stds", stds_}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  Standardizer s;
  j.at("input_names").get_to(s.input_names_);
  j.at("retained").get_to(s.retained_);
  j.at("dropped").get_to(s.dropped_);
  j.at("means").get_to(s.means_);
  j.at("stds").get_to(s.stds_);
  if (s.means_.size() != s.retained_.size() || s.stds_.size() != s.retained_.size())
    throw ValidationError("standardizer arrays differ in length");
  for (auto i : s.retained_) {
    if (i >= s.input_names_.size()) throw ValidationError("standardizer column out of range");
    s.output_names_.push_back(s.input_names_[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------

std::vector<std::string> PcaModel::component_names() const {
  std::vector<std::string> n;
  for (std::size_t j = 1; j <= k; ++j) n.push_back("f" + std::to_string(j));
  return n;
}

nlohmann::json PcaModel::to_json() const {
  const auto d = eigenvectors.rows();
  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0; j < eigenvectors.cols(); ++j) cols.push_back(eigenvectors.column(j));
  return {{"standardizer", standardizer.to_json()},
          {"input_names", input_names},
          {"eigenvalues", eigenvalues},
          {"eigenvectors", cols},
          {"dimension", d},
          {"k", k}};
}

PcaModel PcaModel::from_json(const nlohmann::json& j) {
  PcaModel p;
  p.standardizer = Standardizer::from_json(j.at("standardizer"));
  j.at("input_names").get_to(p.input_names);
  j.at("eigenvalues").get_to(p.eigenvalues);
  j.at("k").get_to(p.k);
  const auto cols = j.at("eigenvectors").get<std::vector<std::vector<double>>>();
  const auto d = j.at("dimension").get<std::size_t>();
  if (cols.size() != p.eigenvalues.size() || d != p.input_names.size() || p.k > cols.size())
    throw ValidationError("PCA model arrays are inconsistent");
  p.eigenvectors = Matrix(d, cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c].size() != d) throw ValidationError("PCA eigenvector has the wrong dimension");
    for (std::size_t r = 0; r < d; ++r) p.eigenvectors(r, c) = cols[c][r];
  }
  return p;
}

PcaModel fit_pca(const FeatureTable& z, std::size_t k) {
  const std::size_t m = z.rows(), d = z.cols();
  if (m < 2) throw ValidationError("PCA needs at least 2 rows");
  if (k == 0 || k > d)
    throw DimensionError("requested " + std::to_string(k) + " components from " + std::to_string(d) + " columns");
  Matrix cov(d, d);
  for (std::size_t r = 0; r < m; ++r) {
    const auto row = z.values.row(r);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) cov(i, j) += row[i] * row[j];
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) /= static_cast<double>(m - 1);
      cov(j, i) = cov(i, j);
    }
  auto eig = linalg::symmetric_eigen(cov);
  PcaModel p;
  p.input_names = z.names;
  p.eigenvalues = std::move(eig.values);
  // Rounding can leave a rank-deficient tail marginally below zero.
  for (double& l : p.eigenvalues)
    if (l < 0.0) l = 0.0;
  p.eigenvectors = std::move(eig.vectors);
  p.k = k;
  return p;
}

PcaModel fit_pca_standardized(const FeatureTable& raw, std::size_t k) {
  auto standardizer = Standardizer::fit(raw);
  auto p = fit_pca(standardizer.apply(raw), k);
  p.standardizer = std::move(standardizer);
  return p;
}

FeatureVector project(const PcaModel& pca, const FeatureVector& z) {
  if (z.values.size() != pca.eigenvectors.rows())
    throw DimensionError("projection input has " + std::to_string(z.values.size()) + " values, model expects " +
                         std::to_string(pca.eigenvectors.rows()));
  FeatureVector out;
  out.names = pca.component_names();
  out.values.resize(pca.k);
  for (std::size_t j = 0; j < pca.k; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < z.values.size(); ++i) c += pca.eigenvectors(i, j) * z.values[i];
    out.values[j] = c;
  }
  return out;
}

FeatureVector transform(const PcaModel& pca, const FeatureVector& raw) {
  return project(pca, pca.standardizer.apply(raw));
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> equal_frequency_bins(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw ValidationError("bin count must be positive");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  const std::size_t n = sorted.size();
  for (std::size_t i = 1; i < bins; ++i) cuts.push_back(sorted[i * n / bins]);
  std::vector<std::size_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), values[i]) - cuts.begin());
  return out;
}

double mutual_information(std::span<const double> feature, std::span<const int> labels, std::size_t bins) {
  if (feature.size() != labels.size()) throw DimensionError("feature and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("labels must be binary (0/1)");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos < 2 || neg < 2) throw ValidationError("mutual information needs at least 2 samples of each class");

  const auto idx = equal_frequency_bins(feature, bins);
  std::vector<std::array<double, 2>> joint(bins, {0.0, 0.0});
  for (std::size_t i = 0; i < idx.size(); ++i) joint[idx[i]][static_cast<std::size_t>(labels[i])] += 1.0;
  const double n = static_cast<double>(labels.size());
  const double py[2] = {static_cast<double>(neg) / n, static_cast<double>(pos) / n};
  double mi = 0.0;
  for (const auto& cell : joint) {
    const double px = (cell[0] + cell[1]) / n;
    for (std::size_t y = 0; y < 2; ++y) {
      if (cell[y] == 0.0) continue;
      const double pxy = cell[y] / n;
      mi += pxy * std::log(pxy / (px * py[y]));
    }
  }
  return std::max(0.0, mi);
}

std::vector<std::pair<std::string, double>> mutual_information_ranking(const FeatureTable& table,
                                                                       std::span<const int> labels,
                                                                       std::size_t bins) {
  if (table.rows() != labels.size()) throw DimensionError("table rows and labels differ in length");
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t c = 0; c < table.cols(); ++c) {
    const auto col = table.values.column(c);
    out.emplace_back(table.names[c], mutual_information(col, labels, bins));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(FeatureSetKind kind) {
  switch (kind) {
    case FeatureSetKind::Proposed:
      return "proposed";
    case FeatureSetKind::Optimal:
      return "optimal";
    case FeatureSetKind::S2Only:
      return "s2_only";
    case FeatureSetKind::Statistical:
      return "statistical";
  }
  return "proposed";
}

FeatureSetKind parse_feature_set(std::string_view text) {
  for (auto k : {FeatureSetKind::Proposed, FeatureSetKind::Optimal, FeatureSetKind::S2Only,
                 FeatureSetKind::Statistical})
    if (text == to_string(k)) return k;
  throw ValidationError("unknown feature set '" + std::string(text) + "'");
}

const std::vector<std::string>& feature_set_names(FeatureSetKind kind) {
  static const std::vector<std::string> proposed = [] {
    auto n = segmental_feature_names();
    for (int j = 1; j <= 5; ++j) n.push_back("f" + std::to_string(j));
    return n;
  }();
  static const std::vector<std::string> optimal{"S2_Length", "S2_P2P", "S2_Energy", "S3_Energy",
                                                "S4_P2P",    "S5_Energy", "f3",      "f4"};
  static const std::vector<std::string> s2_only{"S2_Length", "S2_P2P", "S2_Energy"};
  switch (kind) {
    case FeatureSetKind::Proposed:
      return proposed;
    case FeatureSetKind::Optimal:
      return optimal;
    case FeatureSetKind::S2Only:
      return s2_only;
    case FeatureSetKind::Statistical:
      return statistical_feature_names();
  }
  return proposed;
}

bool needs_pca(FeatureSetKind kind) { return kind == FeatureSetKind::Proposed || kind == FeatureSetKind::Optimal; }
bool needs_segmentation(FeatureSetKind kind) { return kind != FeatureSetKind::Statistical; }

FeatureVector assemble_feature_set(FeatureSetKind kind, const FeatureVector* segmental,
                                   const FeatureVector* statistical, const PcaModel* pca) {
  const auto& names = feature_set_names(kind);
  if (kind == FeatureSetKind::Statistical) {
    if (!statistical) throw ValidationError("statistical feature set needs statistical features");
    return statistical->select(names);
  }
  if (!segmental) throw ValidationError("feature set '" + to_string(kind) + "' needs segmental features");
  FeatureVector pool = *segmental;
  if (needs_pca(kind)) {
    if (!pca) throw ValidationError("feature set '" + to_string(kind) + "' needs a PCA model");
    const auto comps = transform(*pca, segmental->select(pca->standardizer.input_names()));
    pool.names.insert(pool.names.end(), comps.names.begin(), comps.names.end());
    pool.values.insert(pool.values.end(), comps.values.begin(), comps.values.end());
  }
  return pool.select(names);
}

FeatureVector assemble_feature_set(FeatureSetKind kind, const signals::StrokeSignal& signal,
                                   const segmentation::StageSegmentation* seg, const PcaModel* pca) {
  if (kind == FeatureSetKind::Statistical) {
    const auto stats = extract_statistical_features(signal);
    return assemble_feature_set(kind, nullptr, &stats.features, pca);
  }
  if (!seg) throw ValidationError("feature set '" + to_string(kind) + "' needs a segmentation");
  const auto segmental = extract_segmental_features(signal, *seg);
  return assemble_feature_set(kind, &segmental, nullptr, pca);
}

FeatureSpace FeatureSpace::fit(FeatureSetKind kind, const FeatureTable& segmental, const FeatureTable& statistical,
                               std::size_t pca_components) {
  FeatureSpace space;
  space.kind = kind;
  const bool stat = kind == FeatureSetKind::Statistical;
  const FeatureTable& source = stat ? statistical : segmental;
  if (source.rows() < 2) throw ValidationError("feature space needs at least 2 training rows");
  if (needs_pca(kind)) space.pca = fit_pca_standardized(segmental, pca_components);

  std::vector<FeatureVector> rows;
  rows.reserve(source.rows());
  for (std::size_t r = 0; r < source.rows(); ++r) {
    const auto fv = source.row(r);
    rows.push_back(stat ? assemble_feature_set(kind, nullptr, &fv, nullptr)
                        : assemble_feature_set(kind, &fv, nullptr, space.pca ? &*space.pca : nullptr));
  }
  space.output = Standardizer::fit(FeatureTable::from_rows(rows));
  return space;
}

FeatureVector FeatureSpace::transform(const FeatureVector* segmental, const FeatureVector* statistical) const {
  return output.apply(assemble_feature_set(kind, segmental, statistical, pca ? &*pca : nullptr));
}

nlohmann::json FeatureSpace::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"output_standardizer", output.to_json()}};
  j["pca"] = pca ? pca->to_json() : nlohmann::json(nullptr);
  return j;
}

FeatureSpace FeatureSpace::from_json(const nlohmann::json& j) {
  FeatureSpace s;
  s.kind = parse_feature_set(j.at("kind").get<std::string>());
  s.output = Standardizer::from_json(j.at("output_standardizer"));
  if (!j.at("pca").is_null()) s.pca = PcaModel::from_json(j.at("pca"));
  if (needs_pca(s.kind) && !s.pca) throw ValidationError("feature space '" + to_string(s.kind) + "' lacks its PCA");
  return s;
}

}  // namespace stamping::features
