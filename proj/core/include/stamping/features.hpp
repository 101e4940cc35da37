#pragma once

// Segmental and statistical stroke features, standardization, PCA,
// mutual-information ranking and the four named feature sets.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stamping/linalg.hpp"
#include "stamping/segmentation.hpp"
#include "stamping/signals.hpp"

namespace stamping::features {

struct FeatureVector {
  std::vector<std::string> names;
  std::vector<double> values;

  /// Equal lengths, finite values, unique names.
  void validate() const;
  std::size_t size() const { return values.size(); }
  /// Throws DimensionError for unknown names.
  double at(std::string_view name) const;
  /// Copy restricted to `wanted`, in that order.
  FeatureVector select(const std::vector<std::string>& wanted) const;
};

/// Rows of feature values sharing one name list.
struct FeatureTable {
  std::vector<std::string> names;
  linalg::Matrix values;

  static FeatureTable from_rows(const std::vector<FeatureVector>& rows);
  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
  FeatureVector row(std::size_t r) const;
  FeatureTable select(const std::vector<std::string>& wanted) const;
  /// Header line of names, one line per row.
  void write_csv(const std::filesystem::path& path) const;
};

/// `{S2..S5}_{Length,P2P,Energy}`: Length in ms, P2P = max - min,
/// Energy = sum of squares. Empty stages give zeros.
FeatureVector extract_segmental_features(const signals::StrokeSignal& signal,
                                         const segmentation::StageSegmentation& seg);

const std::vector<std::string>& segmental_feature_names();
const std::vector<std::string>& statistical_feature_names();

struct StatisticalFeatures {
  FeatureVector features;
  /// Set when the spectrum carries no power; frequency features are then 0.
  bool spectrum_degenerate = false;
};

/// Whole-stroke control features: six time-domain and five frequency-domain
/// (from a Hann-window power spectrum).
StatisticalFeatures extract_statistical_features(const signals::StrokeSignal& signal);

class Standardizer {
 public:
  /// Fits per-column mean and population standard deviation. Zero-variance
  /// columns are dropped and listed in `dropped()`. Needs >= 2 rows.
  static Standardizer fit(const FeatureTable& table);

  FeatureVector apply(const FeatureVector& x) const;
  FeatureTable apply(const FeatureTable& table) const;

  const std::vector<std::string>& input_names() const { return input_names_; }
  const std::vector<std::string>& output_names() const { return output_names_; }
  const std::vector<std::string>& dropped() const { return dropped_; }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& stds() const { return stds_; }

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> input_names_;
  std::vector<std::size_t> retained_;  // indices into input_names_
  std::vector<std::string> output_names_;
  std::vector<std::string> dropped_;
  std::vector<double> means_;  // per retained column
  std::vector<double> stds_;
};

struct PcaModel {
  /// Maps raw inputs to the standardized space the components live in.
  /// Empty input names when the model was fitted on pre-standardized data.
  Standardizer standardizer;
  std::vector<std::string> input_names;
  std::vector<double> eigenvalues;  // all components, descending
  linalg::Matrix eigenvectors;      // orthonormal columns
  std::size_t k = 5;

  std::vector<std::string> component_names() const;  // f1..fk
  nlohmann::json to_json() const;
  static PcaModel from_json(const nlohmann::json& j);
};

/// Covariance Z^T Z / (m - 1) of the standardized table, symmetric
/// eigendecomposition, top-k retained.
PcaModel fit_pca(const FeatureTable& standardized, std::size_t k);

/// Standardizes `raw` and fits PCA on the result; the standardizer is kept in
/// the model.
PcaModel fit_pca_standardized(const FeatureTable& raw, std::size_t k);

/// C_j = v_j^T z for j = 1..k, named f1..fk.
FeatureVector project(const PcaModel& pca, const FeatureVector& standardized);

/// Standardizes with the model's own standardizer, then projects.
FeatureVector transform(const PcaModel& pca, const FeatureVector& raw);

/// Mutual information in nats between an equal-frequency binned feature and a
/// binary label.
double mutual_information(std::span<const double> feature, std::span<const int> labels, std::size_t bins = 8);

/// Equal-frequency bin index for every value (ties share a bin).
std::vector<std::size_t> equal_frequency_bins(std::span<const double> values, std::size_t bins);

std::vector<std::pair<std::string, double>> mutual_information_ranking(const FeatureTable& table,
                                                                       std::span<const int> labels,
                                                                       std::size_t bins = 8);

enum class FeatureSetKind { Proposed, Optimal, S2Only, Statistical };

std::string to_string(FeatureSetKind kind);
FeatureSetKind parse_feature_set(std::string_view text);
const std::vector<std::string>& feature_set_names(FeatureSetKind kind);
bool needs_pca(FeatureSetKind kind);
bool needs_segmentation(FeatureSetKind kind);

/// Builds one of the named sets. `segmental` is required unless the set is
/// statistical, `pca` whenever the set holds f-components.
FeatureVector assemble_feature_set(FeatureSetKind kind, const signals::StrokeSignal& signal,
                                   const segmentation::StageSegmentation* seg, const PcaModel* pca);

/// Same, from features already extracted for the stroke.
FeatureVector assemble_feature_set(FeatureSetKind kind, const FeatureVector* segmental,
                                   const FeatureVector* statistical, const PcaModel* pca);

/// A fitted mapping from extracted stroke features to the standardized input
/// of a classifier: optional PCA over the segmental features, set assembly,
/// final standardization.
struct FeatureSpace {
  FeatureSetKind kind = FeatureSetKind::Optimal;
  std::optional<PcaModel> pca;
  Standardizer output;

  /// `segmental` and `statistical` hold the training rows the set needs
  /// (either may be empty when unused).
  static FeatureSpace fit(FeatureSetKind kind, const FeatureTable& segmental, const FeatureTable& statistical,
                          std::size_t pca_components = 5);

  FeatureVector transform(const FeatureVector* segmental, const FeatureVector* statistical) const;

  nlohmann::json to_json() const;
  static FeatureSpace from_json(const nlohmann::json& j);
};

}  // namespace stamping::features
