#pragma once

// One-class "golden baseline": nu-SVM trained on normal strokes, logistic
// score calibration, thresholded decisions and the persisted model file.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stamping/features.hpp"
#include "stamping/linalg.hpp"
#include "stamping/pipeline.hpp"
#include "stamping/signals.hpp"

namespace stamping::baseline {

enum class KernelKind { Linear, Rbf };

std::string to_string(KernelKind kind);
KernelKind parse_kernel(std::string_view text);

struct KernelSpec {
  KernelKind kind = KernelKind::Rbf;
  double gamma = 0.0;  // rbf only; <= 0 means 1 / feature count at training time

  void validate() const;
  double operator()(std::span<const double> a, std::span<const double> b) const;
  nlohmann::json to_json() const;
  static KernelSpec from_json(const nlohmann::json& j);
};

struct SolverOptions {
  /// Stop when the maximal violating pair gap falls below this.
  double tolerance = 1e-9;
  std::size_t max_iterations = 1'000'000;
};

struct SolverStats {
  std::size_t iterations = 0;
  double kkt_gap = 0.0;
  double dual_objective = 0.0;
};

/// d(x) = sum_j alpha_j K(sv_j, x) - rho, positive on the normal side.
struct OneClassSvm {
  KernelSpec kernel;
  double nu = 0.05;
  std::size_t n_train = 0;
  linalg::Matrix support_vectors;  // one row per support vector
  std::vector<double> alphas;
  double rho = 0.0;
  SolverStats stats;

  std::size_t dimension() const { return support_vectors.cols(); }
  double upper_bound() const { return 1.0 / (nu * static_cast<double>(n_train)); }
  nlohmann::json to_json() const;
  static OneClassSvm from_json(const nlohmann::json& j);
};

/// Dual: min 1/2 a^T Q a s.t. 0 <= a_i <= 1/(nu n), sum a_i = 1, solved by
/// maximal-violating-pair SMO. Throws ValidationError for n < 2, nu outside
/// (0, 1] or nu n < 1, and ConvergenceError at the iteration cap.
OneClassSvm train_one_class(const linalg::Matrix& x, double nu, KernelSpec kernel, const SolverOptions& options = {});

/// Full dual solution (one alpha per training row), for diagnostics.
struct DualSolution {
  std::vector<double> alphas;
  std::vector<double> gradient;  // Q alpha
  double rho = 0.0;
  SolverStats stats;
};
DualSolution solve_dual(const linalg::Matrix& x, double nu, const KernelSpec& kernel, const SolverOptions& options = {});

double decision_distance(const OneClassSvm& svm, std::span<const double> x);

struct Calibration {
  double a = 1.0;
  double b = 0.0;

  /// 1 / (1 + exp(a d + b)); +inf maps to 0 and -inf to 1.
  double score(double distance) const;
};

/// Maximum-likelihood logistic fit (anomaly = 1) with prior-smoothed targets.
/// Throws CalibrationError when a class is missing, the distances are all
/// equal, or the fitted slope is not positive.
Calibration fit_calibration(std::span<const double> distances, std::span<const int> labels);

struct Decision {
  std::optional<double> raw_distance;  // empty when the stroke could not be segmented
  double score = 1.0;
  bool is_anomaly = true;
  double threshold_used = 0.5;
};

nlohmann::json to_json(const Decision& d);

struct BaselineModel {
  static constexpr int kFormatVersion = 1;

  pipeline::Preprocessing preprocessing;
  features::FeatureSpace feature_space;
  OneClassSvm svm;
  std::optional<Calibration> calibration;
  double threshold = 0.5;
  std::string trained_at;  // ISO-8601 UTC
  nlohmann::json training;  // seed, split and tuning record

  nlohmann::json to_json() const;
  static BaselineModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  /// Loads the model and, when present, the threshold sidecar next to it.
  static BaselineModel load(const std::filesystem::path& path);
};

/// `<model>.threshold.json`
std::filesystem::path threshold_sidecar_path(const std::filesystem::path& model_path);
void write_threshold_sidecar(const std::filesystem::path& model_path, double threshold);

/// Classifies an already-assembled, standardized feature vector.
/// Throws CalibrationError for an uncalibrated model and ValidationError for
/// a threshold outside [0, 1].
Decision classify(const BaselineModel& model, std::span<const double> x, std::optional<double> threshold = {});

/// Decision for a stroke whose features are already extracted. Unsegmented
/// strokes get score 1 and no distance.
Decision classify(const BaselineModel& model, const pipeline::StrokeFeatures& features,
                  std::optional<double> threshold = {});

/// Model-space feature vector for an extracted stroke; empty when the stroke
/// did not segment but the feature set needs it.
std::optional<std::vector<double>> model_input(const BaselineModel& model, const pipeline::StrokeFeatures& features);

struct StrokeDecision {
  Decision decision;
  pipeline::StrokeFeatures features;
};

/// Full pipeline for one raw stroke.
StrokeDecision score_stroke(const BaselineModel& model, const signals::StrokeSignal& stroke,
                            std::optional<double> threshold = {}, bool keep_filtered = false);

struct TuningGrid {
  std::vector<double> nu{0.005, 0.01, 0.02, 0.05};
  std::vector<double> gamma{0.01, 0.03, 0.1, 0.3};
  std::vector<double> threshold{0.5};

  void validate() const;
  nlohmann::json to_json() const;
  static TuningGrid from_json(const nlohmann::json& j);
};

struct GridPoint {
  double nu = 0.0;
  double gamma = 0.0;
  double threshold = 0.0;
  std::size_t fp = 0, fn = 0;
  double fpr = 0.0, fnr = 0.0;
  std::string error;  // non-empty when training or calibration failed
};

struct TuningResult {
  GridPoint best;
  std::vector<GridPoint> grid;
};

/// Validation input for tuning: model-space vectors for segmented strokes
/// plus labels of the strokes that did not segment (always flagged).
struct ValidationSet {
  linalg::Matrix x;
  std::vector<int> labels;
  std::vector<int> unsegmented_labels;
};

/// Exhaustive grid search minimizing FNR + FPR on validation; ties go to the
/// lower FPR, then the smaller gamma, then the smaller nu. The returned model
/// is trained with the winning (nu, gamma), calibrated on validation and
/// carries the winning threshold.
std::pair<BaselineModel, TuningResult> tune_hyperparameters(const BaselineModel& base, const linalg::Matrix& train,
                                                            const ValidationSet& validation, const TuningGrid& grid,
                                                            const SolverOptions& options = {});

struct TrainConfig {
  pipeline::Preprocessing preprocessing;
  features::FeatureSetKind feature_set = features::FeatureSetKind::Optimal;
  std::size_t pca_components = 5;
  KernelKind kernel = KernelKind::Rbf;
  TuningGrid grid;
  SolverOptions solver;
};

struct TrainReport {
  TuningResult tuning;
  std::size_t train_used = 0;
  std::size_t train_skipped = 0;  // training normals that did not segment
};

/// Feature extraction, feature-space fit on training normals, grid-tuned
/// one-class model and calibration. `split.train` must hold normals only.
std::pair<BaselineModel, TrainReport> train_baseline(const signals::StrokeDataset& dataset,
                                                     const signals::DatasetSplit& split, const TrainConfig& config);

/// Same, reusing features already extracted with `config.preprocessing`.
std::pair<BaselineModel, TrainReport> train_baseline(const signals::StrokeDataset& dataset,
                                                     const pipeline::DatasetFeatures& extracted,
                                                     const signals::DatasetSplit& split, const TrainConfig& config);

}  // namespace stamping::baseline
