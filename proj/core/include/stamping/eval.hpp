#pragma once

// Confusion metrics, KNN / logistic-regression reference classifiers, the
// feature-set comparison and the golden-baseline evaluation run.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stamping/baseline.hpp"
#include "stamping/features.hpp"
#include "stamping/linalg.hpp"
#include "stamping/pipeline.hpp"
#include "stamping/signals.hpp"

namespace stamping::eval {

/// Anomaly is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  std::size_t errors() const { return fp + fn; }
  /// fp / (fp + tn), 0 when there are no negatives.
  double fpr() const;
  /// fn / (fn + tp), 0 when there are no positives.
  double fnr() const;
  double accuracy() const;
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Predictions and labels are 0/1. Throws DimensionError on length mismatch.
ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);

class KnnClassifier {
 public:
  /// Throws ValidationError when k is 0 or exceeds the row count.
  static KnnClassifier train(linalg::Matrix x, std::vector<int> labels, std::size_t k);
  /// Majority over the k nearest (Euclidean) rows; ties go to the anomaly class.
  int predict(std::span<const double> x) const;
  std::size_t k() const { return k_; }

 private:
  linalg::Matrix x_;
  std::vector<int> y_;
  std::size_t k_ = 1;
};

struct LogRegOptions {
  double gradient_tolerance = 1e-6;
  std::size_t max_iterations = 200000;
};

class LogisticRegression {
 public:
  /// Maximizes mean log-likelihood - l2/2 |w|^2 (bias unpenalized) by
  /// accelerated gradient ascent. Throws ConvergenceError carrying the final
  /// gradient norm.
  static LogisticRegression train(const linalg::Matrix& x, std::span<const int> labels, double l2,
                                  const LogRegOptions& options = {});

  double probability(std::span<const double> x) const;
  int predict(std::span<const double> x) const { return probability(x) > 0.5 ? 1 : 0; }
  const std::vector<double>& weights() const { return w_; }
  double bias() const { return b_; }

  LogisticRegression() = default;
  LogisticRegression(std::vector<double> w, double b) : w_(std::move(w)), b_(b) {}

 private:
  std::vector<double> w_;
  double b_ = 0.0;
};

/// Objective value and gradient (weights, then bias) of the regularized mean
/// log-likelihood at (w, b).
struct LogRegObjective {
  double value = 0.0;
  std::vector<double> gradient;
};
LogRegObjective logreg_objective(const linalg::Matrix& x, std::span<const int> labels, double l2,
                                 std::span<const double> w, double b);

/// Stratified assignment of indices 0..n-1 to `k` folds, shuffled by `seed`.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, std::size_t k,
                                                       std::uint64_t seed);

enum class ReferenceClassifier { Knn, LogReg };
std::string to_string(ReferenceClassifier c);
ReferenceClassifier parse_classifier(std::string_view text);

struct ReportRow {
  std::string classifier;
  std::string feature_set;
  ConfusionCounts counts;
  std::string hyperparameters;
  double cv_accuracy = 0.0;
  std::uint64_t seed = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;

  /// Throws Error when no row matches.
  const ReportRow& find(std::string_view classifier, std::string_view feature_set) const;
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
  /// Columns: model, feature set, TP, TN, FP, FN, FPR (%), FNR (%).
  std::string format_table() const;
};

struct ComparisonConfig {
  pipeline::Preprocessing preprocessing = [] {
    pipeline::Preprocessing p;
    p.mode = dsp::FilterMode::ZeroPhase;
    return p;
  }();
  signals::SplitSpec split = [] {
    signals::SplitSpec s;
    s.mode = signals::SplitMode::Supervised;
    return s;
  }();
  std::vector<features::FeatureSetKind> feature_sets{
      features::FeatureSetKind::Proposed, features::FeatureSetKind::Optimal, features::FeatureSetKind::S2Only,
      features::FeatureSetKind::Statistical};
  std::vector<ReferenceClassifier> classifiers{ReferenceClassifier::Knn, ReferenceClassifier::LogReg};
  std::vector<std::size_t> knn_k{1, 3, 5, 7, 9};
  std::vector<double> logreg_l2{1e-3, 1e-2, 1e-1, 1.0};
  std::size_t folds = 5;
  std::size_t pca_components = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Supervised split with normal subsampling, per (classifier, feature set)
/// grid search by k-fold cross-validated accuracy on the training subset,
/// refit, one evaluation on test. Rows sorted by (classifier, feature set).
ExperimentReport run_feature_comparison(const signals::StrokeDataset& dataset, const ComparisonConfig& config);

/// Same, with features already extracted using `config.preprocessing`.
ExperimentReport run_feature_comparison(const signals::StrokeDataset& dataset,
                                        const pipeline::DatasetFeatures& extracted, const ComparisonConfig& config);

struct ScoredStroke {
  std::size_t index = 0;  // into the dataset
  std::string stroke_id;
  int label = 0;
  baseline::Decision decision;
};

struct BaselineEvaluation {
  ConfusionCounts counts;
  std::vector<ScoredStroke> strokes;
};

/// Scores labeled strokes at `indices` with the model.
BaselineEvaluation evaluate_baseline(const baseline::BaselineModel& model, const signals::StrokeDataset& dataset,
                                     const std::vector<std::size_t>& indices);

/// Same, from features extracted with the model's preprocessing.
BaselineEvaluation evaluate_baseline(const baseline::BaselineModel& model, const signals::StrokeDataset& dataset,
                                     const pipeline::DatasetFeatures& extracted,
                                     const std::vector<std::size_t>& indices);

/// Text summary of a one-class test evaluation: counts, rates and the
/// misclassified strokes.
std::string format_baseline_summary(const BaselineEvaluation& evaluation);

}  // namespace stamping::eval
