#include "stamping/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "stamping/error.hpp"

namespace stamping::eval {

using linalg::Matrix;

double ConfusionCounts::fpr() const { return fp + tn ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0; }
double ConfusionCounts::fnr() const { return fn + tp ? static_cast<double>(fn) / static_cast<double>(fn + tp) : 0.0; }
double ConfusionCounts::accuracy() const {
  return total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : 0.0;
}

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("predictions and labels differ in length");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw ValidationError("predictions and labels must be 0/1");
    if (y == 1)
      (p ? c.tp : c.fn)++;
    else
      (p ? c.fp : c.tn)++;
  }
  return c;
}

// ---------------------------------------------------------------------------

KnnClassifier KnnClassifier::train(Matrix x, std::vector<int> labels, std::size_t k) {
  if (x.rows() != labels.size()) throw DimensionError("training rows and labels differ in length");
  if (k == 0 || k > x.rows())
    throw ValidationError("k = " + std::to_string(k) + " with " + std::to_string(x.rows()) + " training rows");
  KnnClassifier c;
  c.x_ = std::move(x);
  c.y_ = std::move(labels);
  c.k_ = k;
  return c;
}

int KnnClassifier::predict(std::span<const double> x) const {
  if (x.size() != x_.cols()) throw DimensionError("KNN input has the wrong dimension");
  std::vector<std::pair<double, std::size_t>> dist(x_.rows());
  for (std::size_t r = 0; r < x_.rows(); ++r) {
    const auto row = x_.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) s += (row[c] - x[c]) * (row[c] - x[c]);
    dist[r] = {s, r};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
  std::size_t anomalies = 0;
  for (std::size_t i = 0; i < k_; ++i) anomalies += y_[dist[i].second] == 1;
  return 2 * anomalies >= k_ ? 1 : 0;
}

// ---------------------------------------------------------------------------

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

LogRegObjective logreg_objective(const Matrix& x, std::span<const int> labels, double l2, std::span<const double> w,
                                 double b) {
  const std::size_t n = x.rows(), d = x.cols();
  if (labels.size() != n || w.size() != d) throw DimensionError("logistic regression dimensions do not match");
  LogRegObjective out;
  out.gradient.assign(d + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(i);
    const double z = linalg::dot(row, w) + b;
    const double y = labels[i];
    out.value += y * z - softplus(z);
    const double r = y - sigmoid(z);
    for (std::size_t j = 0; j < d; ++j) out.gradient[j] += r * row[j];
    out.gradient[d] += r;
  }
  const double inv = 1.0 / static_cast<double>(n);
  out.value *= inv;
  for (auto& g : out.gradient) g *= inv;
  double ww = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    ww += w[j] * w[j];
    out.gradient[j] -= l2 * w[j];
  }
  out.value -= 0.5 * l2 * ww;
  return out;
}

LogisticRegression LogisticRegression::train(const Matrix& x, std::span<const int> labels, double l2,
                                             const LogRegOptions& options) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0 || labels.size() != n) throw DimensionError("logistic regression needs one label per row");
  if (!(l2 >= 0.0)) throw ValidationError("l2 must be non-negative");
  bool pos = false, neg = false;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("labels must be 0/1");
    (y ? pos : neg) = true;
  }
  if (!pos || !neg) throw ValidationError("logistic regression needs both classes");

  double sq = 0.0;
  for (double v : x.data()) sq += v * v;
  const double lipschitz = 0.25 * (sq / static_cast<double>(n) + 1.0) + l2;
  const double step = 1.0 / lipschitz;

  std::vector<double> theta(d + 1, 0.0), prev = theta, look(d + 1);
  double momentum = 1.0;
  double grad_norm = 0.0;
  auto eval_at = [&](const std::vector<double>& t) {
    return logreg_objective(x, labels, l2, std::span<const double>(t.data(), d), t[d]);
  };
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    const auto here = eval_at(theta);
    grad_norm = norm(here.gradient);
    if (grad_norm < options.gradient_tolerance) return LogisticRegression({theta.begin(), theta.end() - 1}, theta[d]);

    const double next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    const double beta = (momentum - 1.0) / next_momentum;
    for (std::size_t j = 0; j <= d; ++j) look[j] = theta[j] + beta * (theta[j] - prev[j]);
    const auto at_look = eval_at(look);
    std::vector<double> next(d + 1);
    for (std::size_t j = 0; j <= d; ++j) next[j] = look[j] + step * at_look.gradient[j];
    // Restart the momentum when the step stops climbing.
    double progress = 0.0;
    for (std::size_t j = 0; j <= d; ++j) progress += at_look.gradient[j] * (next[j] - theta[j]);
    prev = theta;
    theta = std::move(next);
    momentum = progress < 0.0 ? 1.0 : next_momentum;
  }
  throw ConvergenceError("logistic regression did not reach the gradient tolerance", grad_norm);
}

double LogisticRegression::probability(std::span<const double> x) const {
  if (x.size() != w_.size()) throw DimensionError("logistic regression input has the wrong dimension");
  return sigmoid(linalg::dot(x, w_) + b_);
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, std::size_t k,
                                                       std::uint64_t seed) {
  if (k < 2) throw ValidationError("cross-validation needs at least 2 folds");
  std::vector<std::vector<std::size_t>> folds(k);
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (auto i : idx) folds[next++ % k].push_back(i);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::string to_string(ReferenceClassifier c) { return c == ReferenceClassifier::Knn ? "knn" : "logreg"; }

ReferenceClassifier parse_classifier(std::string_view text) {
  if (text == "knn") return ReferenceClassifier::Knn;
  if (text == "logreg") return ReferenceClassifier::LogReg;
  throw ValidationError("unknown classifier '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------

const ReportRow& ExperimentReport::find(std::string_view classifier, std::string_view feature_set) const {
  for (const auto& r : rows)
    if (r.classifier == classifier && r.feature_set == feature_set) return r;
  throw Error("report has no row for " + std::string(classifier) + "/" + std::string(feature_set));
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream out;
  out << "classifier,feature_set,tp,tn,fp,fn,fpr,fnr,hyperparameters,cv_accuracy,seed\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.classifier << ',' << r.feature_set << ',' << r.counts.tp << ',' << r.counts.tn << ',' << r.counts.fp
        << ',' << r.counts.fn << ',';
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.counts.fpr(), r.counts.fnr());
    out << buf << ',' << r.hyperparameters << ',';
    std::snprintf(buf, sizeof buf, "%.6f", r.cv_accuracy);
    out << buf << ',' << r.seed << '\n';
  }
  return out.str();
}

void ExperimentReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_csv();
}

std::string ExperimentReport::format_table() const {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %-12s %5s %5s %5s %5s %8s %8s  %s\n", "Model", "Features", "TP", "TN", "FP",
                "FN", "FPR (%)", "FNR (%)", "Params");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-8s %-12s %5zu %5zu %5zu %5zu %8.2f %8.2f  %s\n", r.classifier.c_str(),
                  r.feature_set.c_str(), r.counts.tp, r.counts.tn, r.counts.fp, r.counts.fn, 100.0 * r.counts.fpr(),
                  100.0 * r.counts.fnr(), r.hyperparameters.c_str());
    out << buf;
  }
  return out.str();
}

void ComparisonConfig::validate() const {
  preprocessing.validate();
  split.validate();
  if (split.mode != signals::SplitMode::Supervised) throw ValidationError("feature comparison needs a supervised split");
  if (feature_sets.empty() || classifiers.empty()) throw ValidationError("nothing to compare");
  if (knn_k.empty() || logreg_l2.empty()) throw ValidationError("classifier grids must not be empty");
  if (folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
}

namespace {

struct Fitted {
  ReferenceClassifier kind;
  KnnClassifier knn;
  LogisticRegression lr;

  int predict(std::span<const double> x) const {
    return kind == ReferenceClassifier::Knn ? knn.predict(x) : lr.predict(x);
  }
};

Matrix take_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = x.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Fitted fit(ReferenceClassifier kind, const Matrix& x, const std::vector<int>& y, double param) {
  Fitted f{kind, {}, {}};
  if (kind == ReferenceClassifier::Knn)
    f.knn = KnnClassifier::train(x, y, static_cast<std::size_t>(param));
  else
    f.lr = LogisticRegression::train(x, y, param);
  return f;
}

std::string describe(ReferenceClassifier kind, double param) {
  char buf[48];
  if (kind == ReferenceClassifier::Knn)
    std::snprintf(buf, sizeof buf, "k=%zu", static_cast<std::size_t>(param));
  else
    std::snprintf(buf, sizeof buf, "l2=%g", param);
  return buf;
}

}  // namespace

ExperimentReport run_feature_comparison(const signals::StrokeDataset& dataset, const ComparisonConfig& config) {
  config.validate();
  return run_feature_comparison(dataset, pipeline::extract_dataset_features(dataset, config.preprocessing), config);
}

ExperimentReport run_feature_comparison(const signals::StrokeDataset& dataset,
                                        const pipeline::DatasetFeatures& extracted, const ComparisonConfig& config) {
  config.validate();
  auto spec = config.split;
  spec.seed = config.seed;
  const auto split = signals::split_dataset(dataset, spec);
  auto label_of = [&](std::size_t i) {
    const auto l = dataset.strokes.at(i).label;
    if (l == signals::Label::Unlabeled) throw ValidationError("feature comparison needs labeled strokes");
    return l == signals::Label::Anomaly ? 1 : 0;
  };

  ExperimentReport report;
  for (auto kind : config.feature_sets) {
    const bool seg = features::needs_segmentation(kind);
    std::vector<std::size_t> train_idx;
    for (auto i : split.train)
      if (!seg || extracted.segmental_row[i] >= 0) train_idx.push_back(i);

    std::vector<features::FeatureVector> seg_rows, stat_rows;
    for (auto i : train_idx) {
      if (seg) seg_rows.push_back(extracted.segmental.row(static_cast<std::size_t>(extracted.segmental_row[i])));
      stat_rows.push_back(extracted.statistical.row(i));
    }
    auto seg_table = features::FeatureTable::from_rows(seg_rows);
    const auto space = features::FeatureSpace::fit(kind, seg_table, features::FeatureTable::from_rows(stat_rows),
                                                   config.pca_components);
    auto transform = [&](std::size_t i) {
      features::FeatureVector s, t = extracted.statistical.row(i);
      if (seg) s = extracted.segmental.row(static_cast<std::size_t>(extracted.segmental_row[i]));
      return space.transform(seg ? &s : nullptr, &t).values;
    };

    Matrix x(train_idx.size(), space.output.output_names().size());
    std::vector<int> y;
    for (std::size_t r = 0; r < train_idx.size(); ++r) {
      const auto v = transform(train_idx[r]);
      std::copy(v.begin(), v.end(), x.row(r).begin());
      y.push_back(label_of(train_idx[r]));
    }
    const auto folds = stratified_folds(y, config.folds, config.seed);

    for (auto cls : config.classifiers) {
      std::vector<double> grid;
      if (cls == ReferenceClassifier::Knn)
        for (auto k : config.knn_k) grid.push_back(static_cast<double>(k));
      else
        grid = config.logreg_l2;

      double best_acc = -1.0, best_param = grid.front();
      for (double param : grid) {
        std::size_t correct = 0, seen = 0;
        bool feasible = true;
        for (std::size_t f = 0; f < folds.size() && feasible; ++f) {
          std::vector<std::size_t> tr;
          for (std::size_t g = 0; g < folds.size(); ++g)
            if (g != f) tr.insert(tr.end(), folds[g].begin(), folds[g].end());
          std::vector<int> ytr;
          for (auto r : tr) ytr.push_back(y[r]);
          if (cls == ReferenceClassifier::Knn && static_cast<std::size_t>(param) > tr.size()) {
            feasible = false;
            break;
          }
          const auto model = fit(cls, take_rows(x, tr), ytr, param);
          for (auto r : folds[f]) {
            correct += model.predict(x.row(r)) == y[r];
            ++seen;
          }
        }
        if (!feasible || seen == 0) continue;
        const double acc = static_cast<double>(correct) / static_cast<double>(seen);
        if (acc > best_acc) best_acc = acc, best_param = param;
      }
      if (best_acc < 0.0) throw ValidationError("no feasible grid point for " + to_string(cls));

      const auto model = fit(cls, x, y, best_param);
      std::vector<int> pred, truth;
      for (auto i : split.test) {
        truth.push_back(label_of(i));
        if (seg && extracted.segmental_row[i] < 0) {
          pred.push_back(1);
          continue;
        }
        pred.push_back(model.predict(transform(i)));
      }
      report.rows.push_back({to_string(cls), features::to_string(kind), confusion(pred, truth),
                             describe(cls, best_param), best_acc, config.seed});
    }
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return a.classifier != b.classifier ? a.classifier < b.classifier : a.feature_set < b.feature_set;
  });
  return report;
}

// ---------------------------------------------------------------------------

BaselineEvaluation evaluate_baseline(const baseline::BaselineModel& model, const signals::StrokeDataset& dataset,
                                     const std::vector<std::size_t>& indices) {
  BaselineEvaluation out;
  std::vector<int> pred, truth;
  for (auto i : indices) {
    const auto& s = dataset.strokes.at(i);
    if (s.label == signals::Label::Unlabeled) throw ValidationError("evaluation needs labeled strokes");
    const auto r = baseline::score_stroke(model, s);
    const int y = s.label == signals::Label::Anomaly ? 1 : 0;
    out.strokes.push_back({i, s.stroke_id, y, r.decision});
    pred.push_back(r.decision.is_anomaly ? 1 : 0);
    truth.push_back(y);
  }
  out.counts = confusion(pred, truth);
  return out;
}

BaselineEvaluation evaluate_baseline(const baseline::BaselineModel& model, const signals::StrokeDataset& dataset,
                                     const pipeline::DatasetFeatures& extracted,
                                     const std::vector<std::size_t>& indices) {
  BaselineEvaluation out;
  std::vector<int> pred, truth;
  for (auto i : indices) {
    const auto& s = dataset.strokes.at(i);
    if (s.label == signals::Label::Unlabeled) throw ValidationError("evaluation needs labeled strokes");
    pipeline::StrokeFeatures f;
    f.statistical = extracted.statistical.row(i);
    if (extracted.segmental_row[i] >= 0)
      f.segmental = extracted.segmental.row(static_cast<std::size_t>(extracted.segmental_row[i]));
    const auto d = baseline::classify(model, f);
    const int y = s.label == signals::Label::Anomaly ? 1 : 0;
    out.strokes.push_back({i, s.stroke_id, y, d});
    pred.push_back(d.is_anomaly ? 1 : 0);
    truth.push_back(y);
  }
  out.counts = confusion(pred, truth);
  return out;
}

std::string format_baseline_summary(const BaselineEvaluation& e) {
  const auto& c = e.counts;
  std::ostringstream out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "test strokes: %zu (normal %zu, anomaly %zu)\n", c.total(), c.tn + c.fp, c.tp + c.fn);
  out << buf;
  std::snprintf(buf, sizeof buf, "                predicted normal  predicted anomaly\n");
  out << buf;
  std::snprintf(buf, sizeof buf, "actual normal   %16zu  %17zu\n", c.tn, c.fp);
  out << buf;
  std::snprintf(buf, sizeof buf, "actual anomaly  %16zu  %17zu\n", c.fn, c.tp);
  out << buf;
  std::snprintf(buf, sizeof buf, "FPR %.2f%%  FNR %.2f%%\n", 100.0 * c.fpr(), 100.0 * c.fnr());
  out << buf;
  for (const auto& s : e.strokes) {
    if ((s.decision.is_anomaly ? 1 : 0) == s.label) continue;
    std::snprintf(buf, sizeof buf, "  %s %s: score %.4f\n", s.label ? "FN" : "FP", s.stroke_id.c_str(),
                  s.decision.score);
    out << buf;
  }
  return out.str();
}

}  // namespace stamping::eval
