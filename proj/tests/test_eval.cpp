#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "model_fixture.hpp"
#include "stamping/error.hpp"
#include "stamping/eval.hpp"
#include "test_util.hpp"

using namespace stamping;
using namespace stamping::eval;
using linalg::Matrix;

namespace {

Matrix rows_of(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  return m;
}

const pipeline::DatasetFeatures& fixture_features(const pipeline::Preprocessing& prep) {
  static std::map<std::string, pipeline::DatasetFeatures> cache;
  const auto key = prep.to_json().dump();
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, pipeline::extract_dataset_features(testutil::trained_fixture().dataset, prep)).first;
  return it->second;
}

}  // namespace

TEST_CASE("confusion rates") {
  const ConfusionCounts a{14, 404, 4, 1};
  CHECK(100.0 * a.fpr() == doctest::Approx(0.98).epsilon(0.005));
  CHECK(100.0 * a.fnr() == doctest::Approx(6.67).epsilon(0.001));
  CHECK(a.total() == 423);
  CHECK(a.errors() == 5);
  const ConfusionCounts b{15, 408, 0, 0};
  CHECK(b.fpr() == 0.0);
  CHECK(b.fnr() == 0.0);
  CHECK(b.accuracy() == 1.0);
  CHECK(ConfusionCounts{}.fpr() == 0.0);
  CHECK(ConfusionCounts{}.accuracy() == 0.0);

  std::mt19937_64 rng(2);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> p(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) p[i] = coin(rng), y[i] = coin(rng);
    const auto c = confusion(p, y);
    CHECK(c.total() == 50);
    const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    CHECK(c.tp + c.fn == pos);
    CHECK(c.fp + c.tn == 50 - pos);
    if (pos) CHECK(c.fnr() == doctest::Approx(1.0 - static_cast<double>(c.tp) / pos));
    CHECK(c.accuracy() == doctest::Approx(1.0 - static_cast<double>(c.errors()) / 50.0));
  }
  CHECK_THROWS_AS(confusion(std::vector<int>{1}, std::vector<int>{1, 0}), DimensionError);
  CHECK_THROWS_AS(confusion(std::vector<int>{2}, std::vector<int>{1}), ValidationError);
}

TEST_CASE("k nearest neighbours") {
  const auto x = rows_of({{0, 0}, {0, 1}, {1, 0}, {5, 5}, {5, 6}, {6, 5}});
  const std::vector<int> y{0, 0, 0, 1, 1, 1};
  const auto knn = KnnClassifier::train(x, y, 3);
  CHECK(knn.predict(std::vector<double>{0.2, 0.2}) == 0);
  CHECK(knn.predict(std::vector<double>{5.2, 5.1}) == 1);
  for (std::size_t r = 0; r < 6; ++r) CHECK(KnnClassifier::train(x, y, 1).predict(x.row(r)) == y[r]);
  // Even k, split vote: anomaly wins.
  const auto two = KnnClassifier::train(rows_of({{0.0}, {2.0}}), {0, 1}, 2);
  CHECK(two.predict(std::vector<double>{1.0}) == 1);
  CHECK(two.predict(std::vector<double>{-10.0}) == 1);
  CHECK_THROWS_AS(KnnClassifier::train(x, y, 0), ValidationError);
  CHECK_THROWS_AS(KnnClassifier::train(x, y, 7), ValidationError);
  CHECK_THROWS_AS(knn.predict(std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("logistic objective gradient matches finite differences") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = testutil::random_matrix(40, 4, rng);
    std::vector<int> y(40);
    std::bernoulli_distribution coin(0.4);
    for (auto& v : y) v = coin(rng);
    const auto wm = testutil::random_matrix(1, 5, rng);
    std::vector<double> w(wm.row(0).begin(), wm.row(0).begin() + 4);
    const double b = wm(0, 4), l2 = 0.1;
    const auto obj = logreg_objective(x, y, l2, w, b);
    REQUIRE(obj.gradient.size() == 5);
    const double h = 1e-5;
    for (std::size_t j = 0; j < 5; ++j) {
      auto wp = w, wn = w;
      double bp = b, bn = b;
      if (j < 4)
        wp[j] += h, wn[j] -= h;
      else
        bp += h, bn -= h;
      const double fd = (logreg_objective(x, y, l2, wp, bp).value - logreg_objective(x, y, l2, wn, bn).value) / (2 * h);
      CHECK(std::abs(fd - obj.gradient[j]) < 1e-4);
    }
  }
}

TEST_CASE("logistic regression fits a separable toy") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 0.5);
  Matrix x(80, 2);
  std::vector<int> y(80);
  for (std::size_t r = 0; r < 80; ++r) {
    y[r] = r % 2;
    x(r, 0) = (y[r] ? 2.0 : -2.0) + g(rng);
    x(r, 1) = g(rng);
  }
  const auto lr = LogisticRegression::train(x, y, 1e-2);
  for (std::size_t r = 0; r < 80; ++r) CHECK(lr.predict(x.row(r)) == y[r]);
  CHECK(lr.weights()[0] > 0.0);
  const auto obj = logreg_objective(x, y, 1e-2, lr.weights(), lr.bias());
  double norm = 0.0;
  for (double v : obj.gradient) norm += v * v;
  CHECK(std::sqrt(norm) <= 1e-6);
  CHECK_THROWS_AS(LogisticRegression::train(x, y, 1e-2, {1e-12, 3}), ConvergenceError);
  const LogisticRegression fixed({1.0}, 0.0);
  CHECK(fixed.probability(std::vector<double>{0.0}) == 0.5);
  CHECK(fixed.predict(std::vector<double>{0.0}) == 0);
}

TEST_CASE("stratified folds") {
  std::vector<int> y(103);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 9 == 0;
  const auto folds = stratified_folds(y, 5, 3);
  REQUIRE(folds.size() == 5);
  std::set<std::size_t> seen;
  const auto pos_total = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  for (const auto& f : folds) {
    std::size_t pos = 0;
    for (auto i : f) {
      CHECK(seen.insert(i).second);
      pos += y[i];
    }
    CHECK(pos >= pos_total / 5);
    CHECK(pos <= pos_total / 5 + 1);
    CHECK(f.size() >= 103 / 5);
    CHECK(f.size() <= 103 / 5 + 1);
  }
  CHECK(seen.size() == 103);
  CHECK(stratified_folds(y, 5, 3) == folds);
  CHECK(stratified_folds(y, 5, 4) != folds);
  CHECK_THROWS_AS(stratified_folds(y, 1, 0), ValidationError);
}

TEST_CASE("feature comparison report") {
  const auto& fx = testutil::trained_fixture();
  ComparisonConfig cfg;
  cfg.seed = 5;
  cfg.feature_sets = {features::FeatureSetKind::S2Only, features::FeatureSetKind::Optimal};
  cfg.knn_k = {1, 3};
  cfg.logreg_l2 = {1e-2};
  const auto& extracted = fixture_features(cfg.preprocessing);
  const auto report = run_feature_comparison(fx.dataset, extracted, cfg);
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].classifier == "knn");
  CHECK(report.rows[0].feature_set == "optimal");
  CHECK(report.rows[3].classifier == "logreg");
  CHECK(report.rows[3].feature_set == "s2_only");
  for (const auto& r : report.rows) {
    CHECK(r.counts.tp + r.counts.fn == 6);  // round(20 * 2/7) test anomalies
    CHECK(r.cv_accuracy > 0.5);
    CHECK(r.seed == 5);
  }
  CHECK(report.find("logreg", "optimal").hyperparameters == "l2=0.01");
  CHECK_THROWS_AS(report.find("svm", "optimal"), Error);

  const auto again = run_feature_comparison(fx.dataset, extracted, cfg);
  CHECK(again.to_csv() == report.to_csv());
  CHECK(report.to_csv().rfind("classifier,feature_set,tp,tn,fp,fn,", 0) == 0);
  CHECK(report.format_table().find("FPR (%)") != std::string::npos);

  cfg.feature_sets = {features::FeatureSetKind::S2Only};
  cfg.classifiers = {ReferenceClassifier::Knn};
  cfg.knn_k = {1};
  const auto single = run_feature_comparison(fx.dataset, extracted, cfg);
  REQUIRE(single.rows.size() == 1);
  CHECK(single.rows[0].hyperparameters == "k=1");

  cfg.split.mode = signals::SplitMode::OneClass;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK(parse_classifier("logreg") == ReferenceClassifier::LogReg);
  CHECK_THROWS_AS(parse_classifier("tree"), ValidationError);
}

TEST_CASE("baseline evaluation on held-out strokes") {
  const auto& fx = testutil::trained_fixture();
  const auto direct = evaluate_baseline(fx.model, fx.dataset, fx.split.test);
  const auto& extracted = fixture_features(fx.model.preprocessing);
  const auto reused = evaluate_baseline(fx.model, fx.dataset, extracted, fx.split.test);
  CHECK(direct.counts == reused.counts);
  CHECK(direct.counts.tp + direct.counts.fn == 10);
  CHECK(direct.counts.total() == 40);
  for (std::size_t k = 0; k < direct.strokes.size(); ++k) {
    CHECK(direct.strokes[k].decision.score == reused.strokes[k].decision.score);
    CHECK(direct.strokes[k].stroke_id == fx.dataset.strokes[fx.split.test[k]].stroke_id);
  }
  const auto text = format_baseline_summary(direct);
  CHECK(text.find("test strokes: 40") != std::string::npos);
  CHECK(text.find("FPR") != std::string::npos);

  auto unlabeled = fx.dataset;
  unlabeled.strokes[fx.split.test[0]].label = signals::Label::Unlabeled;
  CHECK_THROWS_AS(evaluate_baseline(fx.model, unlabeled, {fx.split.test[0]}), ValidationError);
}
