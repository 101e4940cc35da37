#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "model_fixture.hpp"
#include "oracles.hpp"
#include "stamping/baseline.hpp"
#include "stamping/error.hpp"
#include "test_util.hpp"

using namespace stamping;
using namespace stamping::baseline;
using linalg::Matrix;
using namespace testutil;

namespace {

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("kernels") {
  const std::vector<double> a{1.0, 2.0}, b{3.0, -1.0};
  CHECK(KernelSpec{KernelKind::Linear, 0.0}(a, b) == 1.0);
  CHECK(KernelSpec{KernelKind::Rbf, 0.5}(a, b) == doctest::Approx(std::exp(-0.5 * 13.0)).epsilon(1e-15));
  CHECK(KernelSpec{KernelKind::Rbf, 0.5}(a, a) == 1.0);
  CHECK_THROWS_AS((KernelSpec{KernelKind::Rbf, 0.0}.validate()), ValidationError);
  CHECK(parse_kernel(to_string(KernelKind::Linear)) == KernelKind::Linear);
  CHECK_THROWS_AS(parse_kernel("poly"), ValidationError);
}

TEST_CASE("dual solution matches a projected-gradient oracle") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> nu_dist(0.2, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 7);
    const auto x = testutil::random_matrix(n, 3, rng);
    const double nu = std::max(nu_dist(rng), 1.0 / static_cast<double>(n));
    const KernelSpec k{KernelKind::Rbf, 0.3};
    const auto sol = solve_dual(x, nu, k);
    const auto q = gram(x, k);
    const auto ref = brute_force_dual(q, n, 1.0 / (nu * static_cast<double>(n)));
    CHECK(dual_objective(q, sol.alphas) <= dual_objective(q, ref) + 1e-10);
    CHECK(sol.stats.dual_objective == doctest::Approx(dual_objective(q, sol.alphas)).epsilon(1e-9));
    // Q is positive definite for distinct points, so the minimizer is unique.
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(sol.alphas[i] - ref[i]) < 1e-5);
  }
}

TEST_CASE("dual feasibility, KKT conditions and the nu property") {
  std::mt19937_64 rng(41);
  for (double nu : {0.05, 0.1, 0.3, 0.7}) {
    for (auto kind : {KernelKind::Rbf, KernelKind::Linear}) {
      const std::size_t n = 120;
      const auto x = testutil::random_matrix(n, 4, rng);
      const KernelSpec k{kind, 0.25};
      const auto sol = solve_dual(x, nu, k);
      const double c = 1.0 / (nu * n);
      const double sum = std::accumulate(sol.alphas.begin(), sol.alphas.end(), 0.0);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      std::size_t support = 0, bounded = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double a = sol.alphas[i];
        REQUIRE(a >= 0.0);
        REQUIRE(a <= c * (1.0 + 1e-12));
        const double slack = 1e-8;
        if (a == 0.0)
          CHECK(sol.gradient[i] >= sol.rho - slack);
        else if (a >= c)
          CHECK(sol.gradient[i] <= sol.rho + slack);
        else
          CHECK(std::abs(sol.gradient[i] - sol.rho) <= slack);
        support += a > 0.0;
        bounded += a >= c;
      }
      CHECK(static_cast<double>(support) >= nu * n - 1e-9);
      CHECK(static_cast<double>(bounded) <= nu * n + 1e-9);
      CHECK(sol.stats.kkt_gap <= 1e-9);
    }
  }
}

TEST_CASE("training is invariant to row order") {
  std::mt19937_64 rng(5);
  const auto x = testutil::random_matrix(60, 3, rng);
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix xp(60, 3);
  for (std::size_t r = 0; r < 60; ++r) std::copy(x.row(perm[r]).begin(), x.row(perm[r]).end(), xp.row(r).begin());
  const auto a = train_one_class(x, 0.1, {KernelKind::Rbf, 0.2});
  const auto b = train_one_class(xp, 0.1, {KernelKind::Rbf, 0.2});
  const auto probe = testutil::random_matrix(30, 3, rng, 2.0);
  for (std::size_t r = 0; r < 30; ++r)
    CHECK(std::abs(decision_distance(a, probe.row(r)) - decision_distance(b, probe.row(r))) < 1e-8);
}

TEST_CASE("closed-form small cases") {
  Matrix two(2, 2);
  two(0, 0) = 1.0, two(1, 0) = -1.0;
  const KernelSpec k{KernelKind::Rbf, 0.5};
  const double off = std::exp(-0.5 * 4.0);
  for (double nu : {0.5, 1.0}) {
    const auto m = train_one_class(two, nu, k);
    REQUIRE(m.alphas.size() == 2);
    CHECK(m.alphas[0] == doctest::Approx(0.5));
    CHECK(m.alphas[1] == doctest::Approx(0.5));
    CHECK(m.rho == doctest::Approx(0.5 * (1.0 + off)).epsilon(1e-12));
    const std::vector<double> mid{0.0, 0.0};
    CHECK(decision_distance(m, mid) == doctest::Approx(std::exp(-0.5) - 0.5 * (1.0 + off)).epsilon(1e-12));
  }

  std::mt19937_64 rng(8);
  const auto x = testutil::random_matrix(25, 2, rng);
  const auto all = solve_dual(x, 1.0, k);
  for (double a : all.alphas) CHECK(a == doctest::Approx(1.0 / 25.0).epsilon(1e-12));
}

TEST_CASE("solver input validation") {
  std::mt19937_64 rng(9);
  const auto x = testutil::random_matrix(10, 2, rng);
  const KernelSpec k{KernelKind::Rbf, 1.0};
  CHECK_THROWS_AS(solve_dual(testutil::random_matrix(1, 2, rng), 0.5, k), ValidationError);
  CHECK_THROWS_AS(solve_dual(x, 0.0, k), ValidationError);
  CHECK_THROWS_AS(solve_dual(x, 1.5, k), ValidationError);
  CHECK_THROWS_AS(solve_dual(x, 0.05, k), ValidationError);  // nu n < 1
  auto bad = x;
  bad(3, 1) = std::nan("");
  CHECK_THROWS_AS(solve_dual(bad, 0.5, k), ValidationError);
  CHECK_THROWS_AS(solve_dual(x, 0.3, k, {1e-9, 0}), ConvergenceError);
  CHECK(train_one_class(x, 0.5, {KernelKind::Rbf, 0.0}).kernel.gamma == 0.5);
  const auto m = train_one_class(x, 0.5, k);
  CHECK_THROWS_AS(decision_distance(m, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("calibration scores") {
  const Calibration c{2.0, 0.0};
  CHECK(c.score(-1.0) == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(c.score(0.0) == 0.5);
  CHECK(c.score(std::numeric_limits<double>::infinity()) == 0.0);
  CHECK(c.score(-std::numeric_limits<double>::infinity()) == 1.0);
  CHECK(c.score(1e6) == 0.0);
  CHECK(c.score(-1e6) == 1.0);
  double prev = 1.0;
  for (int i = -50; i <= 50; ++i) {
    const double s = c.score(i * 0.1);
    CHECK(s <= prev);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    prev = s;
  }
}

TEST_CASE("calibration fit") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> pos(-1.0, 0.7), neg(1.0, 0.7);
  std::vector<double> d;
  std::vector<int> y;
  for (int i = 0; i < 300; ++i) {
    d.push_back(neg(rng));
    y.push_back(0);
  }
  for (int i = 0; i < 40; ++i) {
    d.push_back(pos(rng));
    y.push_back(1);
  }
  const auto c = fit_calibration(d, y);
  CHECK(c.a > 0.0);
  CHECK(c.score(-2.0) > 0.9);
  CHECK(c.score(2.0) < 0.05);

  // Stationarity of the smoothed log-likelihood at the fitted parameters.
  const double hi = 41.0 / 42.0, lo = 1.0 / 302.0;
  double ga = 0.0, gb = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = (y[i] ? hi : lo) - c.score(d[i]);
    ga += r * d[i];
    gb += r;
  }
  CHECK(std::abs(ga) < 1e-6);
  CHECK(std::abs(gb) < 1e-6);

  CHECK_THROWS_AS(fit_calibration(std::vector<double>{1, 2}, std::vector<int>{0, 0}), CalibrationError);
  CHECK_THROWS_AS(fit_calibration(std::vector<double>{1, 1}, std::vector<int>{0, 1}), CalibrationError);
  CHECK_THROWS_AS(fit_calibration(std::vector<double>{-3, -2, 2, 3}, std::vector<int>{0, 0, 1, 1}), CalibrationError);
  CHECK_THROWS_AS(fit_calibration(std::vector<double>{1, 2}, std::vector<int>{0, 2}), ValidationError);
}

TEST_CASE("tuning grid") {
  TuningGrid g;
  CHECK_NOTHROW(g.validate());
  CHECK(TuningGrid::from_json(g.to_json()).to_json() == g.to_json());
  g.threshold = {1.2};
  CHECK_THROWS_AS(g.validate(), ValidationError);
  g = TuningGrid{};
  g.nu.clear();
  CHECK_THROWS_AS(g.validate(), ValidationError);
}

TEST_CASE("single-point grid trains exactly that point") {
  std::mt19937_64 rng(14);
  const auto train = testutil::random_matrix(80, 3, rng);
  ValidationSet val;
  val.x = Matrix(30, 3);
  for (std::size_t r = 0; r < 30; ++r) {
    const bool anomaly = r < 10;
    val.labels.push_back(anomaly);
    for (std::size_t c = 0; c < 3; ++c) val.x(r, c) = testutil::random_matrix(1, 1, rng)(0, 0) + (anomaly ? 4.0 : 0.0);
  }
  val.unsegmented_labels = {1};
  BaselineModel base;
  const TuningGrid grid{{0.1}, {0.2}, {0.5}};
  const auto [model, result] = tune_hyperparameters(base, train, val, grid);
  REQUIRE(result.grid.size() == 1);
  CHECK(result.best.nu == 0.1);
  CHECK(result.best.gamma == 0.2);
  CHECK(model.threshold == 0.5);
  const auto direct = train_one_class(train, 0.1, {KernelKind::Rbf, 0.2});
  CHECK(model.svm.alphas == direct.alphas);
  CHECK(model.svm.rho == direct.rho);
  CHECK(result.best.fn + result.best.fp <= 2);
}

TEST_CASE("trained model: decisions and thresholds") {
  const auto& fx = testutil::trained_fixture();
  const auto& model = fx.model;
  REQUIRE(model.calibration.has_value());
  CHECK(fx.report.train_used + fx.report.train_skipped == 300);
  CHECK(model.training.at("selected").contains("nu"));

  std::size_t wrong = 0;
  for (auto i : fx.split.test) {
    const auto sd = score_stroke(model, fx.dataset.strokes[i]);
    const bool anomaly = fx.dataset.strokes[i].label == signals::Label::Anomaly;
    wrong += sd.decision.is_anomaly != anomaly;
    CHECK(sd.decision.threshold_used == model.threshold);
    if (sd.decision.raw_distance) CHECK(sd.decision.score == model.calibration->score(*sd.decision.raw_distance));

    // Flag sets shrink as the threshold rises.
    bool prev = true;
    for (double t : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
      const auto d = classify(model, sd.features, t);
      CHECK((!d.is_anomaly || prev));
      prev = d.is_anomaly;
      CHECK(d.is_anomaly == (d.score > t));
    }
  }
  CHECK(wrong <= 3);
  CHECK_THROWS_AS(classify(model, score_stroke(model, fx.dataset.strokes[0]).features, 1.5), ValidationError);

  const auto quiet = score_stroke(model, testutil::make_stroke("q", std::vector<double>(9000, 0.0)));
  CHECK_FALSE(quiet.decision.raw_distance.has_value());
  CHECK(quiet.decision.score == 1.0);
  CHECK(quiet.decision.is_anomaly);
  CHECK(to_json(quiet.decision).at("raw_distance").is_null());

  auto uncal = model;
  uncal.calibration.reset();
  CHECK_THROWS_AS(score_stroke(uncal, fx.dataset.strokes[0]), CalibrationError);
}

TEST_CASE("model files round-trip bit for bit") {
  const auto& fx = testutil::trained_fixture();
  const auto dir = testutil::temp_dir("baseline_model");
  const auto path = dir / "model.json";
  fx.model.save(path);
  const auto loaded = BaselineModel::load(path);
  loaded.save(dir / "again.json");
  CHECK(read_bytes(path) == read_bytes(dir / "again.json"));
  CHECK(loaded.svm.alphas == fx.model.svm.alphas);
  CHECK(loaded.calibration->a == fx.model.calibration->a);

  for (std::size_t k = 0; k < 10; ++k) {
    const auto& s = fx.dataset.strokes[fx.split.test[k]];
    const auto a = score_stroke(fx.model, s).decision;
    const auto b = score_stroke(loaded, s).decision;
    CHECK(a.score == b.score);
    CHECK(a.raw_distance == b.raw_distance);
  }

  CHECK(threshold_sidecar_path(path).filename() == "model.json.threshold.json");
  write_threshold_sidecar(path, 0.85);
  CHECK(BaselineModel::load(path).threshold == 0.85);
  CHECK(read_bytes(path) == read_bytes(dir / "again.json"));
  CHECK_THROWS_AS(write_threshold_sidecar(path, -0.1), ValidationError);
  std::ofstream(threshold_sidecar_path(path)) << R"({"threshold": 3})";
  CHECK_THROWS_AS(BaselineModel::load(path), ValidationError);

  std::ofstream(dir / "junk.json") << "{not json";
  CHECK_THROWS_AS(BaselineModel::load(dir / "junk.json"), ValidationError);
  auto j = fx.model.to_json();
  j["version"] = 99;
  CHECK_THROWS_AS(BaselineModel::from_json(j), ValidationError);
  j = fx.model.to_json();
  j["svm"]["dimension"] = 2;
  CHECK_THROWS_AS(BaselineModel::from_json(j), ValidationError);
}

TEST_CASE("training rejects anomalies in the training split") {
  const auto& fx = testutil::trained_fixture();
  auto split = fx.split;
  split.train.push_back(split.test.front());
  for (auto i : split.test)
    if (fx.dataset.strokes[i].label == signals::Label::Anomaly) {
      split.train.back() = i;
      break;
    }
  CHECK_THROWS_AS(train_baseline(fx.dataset, split, TrainConfig{}), ValidationError);
}
