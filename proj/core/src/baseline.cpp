#include "stamping/baseline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

#include "stamping/error.hpp"
#include "stamping/version.hpp"

namespace stamping::baseline {

using linalg::Matrix;

std::string to_string(KernelKind kind) { return kind == KernelKind::Linear ? "linear" : "rbf"; }

KernelKind parse_kernel(std::string_view text) {
  if (text == "linear") return KernelKind::Linear;
  if (text == "rbf") return KernelKind::Rbf;
  throw ValidationError("unknown kernel '" + std::string(text) + "'");
}

void KernelSpec::validate() const {
  if (kind == KernelKind::Rbf && !(gamma > 0.0 && std::isfinite(gamma)))
    throw ValidationError("rbf kernel needs gamma > 0");
}

double KernelSpec::operator()(std::span<const double> a, std::span<const double> b) const {
  if (kind == KernelKind::Linear) return linalg::dot(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::exp(-gamma * s);
}

nlohmann::json KernelSpec::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}};
  if (kind == KernelKind::Rbf) j["gamma"] = gamma;
  return j;
}

KernelSpec KernelSpec::from_json(const nlohmann::json& j) {
  KernelSpec k;
  k.kind = parse_kernel(j.at("kind").get<std::string>());
  k.gamma = j.value("gamma", 0.0);
  k.validate();
  return k;
}

nlohmann::json OneClassSvm::to_json() const {
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < support_vectors.rows(); ++r) {
    const auto v = support_vectors.row(r);
    rows.emplace_back(v.begin(), v.end());
  }
  return {{"kernel", kernel.to_json()},
          {"nu", nu},
          {"n_train", n_train},
          {"rho", rho},
          {"alphas", alphas},
          {"support_vectors", rows},
          {"dimension", dimension()},
          {"solver", {{"iterations", stats.iterations}, {"kkt_gap", stats.kkt_gap}, {"dual_objective", stats.dual_objective}}}};
}

OneClassSvm OneClassSvm::from_json(const nlohmann::json& j) {
  OneClassSvm m;
  m.kernel = KernelSpec::from_json(j.at("kernel"));
  j.at("nu").get_to(m.nu);
  j.at("n_train").get_to(m.n_train);
  j.at("rho").get_to(m.rho);
  j.at("alphas").get_to(m.alphas);
  const auto rows = j.at("support_vectors").get<std::vector<std::vector<double>>>();
  const auto dim = j.at("dimension").get<std::size_t>();
  if (rows.size() != m.alphas.size()) throw ValidationError("support vector and alpha counts differ");
  m.support_vectors = Matrix(rows.size(), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != dim) throw ValidationError("support vector has the wrong dimension");
    std::copy(rows[r].begin(), rows[r].end(), m.support_vectors.row(r).begin());
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    m.stats.iterations = s.value("iterations", std::size_t{0});
    m.stats.kkt_gap = s.value("kkt_gap", 0.0);
    m.stats.dual_objective = s.value("dual_objective", 0.0);
  }
  return m;
}

DualSolution solve_dual(const Matrix& x, double nu, const KernelSpec& kernel, const SolverOptions& options) {
  const std::size_t n = x.rows();
  if (n < 2) throw ValidationError("one-class training needs at least 2 rows");
  if (!(nu > 0.0 && nu <= 1.0)) throw ValidationError("nu must lie in (0, 1]");
  const double nn = nu * static_cast<double>(n);
  if (nn < 1.0 - 1e-12) throw ValidationError("nu * n < 1: the box constraint cannot sum to 1");
  for (double v : x.data())
    if (!std::isfinite(v)) throw ValidationError("training features must be finite");
  kernel.validate();

  const double c = 1.0 / nn;
  std::vector<double> q(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) q[i * n + j] = q[j * n + i] = kernel(x.row(i), x.row(j));

  DualSolution sol;
  auto& alpha = sol.alphas;
  alpha.assign(n, 0.0);
  const auto full = std::min<std::size_t>(n, static_cast<std::size_t>(std::floor(nn + 1e-9)));
  for (std::size_t i = 0; i < full; ++i) alpha[i] = c;
  if (full < n) alpha[full] = std::max(0.0, 1.0 - static_cast<double>(full) * c);

  auto& g = sol.gradient;
  g.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (alpha[i] > 0.0)
      for (std::size_t k = 0; k < n; ++k) g[k] += alpha[i] * q[k * n + i];

  std::size_t iter = 0;
  double gap = 0.0;
  for (;; ++iter) {
    std::size_t up = n, down = n;
    double g_min = std::numeric_limits<double>::infinity(), g_max = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      if (alpha[k] < c && g[k] < g_min) g_min = g[k], up = k;
      if (alpha[k] > 0.0 && g[k] > g_max) g_max = g[k], down = k;
    }
    gap = (up == n || down == n) ? 0.0 : g_max - g_min;
    if (gap <= options.tolerance) break;
    if (iter >= options.max_iterations)
      throw ConvergenceError("one-class solver hit its iteration cap", gap);

    const std::size_t i = up, j = down;
    double eta = q[i * n + i] + q[j * n + j] - 2.0 * q[i * n + j];
    if (eta <= 0.0) eta = 1e-12;
    double t = gap / eta;
    const double room_i = c - alpha[i], room_j = alpha[j];
    if (t >= room_i || t >= room_j) {
      if (room_i <= room_j) {
        t = room_i;
        alpha[j] = room_i == room_j ? 0.0 : alpha[j] - t;
        alpha[i] = c;
      } else {
        t = room_j;
        alpha[i] += t;
        alpha[j] = 0.0;
      }
    } else {
      alpha[i] += t;
      alpha[j] -= t;
    }
    for (std::size_t k = 0; k < n; ++k) g[k] += t * (q[k * n + i] - q[k * n + j]);
  }

  double free_sum = 0.0;
  std::size_t free_count = 0;
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    if (alpha[k] > 0.0 && alpha[k] < c) {
      free_sum += g[k];
      ++free_count;
    } else if (alpha[k] == 0.0) {
      ub = std::min(ub, g[k]);
    } else {
      lb = std::max(lb, g[k]);
    }
  }
  if (free_count > 0)
    sol.rho = free_sum / static_cast<double>(free_count);
  else if (!std::isfinite(ub))
    sol.rho = lb;
  else if (!std::isfinite(lb))
    sol.rho = ub;
  else
    sol.rho = 0.5 * (ub + lb);

  double obj = 0.0;
  for (std::size_t k = 0; k < n; ++k) obj += alpha[k] * g[k];
  sol.stats = {iter, gap, 0.5 * obj};
  return sol;
}

OneClassSvm train_one_class(const Matrix& x, double nu, KernelSpec kernel, const SolverOptions& options) {
  if (kernel.kind == KernelKind::Rbf && kernel.gamma <= 0.0 && x.cols() > 0)
    kernel.gamma = 1.0 / static_cast<double>(x.cols());
  const auto sol = solve_dual(x, nu, kernel, options);

  OneClassSvm m;
  m.kernel = kernel;
  m.nu = nu;
  m.n_train = x.rows();
  m.rho = sol.rho;
  m.stats = sol.stats;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < sol.alphas.size(); ++i)
    if (sol.alphas[i] > 1e-8) keep.push_back(i);
  m.support_vectors = Matrix(keep.size(), x.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto src = x.row(keep[r]);
    std::copy(src.begin(), src.end(), m.support_vectors.row(r).begin());
    m.alphas.push_back(sol.alphas[keep[r]]);
  }
  return m;
}

double decision_distance(const OneClassSvm& svm, std::span<const double> x) {
  if (x.size() != svm.dimension())
    throw DimensionError("input has " + std::to_string(x.size()) + " features, model expects " +
                         std::to_string(svm.dimension()));
  double s = 0.0;
  for (std::size_t j = 0; j < svm.alphas.size(); ++j) s += svm.alphas[j] * svm.kernel(svm.support_vectors.row(j), x);
  return s - svm.rho;
}

// ---------------------------------------------------------------------------

double Calibration::score(double d) const {
  if (d == std::numeric_limits<double>::infinity()) return 0.0;
  if (d == -std::numeric_limits<double>::infinity()) return 1.0;
  const double z = a * d + b;
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

Calibration fit_calibration(std::span<const double> distances, std::span<const int> labels) {
  if (distances.size() != labels.size()) throw DimensionError("distances and labels differ in length");
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(distances[i])) throw CalibrationError("calibration distances must be finite");
    if (labels[i] == 1)
      ++pos;
    else if (labels[i] == 0)
      ++neg;
    else
      throw ValidationError("labels must be binary (0/1)");
  }
  if (pos == 0 || neg == 0) throw CalibrationError("calibration needs both normal and anomalous samples");

  const auto [lo_it, hi_it] = std::minmax_element(distances.begin(), distances.end());
  if (*lo_it == *hi_it) throw CalibrationError("all calibration distances are equal");

  // Fit on distances scaled to unit spread; the slope is rescaled afterwards.
  const double n = static_cast<double>(distances.size());
  double mean = 0.0;
  for (double d : distances) mean += d;
  mean /= n;
  double var = 0.0;
  for (double d : distances) var += (d - mean) * (d - mean);
  const double scale = std::sqrt(var / n);
  std::vector<double> f(distances.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = distances[i] / scale;

  const double hi_target = (static_cast<double>(pos) + 1.0) / (static_cast<double>(pos) + 2.0);
  const double lo_target = 1.0 / (static_cast<double>(neg) + 2.0);
  std::vector<double> t(labels.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = labels[i] == 1 ? hi_target : lo_target;

  auto objective = [&](double a, double b) {
    double v = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double z = f[i] * a + b;
      v += z >= 0.0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
    }
    return v;
  };

  double a = 0.0, b = std::log((static_cast<double>(neg) + 1.0) / (static_cast<double>(pos) + 1.0));
  double fval = objective(a, b);
  for (int it = 0; it < 100; ++it) {
    double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double z = f[i] * a + b;
      double p, q;
      if (z >= 0.0) {
        const double e = std::exp(-z);
        p = e / (1.0 + e);
        q = 1.0 / (1.0 + e);
      } else {
        const double e = std::exp(z);
        p = 1.0 / (1.0 + e);
        q = e / (1.0 + e);
      }
      const double d2 = p * q;
      h11 += f[i] * f[i] * d2;
      h22 += d2;
      h21 += f[i] * d2;
      const double d1 = t[i] - p;
      g1 += f[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-9 && std::abs(g2) < 1e-9) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= 1e-10) {
      const double na = a + step * da, nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na, b = nb, fval = nf;
        break;
      }
      step *= 0.5;
    }
    if (step < 1e-10) break;
  }
  if (!(a > 0.0) || !std::isfinite(a) || !std::isfinite(b))
    throw CalibrationError("calibration slope is not positive: distances do not separate the classes");
  return {a / scale, b};
}

nlohmann::json to_json(const Decision& d) {
  nlohmann::json j{{"score", d.score}, {"is_anomaly", d.is_anomaly}, {"threshold_used", d.threshold_used}};
  j["raw_distance"] = d.raw_distance ? nlohmann::json(*d.raw_distance) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------

namespace {

void check_threshold(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("threshold must lie in [0, 1]");
}

std::string utc_now() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) now = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

nlohmann::json BaselineModel::to_json() const {
  nlohmann::json j{{"format", "stamping-model"},
                   {"version", kFormatVersion},
                   {"software_version", kVersion},
                   {"trained_at", trained_at},
                   {"preprocessing", preprocessing.to_json()},
                   {"feature_space", feature_space.to_json()},
                   {"svm", svm.to_json()},
                   {"threshold", threshold},
                   {"training", training}};
  j["calibration"] = calibration ? nlohmann::json{{"a", calibration->a}, {"b", calibration->b}} : nlohmann::json(nullptr);
  return j;
}

BaselineModel BaselineModel::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "stamping-model") throw ValidationError("not a stamping model document");
  if (j.at("version").get<int>() != kFormatVersion)
    throw ValidationError("unsupported model version " + j.at("version").dump());
  BaselineModel m;
  m.trained_at = j.value("trained_at", std::string{});
  m.preprocessing = pipeline::Preprocessing::from_json(j.at("preprocessing"));
  m.feature_space = features::FeatureSpace::from_json(j.at("feature_space"));
  m.svm = OneClassSvm::from_json(j.at("svm"));
  if (!j.at("calibration").is_null()) m.calibration = Calibration{j["calibration"].at("a"), j["calibration"].at("b")};
  m.threshold = j.at("threshold").get<double>();
  check_threshold(m.threshold);
  m.training = j.value("training", nlohmann::json::object());
  if (m.feature_space.output.output_names().size() != m.svm.dimension())
    throw ValidationError("model feature space and support vectors disagree in dimension");
  return m;
}

void BaselineModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

BaselineModel BaselineModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  auto m = from_json(j);
  const auto sidecar = threshold_sidecar_path(path);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream s(sidecar);
    const auto sj = nlohmann::json::parse(s);
    const double t = sj.at("threshold").get<double>();
    check_threshold(t);
    m.threshold = t;
  }
  return m;
}

std::filesystem::path threshold_sidecar_path(const std::filesystem::path& model_path) {
  auto p = model_path;
  p += ".threshold.json";
  return p;
}

void write_threshold_sidecar(const std::filesystem::path& model_path, double threshold) {
  check_threshold(threshold);
  const auto path = threshold_sidecar_path(model_path);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + tmp.string());
    out << nlohmann::json{{"threshold", threshold}}.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

Decision classify(const BaselineModel& model, std::span<const double> x, std::optional<double> threshold) {
  if (!model.calibration) throw CalibrationError("model is not calibrated");
  const double t = threshold.value_or(model.threshold);
  check_threshold(t);
  Decision d;
  d.raw_distance = decision_distance(model.svm, x);
  d.score = model.calibration->score(*d.raw_distance);
  d.threshold_used = t;
  d.is_anomaly = d.score > t;
  return d;
}

std::optional<std::vector<double>> model_input(const BaselineModel& model, const pipeline::StrokeFeatures& f) {
  const auto kind = model.feature_space.kind;
  if (features::needs_segmentation(kind) && !f.segmental) return std::nullopt;
  const auto v = model.feature_space.transform(f.segmental ? &*f.segmental : nullptr,
                                               f.statistical ? &*f.statistical : nullptr);
  return v.values;
}

Decision classify(const BaselineModel& model, const pipeline::StrokeFeatures& f, std::optional<double> threshold) {
  if (!model.calibration) throw CalibrationError("model is not calibrated");
  const auto x = model_input(model, f);
  if (x) return classify(model, *x, threshold);
  const double t = threshold.value_or(model.threshold);
  check_threshold(t);
  Decision d;
  d.score = 1.0;
  d.threshold_used = t;
  d.is_anomaly = d.score > t;
  return d;
}

StrokeDecision score_stroke(const BaselineModel& model, const signals::StrokeSignal& stroke,
                            std::optional<double> threshold, bool keep_filtered) {
  StrokeDecision out;
  out.features = pipeline::extract_stroke_features(stroke, model.preprocessing, keep_filtered);
  out.decision = classify(model, out.features, threshold);
  return out;
}

// ---------------------------------------------------------------------------

void TuningGrid::validate() const {
  if (nu.empty() || gamma.empty() || threshold.empty()) throw ValidationError("tuning grid has an empty axis");
  for (double v : nu)
    if (!(v > 0.0 && v <= 1.0)) throw ValidationError("grid nu values must lie in (0, 1]");
  for (double v : gamma)
    if (!(v > 0.0)) throw ValidationError("grid gamma values must be positive");
  for (double v : threshold) check_threshold(v);
}

nlohmann::json TuningGrid::to_json() const { return {{"nu", nu}, {"gamma", gamma}, {"threshold", threshold}}; }

TuningGrid TuningGrid::from_json(const nlohmann::json& j) {
  TuningGrid g;
  g.nu = j.value("nu", g.nu);
  g.gamma = j.value("gamma", g.gamma);
  g.threshold = j.value("threshold", g.threshold);
  g.validate();
  return g;
}

namespace {

bool better(const GridPoint& a, const GridPoint& b) {
  const double oa = a.fpr + a.fnr, ob = b.fpr + b.fnr;
  if (oa != ob) return oa < ob;
  if (a.fpr != b.fpr) return a.fpr < b.fpr;
  if (a.gamma != b.gamma) return a.gamma < b.gamma;
  return a.nu < b.nu;
}

double rate(std::size_t num, std::size_t den) { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }

}  // namespace

std::pair<BaselineModel, TuningResult> tune_hyperparameters(const BaselineModel& base, const Matrix& train,
                                                            const ValidationSet& validation, const TuningGrid& grid,
                                                            const SolverOptions& options) {
  grid.validate();
  if (validation.x.rows() != validation.labels.size())
    throw DimensionError("validation rows and labels differ in length");
  const bool linear = base.svm.kernel.kind == KernelKind::Linear;
  const std::vector<double> gammas = linear ? std::vector<double>{0.0} : grid.gamma;

  TuningResult result;
  std::optional<GridPoint> best;
  std::optional<OneClassSvm> best_svm;
  std::optional<Calibration> best_cal;
  std::string last_error;

  for (double nu : grid.nu)
    for (double gamma : gammas) {
      KernelSpec kernel{linear ? KernelKind::Linear : KernelKind::Rbf, gamma};
      OneClassSvm svm;
      Calibration cal;
      std::vector<double> dist(validation.x.rows());
      try {
        svm = train_one_class(train, nu, kernel, options);
        for (std::size_t r = 0; r < dist.size(); ++r) dist[r] = decision_distance(svm, validation.x.row(r));
        cal = fit_calibration(dist, validation.labels);
      } catch (const Error& e) {
        last_error = e.what();
        result.grid.push_back({nu, gamma, 0.0, 0, 0, 0.0, 0.0, e.what()});
        continue;
      }
      for (double thr : grid.threshold) {
        std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
        auto tally = [&](bool flagged, int label) {
          if (label == 1)
            (flagged ? tp : fn)++;
          else
            (flagged ? fp : tn)++;
        };
        for (std::size_t r = 0; r < dist.size(); ++r) tally(cal.score(dist[r]) > thr, validation.labels[r]);
        for (int label : validation.unsegmented_labels) tally(1.0 > thr, label);
        GridPoint p{nu, gamma, thr, fp, fn, rate(fp, fp + tn), rate(fn, fn + tp), {}};
        result.grid.push_back(p);
        if (!best || better(p, *best)) {
          best = p;
          best_svm = svm;
          best_cal = cal;
        }
      }
    }
  if (!best) throw Error("no grid point could be trained: " + last_error);

  BaselineModel model = base;
  model.svm = std::move(*best_svm);
  model.calibration = best_cal;
  model.threshold = best->threshold;
  result.best = *best;
  return {std::move(model), std::move(result)};
}

// ---------------------------------------------------------------------------

std::pair<BaselineModel, TrainReport> train_baseline(const signals::StrokeDataset& dataset,
                                                     const signals::DatasetSplit& split, const TrainConfig& config) {
  config.preprocessing.validate();
  const auto extracted = pipeline::extract_dataset_features(dataset, config.preprocessing);
  return train_baseline(dataset, extracted, split, config);
}

std::pair<BaselineModel, TrainReport> train_baseline(const signals::StrokeDataset& dataset,
                                                     const pipeline::DatasetFeatures& extracted,
                                                     const signals::DatasetSplit& split, const TrainConfig& config) {
  config.grid.validate();
  const auto kind = config.feature_set;
  const bool seg_needed = features::needs_segmentation(kind);

  TrainReport report;
  std::vector<std::size_t> seg_rows, stat_rows;
  for (auto i : split.train) {
    if (dataset.strokes.at(i).label != signals::Label::Normal)
      throw ValidationError("one-class training set must hold normal strokes only");
    if (seg_needed && extracted.segmental_row[i] < 0) {
      ++report.train_skipped;
      continue;
    }
    if (seg_needed) seg_rows.push_back(static_cast<std::size_t>(extracted.segmental_row[i]));
    stat_rows.push_back(i);
  }
  report.train_used = stat_rows.size();
  if (report.train_used < 2) throw ValidationError("fewer than 2 usable training strokes");

  auto pick = [](const features::FeatureTable& t, const std::vector<std::size_t>& rows) {
    features::FeatureTable out;
    out.names = t.names;
    out.values = Matrix(rows.size(), t.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto src = t.values.row(rows[r]);
      std::copy(src.begin(), src.end(), out.values.row(r).begin());
    }
    return out;
  };
  const auto seg_train = pick(extracted.segmental, seg_rows);
  const auto stat_train = pick(extracted.statistical, stat_rows);

  BaselineModel base;
  base.preprocessing = config.preprocessing;
  base.feature_space = features::FeatureSpace::fit(kind, seg_train, stat_train, config.pca_components);
  base.svm.kernel.kind = config.kernel;
  base.trained_at = utc_now();

  auto model_row = [&](std::size_t dataset_index) -> std::optional<std::vector<double>> {
    const long sr = extracted.segmental_row[dataset_index];
    if (seg_needed && sr < 0) return std::nullopt;
    features::FeatureVector seg, stat = extracted.statistical.row(dataset_index);
    if (sr >= 0) seg = extracted.segmental.row(static_cast<std::size_t>(sr));
    return base.feature_space.transform(sr >= 0 ? &seg : nullptr, &stat).values;
  };

  const std::size_t dim = base.feature_space.output.output_names().size();
  Matrix train(stat_rows.size(), dim);
  for (std::size_t r = 0; r < stat_rows.size(); ++r) {
    const auto v = *model_row(stat_rows[r]);
    std::copy(v.begin(), v.end(), train.row(r).begin());
  }

  ValidationSet val;
  std::vector<std::vector<double>> val_rows;
  for (auto i : split.validation) {
    const auto label = dataset.strokes.at(i).label;
    if (label == signals::Label::Unlabeled) throw ValidationError("validation strokes must be labeled");
    const int y = label == signals::Label::Anomaly ? 1 : 0;
    if (auto v = model_row(i)) {
      val_rows.push_back(std::move(*v));
      val.labels.push_back(y);
    } else {
      val.unsegmented_labels.push_back(y);
    }
  }
  val.x = Matrix(val_rows.size(), dim);
  for (std::size_t r = 0; r < val_rows.size(); ++r) std::copy(val_rows[r].begin(), val_rows[r].end(), val.x.row(r).begin());

  auto [model, tuning] = tune_hyperparameters(base, train, val, config.grid, config.solver);
  model.training = {{"feature_set", features::to_string(kind)},
                    {"pca_components", config.pca_components},
                    {"train_used", report.train_used},
                    {"train_skipped", report.train_skipped},
                    {"validation_size", split.validation.size()},
                    {"grid", config.grid.to_json()},
                    {"selected", {{"nu", tuning.best.nu}, {"gamma", tuning.best.gamma}, {"threshold", tuning.best.threshold}}},
                    {"validation_fpr", tuning.best.fpr},
                    {"validation_fnr", tuning.best.fnr}};
  report.tuning = std::move(tuning);
  return {std::move(model), std::move(report)};
}

}  // namespace stamping::baseline
