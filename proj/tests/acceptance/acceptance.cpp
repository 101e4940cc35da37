// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "oracles.hpp"
#include "stamping/baseline.hpp"
#include "stamping/dsp.hpp"
#include "stamping/eval.hpp"
#include "stamping/http_server.hpp"
#include "stamping/linalg.hpp"
#include "stamping/segmentation.hpp"
#include "stamping/service.hpp"
#include "test_util.hpp"

using namespace stamping;
using linalg::Matrix;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = limit_s <= 0.0 || secs < limit_s;
  const bool pass = o.ok && in_time;
  failures += !pass;
  char timing[64];
  if (limit_s > 0.0)
    std::snprintf(timing, sizeof timing, "%.1fs < %.0fs%s", secs, limit_s, in_time ? "" : " EXCEEDED");
  else
    std::snprintf(timing, sizeof timing, "%.1fs", secs);
  std::printf("%s  %-28s %s [%s]\n", pass ? "PASS" : "FAIL", name, o.detail.c_str(), timing);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome filter_analytics() {
  constexpr double fs = 100000.0, fc = 1800.0;
  double worst_cut = 0.0, worst_pass = 0.0, worst_stop = 0.0;
  for (int order = 1; order <= 6; ++order) {
    const auto c = dsp::design_butterworth_lowpass({fc, order, fs});
    worst_cut = std::max(worst_cut, std::abs(c.magnitude_db(fc) + 3.0103));
    for (int i = 1; i <= 4000; ++i) {
      const double f = 4.0 * fc * i / 4000.0;
      const double diff =
          std::abs(c.magnitude_db(f) - 20.0 * std::log10(dsp::analog_butterworth_magnitude(f, fc, order)));
      (f <= fc ? worst_pass : worst_stop) = std::max(f <= fc ? worst_pass : worst_stop, diff);
    }
  }
  return {worst_cut < 0.01 && worst_pass < 0.5 && worst_stop < 1.0,
          fmt("|H(fc)|+3.0103 dB max %.2e; analog gap <=fc %.3f dB, <=4fc %.3f dB", worst_cut, worst_pass,
              worst_stop)};
}

Matrix standardize(const Matrix& m) {
  Matrix z = m;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) mean += m(r, c);
    mean /= static_cast<double>(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) var += (m(r, c) - mean) * (m(r, c) - mean);
    const double sd = std::sqrt(var / static_cast<double>(m.rows()));
    for (std::size_t r = 0; r < m.rows(); ++r) z(r, c) = (m(r, c) - mean) / sd;
  }
  return z;
}

Outcome pca_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> cols(1, 20);
  double eig = 0.0, orth = 0.0, trace = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = cols(rng), m = d + 10 + static_cast<std::size_t>(trial);
    const auto z = standardize(testutil::random_matrix(m, d, rng) * testutil::random_matrix(d, d, rng));
    features::FeatureTable t;
    for (std::size_t c = 0; c < d; ++c) t.names.push_back("x" + std::to_string(c));
    t.values = z;
    const auto pca = features::fit_pca(t, d);
    const auto cov = z.transpose() * z;
    const double scale = 1.0 / static_cast<double>(m - 1);
    double tr = 0.0, sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      tr += cov(j, j) * scale;
      sum += pca.eigenvalues[j];
      for (std::size_t i = 0; i < d; ++i) {
        double cv = 0.0;
        for (std::size_t k = 0; k < d; ++k) cv += cov(i, k) * scale * pca.eigenvectors(k, j);
        eig = std::max(eig, std::abs(cv - pca.eigenvalues[j] * pca.eigenvectors(i, j)));
      }
      for (std::size_t l = 0; l < d; ++l) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += pca.eigenvectors(k, j) * pca.eigenvectors(k, l);
        orth = std::max(orth, std::abs(dot - (j == l ? 1.0 : 0.0)));
      }
    }
    trace = std::max(trace, std::abs(tr - sum));
  }

  double closed = 0.0;
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double a = std::abs(u(rng)) + 0.1, c = std::abs(u(rng)) + 0.1, b = u(rng);
    Matrix s(2, 2);
    s(0, 0) = a, s(0, 1) = b, s(1, 0) = b, s(1, 1) = c;
    const auto e = linalg::symmetric_eigen(s);
    const double mean = 0.5 * (a + c), r = std::hypot(0.5 * (a - c), b);
    closed = std::max({closed, std::abs(e.values[0] - (mean + r)), std::abs(e.values[1] - (mean - r))});
    double x = b, y = e.values[0] - a;
    const double len = std::hypot(x, y);
    x /= len, y /= len;
    if ((std::abs(x) >= std::abs(y) ? x : y) < 0) x = -x, y = -y;
    closed = std::max({closed, std::abs(e.vectors(0, 0) - x), std::abs(e.vectors(1, 0) - y)});
  }
  return {eig < 1e-8 && orth < 1e-8 && trace < 1e-8 && closed < 1e-10,
          fmt("eigen %.1e, orthonormal %.1e, trace %.1e, 2x2 %.1e", eig, orth, trace, closed)};
}

Outcome ocsvm_correctness() {
  std::mt19937_64 rng(77);
  double worst_obj = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 7);
    const auto x = testutil::random_matrix(n, 3, rng);
    const double nu = std::uniform_real_distribution<double>(1.0 / static_cast<double>(n), 1.0)(rng);
    const baseline::KernelSpec k{baseline::KernelKind::Linear, 0.0};
    const auto sol = baseline::solve_dual(x, nu, k);
    const auto q = testutil::gram(x, k);
    const auto ref = testutil::brute_force_dual(q, n, 1.0 / (nu * static_cast<double>(n)));
    worst_obj = std::max(worst_obj, testutil::dual_objective(q, sol.alphas) - testutil::dual_objective(q, ref));
  }

  bool nu_ok = true;
  double kkt = 0.0, worst_outlier = 0.0, worst_sv = 0.0;
  std::uniform_real_distribution<double> nu_dist(0.02, 0.5);
  std::uniform_real_distribution<double> gamma_dist(0.05, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 200;
    const auto x = testutil::random_matrix(n, 4, rng);
    const double nu = nu_dist(rng);
    const baseline::KernelSpec k{baseline::KernelKind::Rbf, gamma_dist(rng)};
    const auto sol = baseline::solve_dual(x, nu, k);
    const double c = 1.0 / (nu * n);
    std::size_t outliers = 0, svs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = sol.alphas[i], g = sol.gradient[i];
      const double r = a <= 0.0 ? std::max(0.0, sol.rho - g) : a >= c ? std::max(0.0, g - sol.rho) : std::abs(g - sol.rho);
      kkt = std::max(kkt, r);
      outliers += g - sol.rho < -1e-8;  // d(x_i) < 0 beyond the solver tolerance
      svs += a > 0.0;
    }
    const double fo = static_cast<double>(outliers) / n, fsv = static_cast<double>(svs) / n;
    worst_outlier = std::max(worst_outlier, fo - nu);
    worst_sv = std::max(worst_sv, nu - fsv);
    nu_ok = nu_ok && fo <= nu + 1.0 / n && fsv >= nu - 1.0 / n;
  }
  return {worst_obj <= 1e-6 && nu_ok && kkt <= 1e-5,
          fmt("linear n<=8 objective gap %.1e; rbf n=200 outlier-nu %.3f, nu-SV %.3f, KKT %.1e", worst_obj,
              worst_outlier, worst_sv, kkt)};
}

Outcome segmentation_recovery() {
  const auto ds = signals::synthesize_dataset(signals::GeneratorParams{}, 190, 10, 501);
  pipeline::Preprocessing prep;
  std::size_t within = 0, total = 0, normal_errors = 0, other_errors = 0;
  for (const auto& s : ds.strokes) {
    const auto f = pipeline::extract_stroke_features(s, prep);
    if (!f.segmented()) {
      (s.label == signals::Label::Normal ? normal_errors : other_errors)++;
      total += 6;
      continue;
    }
    for (std::size_t k = 0; k < 6; ++k) {
      const double ms = 1000.0 * static_cast<double>(f.segmentation->points()[k]) / s.sample_rate_hz;
      within += std::abs(ms - s.ground_truth->boundaries_ms[k]) <= 2.0;
      ++total;
    }
  }
  const double frac = static_cast<double>(within) / static_cast<double>(total);
  return {frac >= 0.95 && normal_errors == 0,
          fmt("%.2f%% of %zu points within 2 ms; failures: %zu normal, %zu anomalous", 100.0 * frac, total,
              normal_errors, other_errors)};
}

// ---------------------------------------------------------------------------

struct OneClassRun {
  signals::StrokeDataset dataset;
  signals::DatasetSplit split;
  pipeline::DatasetFeatures extracted;
  baseline::BaselineModel model;
  eval::BaselineEvaluation test;
};

OneClassRun one_class_run(std::uint64_t seed) {
  OneClassRun r;
  r.dataset = signals::synthesize_dataset(signals::GeneratorParams{}, 1408, 40, seed);
  signals::SplitSpec spec;
  spec.seed = seed;
  r.split = signals::split_dataset(r.dataset, spec);
  baseline::TrainConfig cfg;
  r.extracted = pipeline::extract_dataset_features(r.dataset, cfg.preprocessing);
  r.model = baseline::train_baseline(r.dataset, r.extracted, r.split, cfg).first;
  r.test = eval::evaluate_baseline(r.model, r.dataset, r.extracted, r.split.test);
  return r;
}

std::optional<OneClassRun> first_run;

Outcome fig12() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto r = one_class_run(seed);
    const auto& c = r.test.counts;
    const bool split_ok = r.split.train.size() == 820 && c.tp + c.fn == 20 && c.tn + c.fp == 294;
    ok = ok && split_ok && c.fp <= 2 && c.fn <= 2;
    detail += fmt("seed %llu: FP %zu FN %zu (test %zu+%zu)%s", static_cast<unsigned long long>(seed), c.fp, c.fn,
                  c.tn + c.fp, c.tp + c.fn, seed < 3 ? "; " : "");
    if (!first_run) first_run = std::move(r);
  }
  return {ok, detail};
}

Outcome table1() {
  const auto ds = signals::synthesize_dataset(signals::GeneratorParams{}, 1368, 40, 11);
  eval::ComparisonConfig cfg;
  cfg.seed = 11;
  const auto report = eval::run_feature_comparison(ds, cfg);
  bool ok = true;
  std::string detail;
  for (const char* cls : {"knn", "logreg"}) {
    const auto& prop = report.find(cls, "proposed");
    const auto& stat = report.find(cls, "statistical");
    const auto& s2 = report.find(cls, "s2_only");
    const long gap = std::labs(static_cast<long>(s2.counts.errors()) - static_cast<long>(prop.counts.errors()));
    ok = ok && prop.counts.fnr() <= stat.counts.fnr() && gap <= 2;
    detail += fmt("%s FNR proposed %.1f%% statistical %.1f%%, errors s2_only %zu proposed %zu; ", cls,
                  100.0 * prop.counts.fnr(), 100.0 * stat.counts.fnr(), s2.counts.errors(), prop.counts.errors());
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome calibration() {
  if (!first_run) first_run = one_class_run(1);
  const auto& r = *first_run;
  std::vector<double> normal, anomaly, dist;
  for (const auto& s : r.test.strokes) {
    (s.label ? anomaly : normal).push_back(s.decision.score);
    if (s.decision.raw_distance) dist.push_back(*s.decision.raw_distance);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const double mn = median(normal), ma = median(anomaly);
  const auto [lo, hi] = std::minmax_element(dist.begin(), dist.end());
  bool strict = true;
  double prev = 2.0;
  for (int i = 0; i < 1000; ++i) {
    const double d = *lo + (*hi - *lo) * i / 999.0;
    const double s = r.model.calibration->score(d);
    strict = strict && s < prev;
    prev = s;
  }
  return {mn < 0.2 && ma > 0.8 && strict,
          fmt("median score normal %.4f, anomaly %.4f; strictly decreasing over [%.4f, %.4f]: %s", mn, ma, *lo, *hi,
              strict ? "yes" : "no")};
}

// ---------------------------------------------------------------------------

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

nlohmann::json post_stroke(std::uint16_t port, const signals::StrokeSignal& s) {
  net::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req{http::verb::post, "/strokes", 11};
  req.set(http::field::host, "127.0.0.1");
  req.body() = nlohmann::json{{"stroke_id", s.stroke_id}, {"samples", s.samples}, {"sample_rate_hz", s.sample_rate_hz}}.dump();
  req.prepare_payload();
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  if (res.result() != http::status::ok) throw Error("POST /strokes returned " + std::to_string(res.result_int()));
  return nlohmann::json::parse(res.body());
}

Outcome parity() {
  if (!first_run) first_run = one_class_run(1);
  const auto& r = *first_run;
  service::MonitorService svc(r.model, {});
  service::HttpServer server(svc, "127.0.0.1", 0);
  server.start();

  // Every test stroke through HTTP against offline scoring.
  std::size_t mismatched = 0;
  for (auto i : r.split.test) {
    const auto& s = r.dataset.strokes[i];
    const auto online = post_stroke(server.port(), s);
    const auto offline = baseline::score_stroke(r.model, s).decision;
    const bool same = online.at("score").get<double>() == offline.score &&
                      online.at("is_anomaly").get<bool>() == offline.is_anomaly &&
                      (offline.raw_distance ? online.at("raw_distance").get<double>() == *offline.raw_distance
                                            : online.at("raw_distance").is_null());
    mismatched += !same;
  }

  // 70 strokes replayed at 70/min, observed over the event stream.
  net::io_context ioc;
  websocket::stream<tcp::socket> ws(ioc);
  net::connect(ws.next_layer(), std::vector{tcp::endpoint(net::ip::make_address("127.0.0.1"), server.port())});
  ws.handshake("127.0.0.1", "/events");
  std::vector<std::size_t> picks(r.split.test.begin(), r.split.test.begin() + 70);
  const auto subset = r.dataset.subset(picks);
  service::Replayer replay(svc, subset, 70.0);
  const auto start = Clock::now();
  replay.start();
  bool in_order = true;
  std::size_t replay_mismatch = 0;
  double worst_late = 0.0, last_t = 0.0;
  std::uint64_t prev_seq = 0;
  for (std::size_t k = 0; k < 70; ++k) {
    beast::flat_buffer buf;
    ws.read(buf);
    const double t = std::chrono::duration<double>(Clock::now() - start).count();
    const auto e = nlohmann::json::parse(beast::buffers_to_string(buf.data()));
    const auto seq = e.at("seq").get<std::uint64_t>();
    in_order = in_order && e.at("stroke_id") == subset.strokes[k].stroke_id && seq > prev_seq;
    prev_seq = seq;
    replay_mismatch += e.at("score").get<double>() != baseline::score_stroke(r.model, subset.strokes[k]).decision.score;
    worst_late = std::max(worst_late, t - 60.0 / 70.0 * static_cast<double>(k + 1));
    last_t = t;
  }
  replay.wait();
  ws.close(websocket::close_code::normal);
  server.stop();
  const bool cadence = last_t >= 57.0 && last_t <= 63.0 && worst_late < 0.5;
  return {mismatched == 0 && replay_mismatch == 0 && in_order && cadence,
          fmt("%zu/%zu HTTP decisions identical; replay 70 events in order: %s, %zu mismatched, last at %.2fs, max "
              "lateness %.3fs",
              r.split.test.size() - mismatched, r.split.test.size(), in_order ? "yes" : "no", replay_mismatch, last_t,
              worst_late)};
}

}  // namespace

int main() {
  criterion("filter analytics", 1.0, filter_analytics);
  criterion("PCA oracle", 10.0, pca_oracle);
  criterion("OC-SVM correctness", 60.0, ocsvm_correctness);
  criterion("segmentation recovery", 60.0, segmentation_recovery);
  criterion("end-to-end one-class", 300.0, fig12);
  criterion("feature-set comparison", 180.0, table1);
  criterion("score calibration", 0.0, calibration);
  criterion("online/offline parity", 0.0, parity);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
