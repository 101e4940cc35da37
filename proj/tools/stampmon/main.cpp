// stampmon: synthesize strokes, train and evaluate the golden baseline, score
// datasets offline and run the monitoring service.

#include <CLI11.hpp>

#include <atomic>
#include <charconv>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "stamping/baseline.hpp"
#include "stamping/config.hpp"
#include "stamping/error.hpp"
#include "stamping/eval.hpp"
#include "stamping/version.hpp"

#ifdef STAMPING_WITH_SERVICE
#include "stamping/http_server.hpp"
#include "stamping/service.hpp"
#endif

namespace fs = std::filesystem;
using namespace stamping;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string data_path;

  RunConfig config() const {
    RunConfig c = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    if (seed) c.set_seed(*seed);
    return c;
  }
};

void add_common(CLI::App* cmd, Common& c, bool with_data) {
  cmd->add_option("--config", c.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Seed for synthesis and splitting");
  if (with_data)
    cmd->add_option("--data", c.data_path, "Dataset file (.csv or binary); synthesized from the config when omitted")
        ->check(CLI::ExistingFile);
}

signals::StrokeDataset dataset_for(const Common& common, const RunConfig& cfg) {
  if (!common.data_path.empty()) {
    auto ds = signals::load_dataset(common.data_path, signals::format_from_path(common.data_path));
    ds.validate();
    return ds;
  }
  return signals::synthesize_dataset(cfg.synth.generator, cfg.synth.n_normal, cfg.synth.n_anomaly, cfg.seed);
}

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void print_tuning(const baseline::TrainReport& r) {
  const auto& b = r.tuning.best;
  std::printf("training strokes used: %zu (skipped %zu)\n", r.train_used, r.train_skipped);
  std::printf("selected nu=%g gamma=%g threshold=%g  validation FPR %.2f%%  FNR %.2f%%\n", b.nu, b.gamma, b.threshold,
              100.0 * b.fpr, 100.0 * b.fnr);
}

int cmd_synth(const Common& common, std::optional<std::size_t> normals, std::optional<std::size_t> anomalies,
              const std::string& out) {
  const auto cfg = common.config();
  const auto n = normals.value_or(cfg.synth.n_normal);
  const auto a = anomalies.value_or(cfg.synth.n_anomaly);
  const auto ds = signals::synthesize_dataset(cfg.synth.generator, n, a, cfg.seed);
  signals::write_dataset(ds, out, signals::format_from_path(out));
  std::printf("wrote %zu strokes (%zu anomalies) to %s\n", ds.strokes.size(), a, out.c_str());
  return 0;
}

int cmd_train(const Common& common, const std::string& model_path) {
  const auto cfg = common.config();
  const auto ds = dataset_for(common, cfg);
  const auto split = signals::split_dataset(ds, cfg.split);
  if (cfg.split.mode != signals::SplitMode::OneClass)
    throw ValidationError("training the golden baseline needs a one_class split");
  auto [model, report] = baseline::train_baseline(ds, split, cfg.train_config());
  model.training["seed"] = cfg.seed;
  model.training["split"] = {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}};
  model.save(model_path);
  print_tuning(report);
  std::printf("model written to %s\n", model_path.c_str());
  return 0;
}

int cmd_evaluate(const Common& common, const std::string& model_path, const std::string& report_path,
                 const std::string& summary_path, bool skip_comparison) {
  const auto cfg = common.config();
  const auto ds = dataset_for(common, cfg);

  if (!skip_comparison) {
    const auto report = eval::run_feature_comparison(ds, cfg.comparison);
    std::cout << "Feature-set comparison (test split)\n" << report.format_table() << '\n';
    if (!report_path.empty()) {
      report.write_csv(report_path);
      std::ofstream(fs::path(report_path).replace_extension(".txt")) << report.format_table();
    }
  }

  const auto split = signals::split_dataset(ds, cfg.split);
  std::optional<baseline::BaselineModel> model;
  if (!model_path.empty()) {
    model = baseline::BaselineModel::load(model_path);
  } else {
    auto [trained, tr] = baseline::train_baseline(ds, split, cfg.train_config());
    print_tuning(tr);
    model = std::move(trained);
  }
  const auto result = eval::evaluate_baseline(*model, ds, split.test);
  const auto summary = eval::format_baseline_summary(result);
  std::cout << "\nGolden baseline on the test split\n" << summary;
  if (!summary_path.empty()) std::ofstream(summary_path) << summary;
  return 0;
}

int cmd_score(const std::string& model_path, const std::string& data_path, const std::string& out_path,
              std::optional<double> threshold) {
  const auto model = baseline::BaselineModel::load(model_path);
  const auto ds = signals::load_dataset(data_path, signals::format_from_path(data_path));
  ds.validate();
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw Error("cannot write " + out_path);
  }
  std::ostream& out = out_path.empty() ? std::cout : file;
  out << "stroke_id,label,score,raw_distance,is_anomaly,threshold_used,A,B,C,D,E,F\n";
  for (const auto& s : ds.strokes) {
    const auto r = baseline::score_stroke(model, s, threshold);
    const auto& d = r.decision;
    out << s.stroke_id << ',' << signals::to_string(s.label) << ',' << num(d.score) << ','
        << (d.raw_distance ? num(*d.raw_distance) : "") << ',' << (d.is_anomaly ? 1 : 0) << ',' << num(d.threshold_used);
    for (auto p : segmentation::kPoints) {
      out << ',';
      if (r.features.segmentation) out << r.features.segmentation->point(p);
    }
    out << '\n';
  }
  return 0;
}

#ifdef STAMPING_WITH_SERVICE
int cmd_serve(const Common& common, const std::string& model_path, std::optional<int> port,
              const std::string& replay_path, std::optional<double> rate, std::optional<std::string> bind,
              bool exit_after_replay) {
  const auto cfg = common.config();
  auto model = baseline::BaselineModel::load(model_path);
  service::MonitorService svc(std::move(model), {cfg.stroke_cache_size, model_path, cfg.event_log});
  service::HttpServer server(svc, bind.value_or(cfg.bind_address), static_cast<std::uint16_t>(port.value_or(cfg.port)));
  server.start();
  std::printf("listening on %s:%u (threshold %g)\n", bind.value_or(cfg.bind_address).c_str(), server.port(),
              svc.threshold());
  std::fflush(stdout);

  std::optional<service::Replayer> replayer;
  if (!replay_path.empty()) {
    auto ds = signals::load_dataset(replay_path, signals::format_from_path(replay_path));
    ds.validate();
    const double r = rate.value_or(cfg.replay_rate_per_min);
    std::printf("replaying %zu strokes at %g/min\n", ds.strokes.size(), r);
    replayer.emplace(svc, std::move(ds), r);
    replayer->start();
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) {
    if (exit_after_replay && replayer && replayer->finished()) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  if (replayer) {
    replayer->stop();
    replayer->wait();
    if (!replayer->last_error().empty()) std::fprintf(stderr, "replay error: %s\n", replayer->last_error().c_str());
  }
  server.stop();
  return 0;
}
#endif

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stamping-stroke anomaly monitor"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common synth_c, train_c, eval_c, serve_c;

  auto* synth = app.add_subcommand("synth", "Write a synthetic stroke dataset");
  add_common(synth, synth_c, false);
  std::string synth_out;
  std::optional<std::size_t> n_normal, n_anomaly;
  synth->add_option("--out,-o", synth_out, "Output file (.csv or binary)")->required();
  synth->add_option("--normal", n_normal, "Number of normal strokes");
  synth->add_option("--anomaly", n_anomaly, "Number of anomalous strokes");

  auto* train = app.add_subcommand("train", "Train and calibrate the golden-baseline model");
  add_common(train, train_c, true);
  std::string train_model;
  train->add_option("--model,-m", train_model, "Model file to write")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Feature-set comparison and golden-baseline test summary");
  add_common(evaluate, eval_c, true);
  std::string eval_model, eval_report, eval_summary;
  bool skip_comparison = false;
  evaluate->add_option("--model,-m", eval_model, "Evaluate this model instead of training one")->check(CLI::ExistingFile);
  evaluate->add_option("--report", eval_report, "Comparison report CSV (a .txt table is written beside it)");
  evaluate->add_option("--summary", eval_summary, "Golden-baseline summary text file");
  evaluate->add_flag("--skip-comparison", skip_comparison, "Only run the golden-baseline evaluation");

  auto* score = app.add_subcommand("score", "Score a dataset offline to CSV");
  std::string score_model, score_data, score_out;
  std::optional<double> score_threshold;
  score->add_option("--model,-m", score_model, "Model file")->required()->check(CLI::ExistingFile);
  score->add_option("--data", score_data, "Dataset file")->required()->check(CLI::ExistingFile);
  score->add_option("--out,-o", score_out, "Output CSV (stdout when omitted)");
  score->add_option("--threshold", score_threshold, "Override the model threshold")->check(CLI::Range(0.0, 1.0));

#ifdef STAMPING_WITH_SERVICE
  auto* serve = app.add_subcommand("serve", "Run the HTTP/WebSocket monitoring service");
  add_common(serve, serve_c, false);
  std::string serve_model, replay_path;
  std::optional<int> port;
  std::optional<double> rate;
  std::optional<std::string> bind;
  bool exit_after_replay = false;
  serve->add_option("--model,-m", serve_model, "Model file")->required()->check(CLI::ExistingFile);
  serve->add_option("--port,-p", port, "Listen port (0 picks a free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--bind", bind, "Listen address");
  serve->add_option("--replay", replay_path, "Replay this dataset into the service")->check(CLI::ExistingFile);
  serve->add_option("--rate", rate, "Replay rate in strokes per minute")->check(CLI::PositiveNumber);
  serve->add_flag("--exit-after-replay", exit_after_replay, "Stop once the replay has finished");
#endif

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_c, n_normal, n_anomaly, synth_out);
    if (train->parsed()) return cmd_train(train_c, train_model);
    if (evaluate->parsed()) return cmd_evaluate(eval_c, eval_model, eval_report, eval_summary, skip_comparison);
    if (score->parsed()) return cmd_score(score_model, score_data, score_out, score_threshold);
#ifdef STAMPING_WITH_SERVICE
    if (serve->parsed()) return cmd_serve(serve_c, serve_model, port, replay_path, rate, bind, exit_after_replay);
#endif
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
