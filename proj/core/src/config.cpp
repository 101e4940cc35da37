#include "stamping/config.hpp"

#include <fstream>
#include <set>

#include "stamping/error.hpp"

namespace stamping {

namespace {

std::string split_mode_name(signals::SplitMode m) { return m == signals::SplitMode::OneClass ? "one_class" : "supervised"; }

signals::SplitMode parse_split_mode(const std::string& s) {
  if (s == "one_class") return signals::SplitMode::OneClass;
  if (s == "supervised") return signals::SplitMode::Supervised;
  throw ValidationError("unknown split mode '" + s + "'");
}

nlohmann::json generator_json(const signals::GeneratorParams& g) {
  nlohmann::json bands = nlohmann::json::array();
  for (const auto& b : g.band_bursts)
    bands.push_back({{"low_hz", b.low_hz}, {"high_hz", b.high_hz}, {"relative_amplitude", b.relative_amplitude}});
  return {{"sample_rate_hz", g.sample_rate_hz},
          {"n_samples_min", g.n_samples_min},
          {"n_samples_max", g.n_samples_max},
          {"band_bursts", bands},
          {"stage_durations_ms", g.stage_durations_ms},
          {"noise_floor_rms", g.noise_floor_rms},
          {"hum_amplitude", g.hum_amplitude},
          {"hum_low_hz", g.hum_low_hz},
          {"hum_high_hz", g.hum_high_hz},
          {"peak_amplitude", g.peak_amplitude},
          {"duration_jitter", g.duration_jitter},
          {"amplitude_jitter", g.amplitude_jitter},
          {"anomaly_shift",
           {{"s2_advance_ms", g.anomaly_shift.s2_advance_ms},
            {"s2_peak_scale", g.anomaly_shift.s2_peak_scale},
            {"s2_stretch", g.anomaly_shift.s2_stretch}}}};
}

signals::GeneratorParams generator_from_json(const nlohmann::json& j) {
  signals::GeneratorParams g;
  g.sample_rate_hz = j.value("sample_rate_hz", g.sample_rate_hz);
  g.n_samples_min = j.value("n_samples_min", g.n_samples_min);
  g.n_samples_max = j.value("n_samples_max", g.n_samples_max);
  if (j.contains("band_bursts")) {
    g.band_bursts.clear();
    for (const auto& b : j.at("band_bursts"))
      g.band_bursts.push_back({b.at("low_hz"), b.at("high_hz"), b.at("relative_amplitude")});
  }
  g.stage_durations_ms = j.value("stage_durations_ms", g.stage_durations_ms);
  g.noise_floor_rms = j.value("noise_floor_rms", g.noise_floor_rms);
  g.hum_amplitude = j.value("hum_amplitude", g.hum_amplitude);
  g.hum_low_hz = j.value("hum_low_hz", g.hum_low_hz);
  g.hum_high_hz = j.value("hum_high_hz", g.hum_high_hz);
  g.peak_amplitude = j.value("peak_amplitude", g.peak_amplitude);
  g.duration_jitter = j.value("duration_jitter", g.duration_jitter);
  g.amplitude_jitter = j.value("amplitude_jitter", g.amplitude_jitter);
  if (j.contains("anomaly_shift")) {
    const auto& a = j.at("anomaly_shift");
    g.anomaly_shift.s2_advance_ms = a.value("s2_advance_ms", g.anomaly_shift.s2_advance_ms);
    g.anomaly_shift.s2_peak_scale = a.value("s2_peak_scale", g.anomaly_shift.s2_peak_scale);
    g.anomaly_shift.s2_stretch = a.value("s2_stretch", g.anomaly_shift.s2_stretch);
  }
  return g;
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  std::set<std::string> k(known.begin(), known.end());
  for (const auto& [key, _] : j.items())
    if (!k.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
}

}  // namespace

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  split.seed = value;
  comparison.seed = value;
}

void RunConfig::validate() const {
  preprocessing.validate();
  grid.validate();
  split.validate();
  synth.generator.validate();
  comparison.validate();
  if (pca_components == 0) throw ValidationError("pca_components must be positive");
  if (!(replay_rate_per_min > 0.0)) throw ValidationError("replay rate must be positive");
  if (port < 0 || port > 65535) throw ValidationError("port must lie in [0, 65535]");
  if (stroke_cache_size == 0) throw ValidationError("stroke cache size must be positive");
}

nlohmann::json RunConfig::to_json() const {
  auto pre = preprocessing.to_json();
  std::vector<std::string> sets, classifiers;
  for (auto k : comparison.feature_sets) sets.push_back(features::to_string(k));
  for (auto c : comparison.classifiers) classifiers.push_back(eval::to_string(c));
  nlohmann::json j{
      {"seed", seed},
      {"filter", pre["filter"]},
      {"segmentation", pre["segmentation"]},
      {"features", {{"set", features::to_string(feature_set)}, {"pca_components", pca_components}}},
      {"model", {{"kernel", baseline::to_string(kernel)}, {"grid", grid.to_json()}}},
      {"split",
       {{"mode", split_mode_name(split.mode)},
        {"one_class_train_normals", split.one_class_train_normals},
        {"train_fraction", split.train_fraction},
        {"test_fraction", split.test_fraction},
        {"subsample_target_ratio", split.subsample_target_ratio}}},
      {"synth",
       {{"n_normal", synth.n_normal}, {"n_anomaly", synth.n_anomaly}, {"generator", generator_json(synth.generator)}}},
      {"comparison",
       {{"filter_mode", pipeline::to_string(comparison.preprocessing.mode)},
        {"feature_sets", sets},
        {"classifiers", classifiers},
        {"knn_k", comparison.knn_k},
        {"logreg_l2", comparison.logreg_l2},
        {"folds", comparison.folds},
        {"train_fraction", comparison.split.train_fraction},
        {"test_fraction", comparison.split.test_fraction},
        {"subsample_target_ratio", comparison.split.subsample_target_ratio}}},
      {"service",
       {{"bind_address", bind_address},
        {"port", port},
        {"replay_rate_per_min", replay_rate_per_min},
        {"stroke_cache_size", stroke_cache_size},
        {"event_log", event_log.string()}}}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j, {"seed", "filter", "segmentation", "features", "model", "split", "synth", "comparison", "service"},
                 "config");
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    nlohmann::json pre = nlohmann::json::object();
    if (j.contains("filter")) pre["filter"] = j.at("filter");
    if (j.contains("segmentation")) pre["segmentation"] = j.at("segmentation");
    c.preprocessing = pipeline::Preprocessing::from_json(pre);

    if (j.contains("features")) {
      const auto& f = j.at("features");
      reject_unknown(f, {"set", "pca_components"}, "features");
      if (f.contains("set")) c.feature_set = features::parse_feature_set(f.at("set").get<std::string>());
      c.pca_components = f.value("pca_components", c.pca_components);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m, {"kernel", "grid"}, "model");
      if (m.contains("kernel")) c.kernel = baseline::parse_kernel(m.at("kernel").get<std::string>());
      if (m.contains("grid")) c.grid = baseline::TuningGrid::from_json(m.at("grid"));
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      reject_unknown(s, {"mode", "one_class_train_normals", "train_fraction", "test_fraction", "subsample_target_ratio"},
                     "split");
      if (s.contains("mode")) c.split.mode = parse_split_mode(s.at("mode").get<std::string>());
      c.split.one_class_train_normals = s.value("one_class_train_normals", c.split.one_class_train_normals);
      c.split.train_fraction = s.value("train_fraction", c.split.train_fraction);
      c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
      c.split.subsample_target_ratio = s.value("subsample_target_ratio", c.split.subsample_target_ratio);
    }
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      reject_unknown(s, {"n_normal", "n_anomaly", "generator"}, "synth");
      c.synth.n_normal = s.value("n_normal", c.synth.n_normal);
      c.synth.n_anomaly = s.value("n_anomaly", c.synth.n_anomaly);
      if (s.contains("generator")) c.synth.generator = generator_from_json(s.at("generator"));
    }
    c.comparison.preprocessing = c.preprocessing;
    c.comparison.preprocessing.mode = dsp::FilterMode::ZeroPhase;
    if (j.contains("comparison")) {
      const auto& s = j.at("comparison");
      reject_unknown(s, {"filter_mode", "feature_sets", "classifiers", "knn_k", "logreg_l2", "folds", "train_fraction",
                         "test_fraction", "subsample_target_ratio"},
                     "comparison");
      if (s.contains("filter_mode"))
        c.comparison.preprocessing.mode = pipeline::parse_filter_mode(s.at("filter_mode").get<std::string>());
      if (s.contains("feature_sets")) {
        c.comparison.feature_sets.clear();
        for (const auto& k : s.at("feature_sets")) c.comparison.feature_sets.push_back(features::parse_feature_set(k.get<std::string>()));
      }
      if (s.contains("classifiers")) {
        c.comparison.classifiers.clear();
        for (const auto& k : s.at("classifiers")) c.comparison.classifiers.push_back(eval::parse_classifier(k.get<std::string>()));
      }
      c.comparison.knn_k = s.value("knn_k", c.comparison.knn_k);
      c.comparison.logreg_l2 = s.value("logreg_l2", c.comparison.logreg_l2);
      c.comparison.folds = s.value("folds", c.comparison.folds);
      c.comparison.split.train_fraction = s.value("train_fraction", c.comparison.split.train_fraction);
      c.comparison.split.test_fraction = s.value("test_fraction", c.comparison.split.test_fraction);
      c.comparison.split.subsample_target_ratio =
          s.value("subsample_target_ratio", c.comparison.split.subsample_target_ratio);
    }
    if (j.contains("service")) {
      const auto& s = j.at("service");
      reject_unknown(s, {"bind_address", "port", "replay_rate_per_min", "stroke_cache_size", "event_log"}, "service");
      c.bind_address = s.value("bind_address", c.bind_address);
      c.port = s.value("port", c.port);
      c.replay_rate_per_min = s.value("replay_rate_per_min", c.replay_rate_per_min);
      c.stroke_cache_size = s.value("stroke_cache_size", c.stroke_cache_size);
      c.event_log = s.value("event_log", std::string{});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.comparison.pca_components = c.pca_components;
  c.set_seed(c.seed);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

baseline::TrainConfig RunConfig::train_config() const {
  baseline::TrainConfig t;
  t.preprocessing = preprocessing;
  t.feature_set = feature_set;
  t.pca_components = pca_components;
  t.kernel = kernel;
  t.grid = grid;
  return t;
}

}  // namespace stamping
