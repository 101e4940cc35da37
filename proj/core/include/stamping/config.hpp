#pragma once

// Run configuration shared by the CLI and the monitoring service.

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "stamping/baseline.hpp"
#include "stamping/eval.hpp"
#include "stamping/pipeline.hpp"
#include "stamping/signals.hpp"

namespace stamping {

struct SynthConfig {
  std::size_t n_normal = 1368;
  std::size_t n_anomaly = 40;
  signals::GeneratorParams generator;
};

struct RunConfig {
  pipeline::Preprocessing preprocessing;  // model pipeline (causal by default)
  features::FeatureSetKind feature_set = features::FeatureSetKind::Optimal;
  std::size_t pca_components = 5;
  baseline::KernelKind kernel = baseline::KernelKind::Rbf;
  baseline::TuningGrid grid;
  signals::SplitSpec split;
  SynthConfig synth;
  eval::ComparisonConfig comparison;
  std::uint64_t seed = 0;

  std::string bind_address = "127.0.0.1";
  int port = 8080;
  double replay_rate_per_min = 70.0;
  std::size_t stroke_cache_size = 100;
  std::filesystem::path event_log;  // empty: no CSV log

  /// Sets the run seed and the split and comparison seeds derived from it.
  void set_seed(std::uint64_t value);

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown top-level keys are rejected.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);

  baseline::TrainConfig train_config() const;
};

}  // namespace stamping
