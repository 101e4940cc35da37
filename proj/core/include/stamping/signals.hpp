#pragma once

// Stroke signal data model, dataset files, the synthetic stroke generator and
// dataset splitting.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace stamping::signals {

enum class Label : std::uint8_t { Normal = 0, Anomaly = 1, Unlabeled = 2 };

std::string_view to_string(Label label);
/// Accepts "normal", "anomaly", "unlabeled" (also "" for unlabeled).
Label parse_label(std::string_view text);

/// Boundary instants A..F as recorded by the synthetic generator.
struct GroundTruth {
  std::array<double, 6> boundaries_ms{};  // A, B, C, D, E, F
  double s2_level = 0.0;                  // S2 envelope plateau before gain
  double s2_duration_ms = 0.0;
};

/// One stamping cycle, pre-windowed by the cam angle.
struct StrokeSignal {
  std::string stroke_id;
  std::vector<double> samples;
  double sample_rate_hz = 100000.0;
  std::pair<double, double> cam_window_deg{150.0, 200.0};
  Label label = Label::Unlabeled;
  std::optional<GroundTruth> ground_truth;

  /// Throws ValidationError unless samples.size() >= 2, all samples are
  /// finite and sample_rate_hz > 0.
  void validate() const;
  double duration_ms() const { return 1000.0 * static_cast<double>(samples.size()) / sample_rate_hz; }
  double ms_to_index(double ms) const { return ms * sample_rate_hz / 1000.0; }
};

struct BandBurst {
  double low_hz = 0.0;
  double high_hz = 0.0;
  double relative_amplitude = 0.0;
};

/// Signature applied to stage S2 of anomalous strokes: earlier contact,
/// lower S2 level and a longer S2 stage.
struct AnomalyShift {
  double s2_advance_ms = 2.0;
  double s2_peak_scale = 0.6;
  double s2_stretch = 1.4;
};

struct GeneratorParams {
  double sample_rate_hz = 100000.0;
  std::size_t n_samples_min = 17000;
  std::size_t n_samples_max = 18000;
  std::vector<BandBurst> band_bursts{{1800.0, 2500.0, 1.0}, {2500.0, 4000.0, 0.15}, {6000.0, 7000.0, 0.15}};
  /// Nominal S1..S6 durations; S7 takes the remainder of the cycle.
  std::array<double, 6> stage_durations_ms{20.0, 8.0, 12.0, 14.0, 10.0, 25.0};
  double noise_floor_rms = 0.005;
  /// Low-frequency machine hum present through the whole cycle.
  double hum_amplitude = 0.003;
  double hum_low_hz = 300.0;
  double hum_high_hz = 600.0;
  double peak_amplitude = 1.0;
  /// Relative standard deviations of the per-stroke stage durations and gains.
  double duration_jitter = 0.03;
  double amplitude_jitter = 0.05;
  AnomalyShift anomaly_shift;

  void validate() const;
};

struct FileSource {
  std::filesystem::path path;
};
struct SyntheticSource {
  std::uint64_t seed = 0;
  GeneratorParams params;
};
using Provenance = std::variant<FileSource, SyntheticSource>;

struct StrokeDataset {
  std::vector<StrokeSignal> strokes;
  Provenance provenance = FileSource{};

  /// Throws ConsistencyError when strokes disagree on sample rate.
  void validate() const;
  std::size_t count(Label label) const;
  /// Copy of the strokes at `indices`, in that order.
  StrokeDataset subset(const std::vector<std::size_t>& indices) const;
};

enum class FileFormat { Csv, Binary };

/// Csv for ".csv", Binary for anything else.
FileFormat format_from_path(const std::filesystem::path& path);

StrokeDataset load_dataset(const std::filesystem::path& path, FileFormat format);
void write_dataset(const StrokeDataset& dataset, const std::filesystem::path& path, FileFormat format);

/// Deterministic in (params, label, seed). Normal and anomalous strokes drawn
/// with the same seed share every random draw; only the S2 shift differs.
StrokeSignal synthesize_stroke(const GeneratorParams& params, Label label, std::uint64_t seed);

/// `n_normal + n_anomaly` strokes in a seed-determined interleaved order.
StrokeDataset synthesize_dataset(const GeneratorParams& params, std::size_t n_normal,
                                 std::size_t n_anomaly, std::uint64_t seed);

enum class SplitMode { Supervised, OneClass };

struct SplitSpec {
  SplitMode mode = SplitMode::OneClass;
  // Supervised mode: stratified train/test fractions, then training normals
  // are subsampled to `subsample_target_ratio` per training anomaly.
  double train_fraction = 5.0 / 7.0;
  double test_fraction = 2.0 / 7.0;
  double subsample_target_ratio = 10.0;
  // One-class mode: this many normals train; the remaining normals and all
  // anomalies are divided evenly between validation and test.
  std::size_t one_class_train_normals = 820;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Indices into the split dataset.
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

DatasetSplit split_dataset(const StrokeDataset& dataset, const SplitSpec& spec);

/// Keeps every anomaly in `pool` and at most round(ratio * anomalies) normals.
std::vector<std::size_t> subsample_normals(const StrokeDataset& dataset, const std::vector<std::size_t>& pool,
                                           double ratio, std::uint64_t seed);

}  // namespace stamping::signals
