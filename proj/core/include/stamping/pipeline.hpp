#pragma once

// Raw stroke -> filtered signal -> stages -> segmental/statistical features.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stamping/dsp.hpp"
#include "stamping/features.hpp"
#include "stamping/segmentation.hpp"
#include "stamping/signals.hpp"

namespace stamping::pipeline {

struct Preprocessing {
  dsp::FilterSpec filter;
  dsp::FilterMode mode = dsp::FilterMode::Causal;
  segmentation::SegmentationConfig segmentation;

  void validate() const;
  nlohmann::json to_json() const;
  static Preprocessing from_json(const nlohmann::json& j);
};

std::string to_string(dsp::FilterMode mode);
dsp::FilterMode parse_filter_mode(std::string_view text);

struct StrokeFeatures {
  std::optional<signals::StrokeSignal> filtered;  // only when requested
  std::optional<segmentation::StageSegmentation> segmentation;
  std::optional<features::FeatureVector> segmental;
  std::optional<features::FeatureVector> statistical;
  /// Why segmentation failed, empty on success.
  std::string segmentation_error;

  bool segmented() const { return segmentation.has_value(); }
};

/// Filters the stroke (the sample rate in `prep.filter` is replaced by the
/// stroke's own), segments it and extracts features. Segmentation failures
/// are recorded, not thrown; invalid strokes still throw.
StrokeFeatures extract_stroke_features(const signals::StrokeSignal& stroke, const Preprocessing& prep,
                                       bool keep_filtered = false);

struct DatasetFeatures {
  /// Rows only for strokes that segmented, in `segmented` order.
  features::FeatureTable segmental;
  /// Rows for every stroke.
  features::FeatureTable statistical;
  std::vector<std::size_t> segmented;    // dataset indices with a segmental row
  std::vector<std::size_t> unsegmented;  // dataset indices that failed
  /// Dataset index -> row in `segmental`, or -1.
  std::vector<long> segmental_row;
};

DatasetFeatures extract_dataset_features(const signals::StrokeDataset& dataset, const Preprocessing& prep);

}  // namespace stamping::pipeline
