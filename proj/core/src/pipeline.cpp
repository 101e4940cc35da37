#include "stamping/pipeline.hpp"

#include "stamping/error.hpp"

namespace stamping::pipeline {

std::string to_string(dsp::FilterMode mode) { return mode == dsp::FilterMode::Causal ? "causal" : "zero_phase"; }

dsp::FilterMode parse_filter_mode(std::string_view text) {
  if (text == "causal") return dsp::FilterMode::Causal;
  if (text == "zero_phase") return dsp::FilterMode::ZeroPhase;
  throw ValidationError("unknown filter mode '" + std::string(text) + "'");
}

void Preprocessing::validate() const {
  filter.validate();
  segmentation.validate();
}

nlohmann::json Preprocessing::to_json() const {
  const auto& s = segmentation;
  return {{"filter", {{"cutoff_hz", filter.cutoff_hz}, {"order", filter.order}, {"mode", to_string(mode)}}},
          {"segmentation",
           {{"envelope_window_ms", s.envelope_window_ms},
            {"onset_factor", s.onset_factor},
            {"release_factor", s.release_factor},
            {"idle_fraction", s.idle_fraction},
            {"min_stage_ms", s.min_stage_ms},
            {"derivative_smoothing_ms", s.derivative_smoothing_ms},
            {"inflection_separation_ms", s.inflection_separation_ms},
            {"onset_guard_ms", s.onset_guard_ms},
            {"peak_guard_ms", s.peak_guard_ms}}}};
}

Preprocessing Preprocessing::from_json(const nlohmann::json& j) {
  Preprocessing p;
  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    p.filter.cutoff_hz = f.value("cutoff_hz", p.filter.cutoff_hz);
    p.filter.order = f.value("order", p.filter.order);
    if (f.contains("mode")) p.mode = parse_filter_mode(f.at("mode").get<std::string>());
  }
  if (j.contains("segmentation")) {
    const auto& s = j.at("segmentation");
    auto& c = p.segmentation;
    c.envelope_window_ms = s.value("envelope_window_ms", c.envelope_window_ms);
    c.onset_factor = s.value("onset_factor", c.onset_factor);
    c.release_factor = s.value("release_factor", c.release_factor);
    c.idle_fraction = s.value("idle_fraction", c.idle_fraction);
    c.min_stage_ms = s.value("min_stage_ms", c.min_stage_ms);
    c.derivative_smoothing_ms = s.value("derivative_smoothing_ms", c.derivative_smoothing_ms);
    c.inflection_separation_ms = s.value("inflection_separation_ms", c.inflection_separation_ms);
    c.onset_guard_ms = s.value("onset_guard_ms", c.onset_guard_ms);
    c.peak_guard_ms = s.value("peak_guard_ms", c.peak_guard_ms);
  }
  p.validate();
  return p;
}

StrokeFeatures extract_stroke_features(const signals::StrokeSignal& stroke, const Preprocessing& prep,
                                       bool keep_filtered) {
  stroke.validate();
  auto spec = prep.filter;
  spec.sample_rate_hz = stroke.sample_rate_hz;
  const auto cascade = dsp::design_butterworth_lowpass(spec);
  auto filtered = dsp::apply_filter(cascade, stroke, prep.mode);

  StrokeFeatures out;
  out.statistical = features::extract_statistical_features(filtered).features;
  try {
    out.segmentation = segmentation::segment_stroke(filtered, prep.segmentation);
    out.segmental = features::extract_segmental_features(filtered, *out.segmentation);
  } catch (const segmentation::NoActivityDetected& e) {
    out.segmentation_error = e.what();
  } catch (const segmentation::DegenerateStroke& e) {
    out.segmentation_error = e.what();
  } catch (const LengthError& e) {
    out.segmentation_error = e.what();
  }
  if (keep_filtered) out.filtered = std::move(filtered);
  return out;
}

DatasetFeatures extract_dataset_features(const signals::StrokeDataset& dataset, const Preprocessing& prep) {
  std::vector<features::FeatureVector> seg_rows, stat_rows;
  DatasetFeatures out;
  out.segmental_row.assign(dataset.strokes.size(), -1);
  for (std::size_t i = 0; i < dataset.strokes.size(); ++i) {
    auto f = extract_stroke_features(dataset.strokes[i], prep);
    stat_rows.push_back(std::move(*f.statistical));
    if (f.segmental) {
      out.segmental_row[i] = static_cast<long>(seg_rows.size());
      seg_rows.push_back(std::move(*f.segmental));
      out.segmented.push_back(i);
    } else {
      out.unsegmented.push_back(i);
    }
  }
  out.segmental = features::FeatureTable::from_rows(seg_rows);
  if (seg_rows.empty()) out.segmental.names = features::segmental_feature_names();
  out.statistical = features::FeatureTable::from_rows(stat_rows);
  return out;
}

}  // namespace stamping::pipeline
