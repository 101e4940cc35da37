#include <doctest.h>

#include "stamping/error.hpp"
#include "stamping/pipeline.hpp"
#include "test_util.hpp"

using namespace stamping;
using namespace stamping::pipeline;

TEST_CASE("preprocessing JSON round-trip and validation") {
  Preprocessing p;
  p.filter.cutoff_hz = 2100.0;
  p.filter.order = 4;
  p.mode = dsp::FilterMode::ZeroPhase;
  p.segmentation.onset_factor = 6.5;
  const auto back = Preprocessing::from_json(nlohmann::json::parse(p.to_json().dump()));
  CHECK(back.filter.cutoff_hz == 2100.0);
  CHECK(back.filter.order == 4);
  CHECK(back.mode == dsp::FilterMode::ZeroPhase);
  CHECK(back.segmentation.onset_factor == 6.5);
  CHECK(back.to_json() == p.to_json());

  CHECK(parse_filter_mode(to_string(dsp::FilterMode::Causal)) == dsp::FilterMode::Causal);
  CHECK_THROWS_AS(parse_filter_mode("acausal"), ValidationError);
  CHECK_THROWS_AS(Preprocessing::from_json({{"filter", {{"order", 0}}}}), ValidationError);
}

TEST_CASE("stroke features match the stages run by hand") {
  const auto raw = signals::synthesize_stroke(signals::GeneratorParams{}, signals::Label::Normal, 9);
  Preprocessing p;
  const auto f = extract_stroke_features(raw, p, true);
  REQUIRE(f.segmented());
  REQUIRE(f.filtered.has_value());
  CHECK(f.segmentation_error.empty());

  const auto cascade = dsp::design_butterworth_lowpass({p.filter.cutoff_hz, p.filter.order, raw.sample_rate_hz});
  const auto filtered = dsp::apply_filter(cascade, raw, p.mode);
  CHECK(f.filtered->samples == filtered.samples);
  const auto seg = segmentation::segment_stroke(filtered, p.segmentation);
  CHECK(f.segmentation->points() == seg.points());
  CHECK(f.segmental->values == features::extract_segmental_features(filtered, seg).values);
  CHECK(f.statistical->values == features::extract_statistical_features(filtered).features.values);
  CHECK_FALSE(extract_stroke_features(raw, p).filtered.has_value());
}

TEST_CASE("stroke sample rate overrides the configured one") {
  auto raw = signals::synthesize_stroke(signals::GeneratorParams{}, signals::Label::Normal, 10);
  raw.sample_rate_hz = 50000.0;
  Preprocessing p;
  p.filter.sample_rate_hz = 100000.0;
  const auto f = extract_stroke_features(raw, p, true);
  const auto cascade = dsp::design_butterworth_lowpass({p.filter.cutoff_hz, p.filter.order, 50000.0});
  CHECK(f.filtered->samples == dsp::filter_samples(cascade, raw.samples, p.mode));
}

TEST_CASE("unsegmentable strokes keep statistical features") {
  const auto silent = testutil::make_stroke("quiet", std::vector<double>(8000, 0.0));
  const auto f = extract_stroke_features(silent, {});
  CHECK_FALSE(f.segmented());
  CHECK_FALSE(f.segmental.has_value());
  CHECK_FALSE(f.segmentation_error.empty());
  REQUIRE(f.statistical.has_value());

  auto bad = silent;
  bad.samples[3] = std::nan("");
  CHECK_THROWS_AS(extract_stroke_features(bad, {}), ValidationError);
}

TEST_CASE("dataset features index bookkeeping") {
  auto ds = signals::synthesize_dataset(signals::GeneratorParams{}, 6, 2, 4);
  ds.strokes.insert(ds.strokes.begin() + 3, testutil::make_stroke("quiet", std::vector<double>(8000, 0.0)));
  const auto out = extract_dataset_features(ds, {});
  CHECK(out.statistical.rows() == 9);
  CHECK(out.segmental.rows() == 8);
  CHECK(out.unsegmented == std::vector<std::size_t>{3});
  CHECK(out.segmental_row[3] == -1);
  for (std::size_t r = 0; r < out.segmented.size(); ++r) {
    const auto i = out.segmented[r];
    CHECK(out.segmental_row[i] == static_cast<long>(r));
    const auto single = extract_stroke_features(ds.strokes[i], {});
    CHECK(out.segmental.row(r).values == single.segmental->values);
  }

  const auto none = extract_dataset_features(signals::StrokeDataset{{testutil::make_stroke("q", std::vector<double>(8000, 0.0))}}, {});
  CHECK(none.segmental.rows() == 0);
  CHECK(none.segmental.names == features::segmental_feature_names());
}
