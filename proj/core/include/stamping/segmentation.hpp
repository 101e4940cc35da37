#pragma once

// Critical points A-F and stages S1-S7 of a filtered stroke.
//
// The detector works on a centred moving-RMS envelope:
//   sigma0  median envelope over the idle head of the stroke
//   A       first sustained rise above k_on * sigma0
//   D       global envelope maximum (fracture impulse)
//   F       end of the last sustained stretch above k_off * sigma0
//   B, C    the two strongest rising inflections between A and D, i.e. the
//           largest local maxima of the smoothed envelope derivative
//   E       first sustained drop below half the peak after D

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stamping/error.hpp"
#include "stamping/signals.hpp"

namespace stamping::segmentation {

enum class Point { A = 0, B, C, D, E, F };
enum class Stage { S1 = 0, S2, S3, S4, S5, S6, S7 };

inline constexpr std::array<Point, 6> kPoints{Point::A, Point::B, Point::C, Point::D, Point::E, Point::F};
inline constexpr std::array<Stage, 7> kStages{Stage::S1, Stage::S2, Stage::S3, Stage::S4,
                                              Stage::S5, Stage::S6, Stage::S7};

std::string to_string(Point p);
std::string to_string(Stage s);

/// Half-open sample index range.
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return end == begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct SegmentationConfig {
  double envelope_window_ms = 0.5;
  double onset_factor = 5.0;    // k_on
  double release_factor = 3.0;  // k_off
  double idle_fraction = 0.05;
  double min_stage_ms = 0.2;
  /// Moving-average length applied before differentiating the envelope.
  double derivative_smoothing_ms = 1.0;
  /// Minimum spacing between the B and C inflection candidates.
  double inflection_separation_ms = 2.0;
  /// The inflection search skips this much after A (contact transient) and
  /// before D (fracture impulse rise).
  double onset_guard_ms = 1.5;
  double peak_guard_ms = 2.0;

  void validate() const;
};

class StageSegmentation {
 public:
  /// Throws ValidationError unless A < B < C < D < E < F <= length.
  StageSegmentation(std::array<std::size_t, 6> points, std::size_t length, std::vector<double> envelope = {});

  std::size_t point(Point p) const { return points_[static_cast<std::size_t>(p)]; }
  const std::array<std::size_t, 6>& points() const { return points_; }
  IndexRange stage(Stage s) const;
  std::size_t length() const { return length_; }
  const std::vector<double>& envelope() const { return envelope_; }

  /// {"points": {"A": i, ...}, "stages": {"S1": [begin, end], ...}, "length": n}
  nlohmann::json to_json() const;
  static StageSegmentation from_json(const nlohmann::json& j);

 private:
  std::array<std::size_t, 6> points_;
  std::size_t length_;
  std::vector<double> envelope_;
};

class NoActivityDetected : public Error {
 public:
  using Error::Error;
};

/// Detection ran but the points could not be ordered. `partial()` holds what
/// was found (missing points are nullopt).
class DegenerateStroke : public Error {
 public:
  DegenerateStroke(const std::string& what, std::array<std::optional<std::size_t>, 6> partial)
      : Error(what), partial_(partial) {}
  const std::array<std::optional<std::size_t>, 6>& partial() const { return partial_; }

 private:
  std::array<std::optional<std::size_t>, 6> partial_;
};

/// Centred moving RMS with a window of `window` samples (clipped at the edges).
std::vector<double> moving_rms(std::span<const double> x, std::size_t window);

StageSegmentation segment_stroke(const signals::StrokeSignal& filtered, const SegmentationConfig& config);

std::span<const double> stage_slice(const signals::StrokeSignal& signal, const StageSegmentation& seg, Stage stage);

}  // namespace stamping::segmentation
