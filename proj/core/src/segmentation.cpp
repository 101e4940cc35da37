#include "stamping/segmentation.hpp"

#include <algorithm>
#include <cmath>

namespace stamping::segmentation {

std::string to_string(Point p) { return std::string(1, static_cast<char>('A' + static_cast<int>(p))); }
std::string to_string(Stage s) { return "S" + std::to_string(static_cast<int>(s) + 1); }

void SegmentationConfig::validate() const {
  if (!(envelope_window_ms > 0.0)) throw ValidationError("envelope_window_ms must be positive");
  if (!(release_factor > 0.0 && onset_factor > release_factor))
    throw ValidationError("segmentation factors must satisfy k_on > k_off > 0");
  if (!(idle_fraction > 0.0 && idle_fraction < 0.5)) throw ValidationError("idle_fraction must lie in (0, 0.5)");
  if (!(min_stage_ms > 0.0)) throw ValidationError("min_stage_ms must be positive");
  if (!(derivative_smoothing_ms > 0.0 && inflection_separation_ms > 0.0))
    throw ValidationError("inflection parameters must be positive");
  if (onset_guard_ms < 0.0 || peak_guard_ms < 0.0) throw ValidationError("guards must be non-negative");
}

StageSegmentation::StageSegmentation(std::array<std::size_t, 6> points, std::size_t length,
                                     std::vector<double> envelope)
    : points_(points), length_(length), envelope_(std::move(envelope)) {
  for (std::size_t i = 1; i < points_.size(); ++i)
    if (!(points_[i - 1] < points_[i])) throw ValidationError("critical points must be strictly increasing");
  if (points_.back() > length_) throw ValidationError("point F lies beyond the end of the stroke");
}

IndexRange StageSegmentation::stage(Stage s) const {
  const auto k = static_cast<std::size_t>(s);
  const std::size_t begin = k == 0 ? 0 : points_[k - 1];
  const std::size_t end = k == 6 ? length_ : points_[k];
  return {begin, end};
}

nlohmann::json StageSegmentation::to_json() const {
  nlohmann::json j;
  for (auto p : kPoints) j["points"][to_string(p)] = point(p);
  for (auto s : kStages) {
    const auto r = stage(s);
    j["stages"][to_string(s)] = {r.begin, r.end};
  }
  j["length"] = length_;
  return j;
}

StageSegmentation StageSegmentation::from_json(const nlohmann::json& j) {
  std::array<std::size_t, 6> pts{};
  for (auto p : kPoints) pts[static_cast<std::size_t>(p)] = j.at("points").at(to_string(p)).get<std::size_t>();
  return StageSegmentation(pts, j.at("length").get<std::size_t>());
}

std::vector<double> moving_rms(std::span<const double> x, std::size_t window) {
  const std::size_t n = x.size();
  window = std::max<std::size_t>(window, 1);
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  std::vector<double> env(n);
  const std::size_t half = window / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + window - half);
    env[i] = std::sqrt(std::max(0.0, (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo)));
  }
  return env;
}

namespace {

std::vector<double> moving_average(const std::vector<double>& x, std::size_t window) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  const std::size_t half = window / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, lo + window);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

/// Start of the first run of `run` consecutive indices >= `from` satisfying `pred`.
template <typename Pred>
std::optional<std::size_t> first_sustained(std::size_t from, std::size_t n, std::size_t run, Pred pred) {
  std::size_t count = 0;
  for (std::size_t i = from; i < n; ++i) {
    count = pred(i) ? count + 1 : 0;
    if (count >= run) return i + 1 - run;
  }
  return std::nullopt;
}

std::size_t to_samples(double ms, double rate) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ms * rate / 1000.0)));
}

}  // namespace

StageSegmentation segment_stroke(const signals::StrokeSignal& filtered, const SegmentationConfig& config) {
  config.validate();
  const double rate = filtered.sample_rate_hz;
  const std::size_t n = filtered.samples.size();
  const std::size_t window = to_samples(config.envelope_window_ms, rate);
  if (n <= 10 * window)
    throw LengthError("stroke '" + filtered.stroke_id + "' is shorter than 10 envelope windows");
  const std::size_t sustain = to_samples(config.min_stage_ms, rate);

  auto env = moving_rms(filtered.samples, window);

  const std::size_t idle = std::max<std::size_t>(1, static_cast<std::size_t>(config.idle_fraction * static_cast<double>(n)));
  std::vector<double> head(env.begin(), env.begin() + static_cast<std::ptrdiff_t>(idle));
  std::nth_element(head.begin(), head.begin() + static_cast<std::ptrdiff_t>(idle / 2), head.end());
  const double sigma0 = head[idle / 2];

  std::array<std::optional<std::size_t>, 6> found{};
  const double onset = config.onset_factor * sigma0;
  found[0] = first_sustained(0, n, sustain, [&](std::size_t i) { return env[i] > onset; });
  if (!found[0]) throw NoActivityDetected("stroke '" + filtered.stroke_id + "' never rises above the idle level");
  const std::size_t a = *found[0];

  const std::size_t d = static_cast<std::size_t>(std::max_element(env.begin(), env.end()) - env.begin());
  found[3] = d;

  const double release = config.release_factor * sigma0;
  {
    std::size_t count = 0;
    for (std::size_t i = n; i-- > 0;) {
      count = env[i] > release ? count + 1 : 0;
      if (count >= sustain) {
        // i is the start of the trailing `sustain` samples; walk to the run's end.
        std::size_t end = i + sustain;
        while (end < n && env[end] > release) ++end;
        found[5] = end;
        break;
      }
    }
  }

  const double half_peak = 0.5 * env[d];
  found[4] = first_sustained(d + 1, n, sustain, [&](std::size_t i) { return env[i] < half_peak; });

  // Rising inflections between A and D.
  const auto smooth = moving_average(env, to_samples(config.derivative_smoothing_ms, rate));
  const std::size_t lo = a + to_samples(config.onset_guard_ms, rate);
  const std::size_t guard = to_samples(config.peak_guard_ms, rate);
  const std::size_t hi = d > guard ? d - guard : 0;
  std::vector<std::pair<double, std::size_t>> peaks;
  if (lo >= 1) {
    auto deriv = [&](std::size_t i) { return 0.5 * (smooth[i + 1] - smooth[i - 1]); };
    for (std::size_t i = std::max<std::size_t>(lo, 2); i + 2 < n && i < hi; ++i) {
      const double v = deriv(i);
      if (v > 0.0 && v > deriv(i - 1) && v >= deriv(i + 1)) peaks.emplace_back(v, i);
    }
  }
  // Strongest first, earlier index on ties.
  std::sort(peaks.begin(), peaks.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  const std::size_t separation = to_samples(config.inflection_separation_ms, rate);
  std::vector<std::size_t> chosen;
  for (const auto& [v, i] : peaks) {
    const bool far = std::all_of(chosen.begin(), chosen.end(), [&](std::size_t c) {
      return (i > c ? i - c : c - i) >= separation;
    });
    if (far) chosen.push_back(i);
    if (chosen.size() == 2) break;
  }
  std::sort(chosen.begin(), chosen.end());
  if (!chosen.empty()) found[1] = chosen[0];
  if (chosen.size() == 2) found[2] = chosen[1];

  std::array<std::size_t, 6> pts{};
  for (std::size_t k = 0; k < 6; ++k) {
    if (!found[k])
      throw DegenerateStroke("stroke '" + filtered.stroke_id + "': point " + to_string(static_cast<Point>(k)) +
                                 " not found",
                             found);
    pts[k] = *found[k];
  }
  for (std::size_t k = 1; k < 6; ++k)
    if (!(pts[k - 1] < pts[k]))
      throw DegenerateStroke("stroke '" + filtered.stroke_id + "': critical points out of order", found);
  return StageSegmentation(pts, n, std::move(env));
}

std::span<const double> stage_slice(const signals::StrokeSignal& signal, const StageSegmentation& seg, Stage stage) {
  const auto r = seg.stage(stage);
  if (r.end > signal.samples.size()) throw DimensionError("segmentation does not match the signal length");
  return std::span<const double>(signal.samples).subspan(r.begin, r.size());
}

}  // namespace stamping::segmentation
