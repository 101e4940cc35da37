#pragma once

// Streaming monitor: scores strokes with a shared model, publishes ordered
// events, holds the operator threshold and a cache of recent strokes.

#include <array>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "stamping/baseline.hpp"
#include "stamping/signals.hpp"

namespace stamping::service {

struct ScoreEvent {
  std::uint64_t seq = 0;
  std::string stroke_id;
  std::int64_t timestamp_ms = 0;  // Unix epoch
  baseline::Decision decision;
  double sample_rate_hz = 0.0;
  std::optional<std::array<std::size_t, 6>> boundaries;  // A..F sample indices
  std::optional<signals::Label> label;

  /// {"type": "score", ...}; boundaries also given in ms.
  nlohmann::json to_json() const;
  static ScoreEvent from_json(const nlohmann::json& j);
};

struct ThresholdEvent {
  std::uint64_t seq = 0;
  std::int64_t timestamp_ms = 0;
  double threshold = 0.5;

  nlohmann::json to_json() const;  // {"type": "threshold", ...}
};

class MonitorService {
 public:
  struct Options {
    std::size_t cache_size = 100;
    /// Threshold changes are persisted next to this model file when set.
    std::filesystem::path model_path;
    /// CSV log of score events when set.
    std::filesystem::path event_log;
  };

  /// Receives every serialized event in publication order. Called with the
  /// publication lock held, so it must not block or call back into the
  /// service. Returning false unsubscribes.
  using Listener = std::function<bool(const std::string& message)>;

  MonitorService(baseline::BaselineModel model, Options options);
  ~MonitorService();
  MonitorService(const MonitorService&) = delete;
  MonitorService& operator=(const MonitorService&) = delete;

  /// Runs the full pipeline and publishes one event. Throws for invalid
  /// strokes; nothing is published then.
  ScoreEvent score(const signals::StrokeSignal& stroke);

  /// Throws ValidationError outside [0, 1], leaving the threshold unchanged.
  double set_threshold(double value);
  double threshold() const;

  nlohmann::json model_info() const;
  const baseline::BaselineModel& model() const { return model_; }

  /// Filtered samples, segmentation and event of a recently scored stroke.
  std::optional<nlohmann::json> cached_stroke(const std::string& stroke_id) const;

  std::uint64_t subscribe(Listener listener);
  void unsubscribe(std::uint64_t id);
  std::size_t subscriber_count() const;

 private:
  struct CacheEntry {
    std::vector<double> filtered;
    std::optional<nlohmann::json> segmentation;
    nlohmann::json event;
  };

  void publish(const std::string& message);  // state_mutex_ held
  void cache_insert(const std::string& id, CacheEntry entry);

  const baseline::BaselineModel model_;
  const Options options_;

  mutable std::mutex state_mutex_;
  double threshold_;
  std::uint64_t seq_ = 0;
  std::uint64_t next_listener_ = 1;
  std::map<std::uint64_t, Listener> listeners_;
  std::ofstream log_;

  mutable std::mutex cache_mutex_;
  std::list<std::string> cache_order_;  // most recent first
  std::unordered_map<std::string, std::pair<CacheEntry, std::list<std::string>::iterator>> cache_;
};

/// Feeds a dataset into the service at a fixed cadence: stroke i is scored
/// at start + (i + 1) * 60 / rate seconds.
class Replayer {
 public:
  Replayer(MonitorService& service, signals::StrokeDataset dataset, double rate_per_min);
  ~Replayer();

  void start();
  void stop();
  void wait();
  std::size_t emitted() const { return emitted_.load(); }
  /// True once every stroke has been fed (or the replay was stopped).
  bool finished() const { return finished_.load(); }
  /// Error message of the first stroke that failed to score, if any.
  std::string last_error() const;

 private:
  void run();

  MonitorService& service_;
  signals::StrokeDataset dataset_;
  double rate_per_min_;
  std::thread thread_;
  std::atomic<std::size_t> emitted_{0};
  std::atomic<bool> finished_{false};
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  bool stop_ = false;
  std::string error_;
};

}  // namespace stamping::service
