#include "stamping/service.hpp"

#include <chrono>

#include "stamping/error.hpp"
#include "stamping/version.hpp"

namespace stamping::service {

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

nlohmann::json ScoreEvent::to_json() const {
  nlohmann::json j = baseline::to_json(decision);
  j["type"] = "score";
  j["seq"] = seq;
  j["stroke_id"] = stroke_id;
  j["timestamp_ms"] = timestamp_ms;
  j["sample_rate_hz"] = sample_rate_hz;
  if (boundaries) {
    nlohmann::json idx, ms;
    for (std::size_t k = 0; k < 6; ++k) {
      const std::string name(1, static_cast<char>('A' + k));
      idx[name] = (*boundaries)[k];
      ms[name] = 1000.0 * static_cast<double>((*boundaries)[k]) / sample_rate_hz;
    }
    j["boundaries"] = idx;
    j["boundaries_ms"] = ms;
  } else {
    j["boundaries"] = nullptr;
    j["boundaries_ms"] = nullptr;
  }
  j["label"] = label ? nlohmann::json(std::string(signals::to_string(*label))) : nlohmann::json(nullptr);
  return j;
}

ScoreEvent ScoreEvent::from_json(const nlohmann::json& j) {
  ScoreEvent e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.stroke_id = j.at("stroke_id").get<std::string>();
  e.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  e.sample_rate_hz = j.at("sample_rate_hz").get<double>();
  if (!j.at("raw_distance").is_null()) e.decision.raw_distance = j.at("raw_distance").get<double>();
  e.decision.score = j.at("score").get<double>();
  e.decision.is_anomaly = j.at("is_anomaly").get<bool>();
  e.decision.threshold_used = j.at("threshold_used").get<double>();
  if (!j.at("boundaries").is_null()) {
    std::array<std::size_t, 6> b{};
    for (std::size_t k = 0; k < 6; ++k) b[k] = j["boundaries"].at(std::string(1, static_cast<char>('A' + k)));
    e.boundaries = b;
  }
  if (!j.at("label").is_null()) e.label = signals::parse_label(j.at("label").get<std::string>());
  return e;
}

nlohmann::json ThresholdEvent::to_json() const {
  return {{"type", "threshold"}, {"seq", seq}, {"timestamp_ms", timestamp_ms}, {"threshold", threshold}};
}

// ---------------------------------------------------------------------------

MonitorService::MonitorService(baseline::BaselineModel model, Options options)
    : model_(std::move(model)), options_(std::move(options)), threshold_(model_.threshold) {
  if (!model_.calibration) throw CalibrationError("the service needs a calibrated model");
  if (options_.cache_size == 0) throw ValidationError("stroke cache size must be positive");
  if (!options_.event_log.empty()) {
    const bool fresh = !std::filesystem::exists(options_.event_log);
    log_.open(options_.event_log, std::ios::app);
    if (!log_) throw Error("cannot open event log " + options_.event_log.string());
    if (fresh) log_ << "seq,timestamp_ms,stroke_id,score,raw_distance,is_anomaly,threshold_used,label\n";
  }
}

MonitorService::~MonitorService() = default;

ScoreEvent MonitorService::score(const signals::StrokeSignal& stroke) {
  auto features = pipeline::extract_stroke_features(stroke, model_.preprocessing, true);

  CacheEntry entry;
  entry.filtered = std::move(features.filtered->samples);
  if (features.segmentation) entry.segmentation = features.segmentation->to_json();

  ScoreEvent event;
  event.stroke_id = stroke.stroke_id;
  event.sample_rate_hz = stroke.sample_rate_hz;
  if (features.segmentation) event.boundaries = features.segmentation->points();
  if (stroke.label != signals::Label::Unlabeled) event.label = stroke.label;

  std::lock_guard lock(state_mutex_);
  event.decision = baseline::classify(model_, features, threshold_);
  event.seq = ++seq_;
  event.timestamp_ms = now_ms();
  auto j = event.to_json();
  entry.event = j;
  cache_insert(stroke.stroke_id, std::move(entry));
  publish(j.dump());
  if (log_.is_open()) {
    const auto& d = event.decision;
    nlohmann::json dist = d.raw_distance ? nlohmann::json(*d.raw_distance) : nlohmann::json(nullptr);
    log_ << event.seq << ',' << event.timestamp_ms << ',' << event.stroke_id << ',' << nlohmann::json(d.score).dump()
         << ',' << (d.raw_distance ? dist.dump() : "") << ',' << (d.is_anomaly ? 1 : 0) << ','
         << nlohmann::json(d.threshold_used).dump() << ',' << (event.label ? signals::to_string(*event.label) : "")
         << '\n';
    log_.flush();
  }
  return event;
}

double MonitorService::set_threshold(double value) {
  if (!(value >= 0.0 && value <= 1.0)) throw ValidationError("threshold must lie in [0, 1]");
  std::lock_guard lock(state_mutex_);
  if (!options_.model_path.empty()) baseline::write_threshold_sidecar(options_.model_path, value);
  threshold_ = value;
  ThresholdEvent e{++seq_, now_ms(), value};
  publish(e.to_json().dump());
  return value;
}

double MonitorService::threshold() const {
  std::lock_guard lock(state_mutex_);
  return threshold_;
}

nlohmann::json MonitorService::model_info() const {
  const auto& m = model_;
  nlohmann::json j{{"format_version", baseline::BaselineModel::kFormatVersion},
                   {"software_version", kVersion},
                   {"trained_at", m.trained_at},
                   {"feature_set", features::to_string(m.feature_space.kind)},
                   {"features", m.feature_space.output.output_names()},
                   {"kernel", m.svm.kernel.to_json()},
                   {"nu", m.svm.nu},
                   {"rho", m.svm.rho},
                   {"support_vectors", m.svm.alphas.size()},
                   {"n_train", m.svm.n_train},
                   {"calibration", {{"a", m.calibration->a}, {"b", m.calibration->b}}},
                   {"preprocessing", m.preprocessing.to_json()},
                   {"training", m.training},
                   {"threshold", threshold()}};
  j["gamma"] = m.svm.kernel.kind == baseline::KernelKind::Rbf ? nlohmann::json(m.svm.kernel.gamma) : nlohmann::json(nullptr);
  return j;
}

std::optional<nlohmann::json> MonitorService::cached_stroke(const std::string& id) const {
  std::lock_guard lock(cache_mutex_);
  auto it = cache_.find(id);
  if (it == cache_.end()) return std::nullopt;
  const auto& e = it->second.first;
  nlohmann::json j{{"stroke_id", id},
                   {"sample_rate_hz", e.event.at("sample_rate_hz")},
                   {"filtered", e.filtered},
                   {"event", e.event}};
  j["segmentation"] = e.segmentation ? *e.segmentation : nlohmann::json(nullptr);
  return j;
}

void MonitorService::cache_insert(const std::string& id, CacheEntry entry) {
  std::lock_guard lock(cache_mutex_);
  if (auto it = cache_.find(id); it != cache_.end()) {
    cache_order_.erase(it->second.second);
    cache_.erase(it);
  }
  cache_order_.push_front(id);
  cache_.emplace(id, std::make_pair(std::move(entry), cache_order_.begin()));
  while (cache_.size() > options_.cache_size) {
    cache_.erase(cache_order_.back());
    cache_order_.pop_back();
  }
}

std::uint64_t MonitorService::subscribe(Listener listener) {
  std::lock_guard lock(state_mutex_);
  const auto id = next_listener_++;
  listeners_.emplace(id, std::move(listener));
  return id;
}

void MonitorService::unsubscribe(std::uint64_t id) {
  std::lock_guard lock(state_mutex_);
  listeners_.erase(id);
}

std::size_t MonitorService::subscriber_count() const {
  std::lock_guard lock(state_mutex_);
  return listeners_.size();
}

void MonitorService::publish(const std::string& message) {
  for (auto it = listeners_.begin(); it != listeners_.end();) {
    if (it->second(message))
      ++it;
    else
      it = listeners_.erase(it);
  }
}

// ---------------------------------------------------------------------------

Replayer::Replayer(MonitorService& service, signals::StrokeDataset dataset, double rate_per_min)
    : service_(service), dataset_(std::move(dataset)), rate_per_min_(rate_per_min) {
  if (!(rate_per_min > 0.0)) throw ValidationError("replay rate must be positive");
}

Replayer::~Replayer() {
  stop();
  wait();
}

void Replayer::start() {
  if (thread_.joinable()) return;
  thread_ = std::thread([this] { run(); });
}

void Replayer::stop() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
}

void Replayer::wait() {
  if (thread_.joinable()) thread_.join();
}

std::string Replayer::last_error() const {
  std::lock_guard lock(mutex_);
  return error_;
}

void Replayer::run() {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const std::chrono::duration<double> period(60.0 / rate_per_min_);
  for (std::size_t i = 0; i < dataset_.strokes.size(); ++i) {
    const auto due = start + std::chrono::duration_cast<clock::duration>(period * static_cast<double>(i + 1));
    {
      std::unique_lock lock(mutex_);
      if (cv_.wait_until(lock, due, [this] { return stop_; })) break;
    }
    try {
      service_.score(dataset_.strokes[i]);
    } catch (const std::exception& e) {
      std::lock_guard lock(mutex_);
      if (error_.empty()) error_ = dataset_.strokes[i].stroke_id + ": " + e.what();
    }
    ++emitted_;
  }
  finished_ = true;
}

}  // namespace stamping::service
