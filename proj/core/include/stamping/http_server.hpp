#pragma once

// HTTP + WebSocket front end for MonitorService.
//
//   POST /strokes        {"stroke_id", "samples", "sample_rate_hz", "label"?} -> score event
//   PUT  /threshold      {"value"} -> {"threshold"}
//   GET  /threshold
//   GET  /model
//   GET  /strokes/<id>   cached filtered waveform + segmentation
//   GET  /events         WebSocket stream of score and threshold events
//   GET  /health

#include <cstdint>
#include <memory>
#include <string>

#include "stamping/service.hpp"

namespace stamping::service {

class HttpServer {
 public:
  /// Binds immediately; throws Error when the address cannot be bound
  /// (for example, port in use). Port 0 picks a free port.
  HttpServer(MonitorService& service, const std::string& address, std::uint16_t port, std::size_t threads = 2);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  std::uint16_t port() const;
  void start();
  void stop();
  /// Blocks until stop() is called from elsewhere.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Parses a POST /strokes body. Throws ValidationError when malformed.
signals::StrokeSignal parse_stroke_payload(const std::string& body);

}  // namespace stamping::service
