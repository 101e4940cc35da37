#include "stamping/http_server.hpp"

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <thread>
#include <vector>

#include "stamping/error.hpp"

namespace stamping::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

signals::StrokeSignal parse_stroke_payload(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("stroke payload must be a JSON object");
  signals::StrokeSignal s;
  try {
    if (j.contains("stroke_id"))
      s.stroke_id = j.at("stroke_id").get<std::string>();
    else if (j.contains("id"))
      s.stroke_id = j.at("id").get<std::string>();
    else
      throw ValidationError("stroke payload needs \"stroke_id\"");
    if (s.stroke_id.empty()) throw ValidationError("stroke_id must not be empty");
    if (!j.contains("samples") || !j.at("samples").is_array()) throw ValidationError("stroke payload needs \"samples\"");
    s.samples.reserve(j.at("samples").size());
    for (const auto& v : j.at("samples")) {
      if (!v.is_number()) throw ValidationError("samples must be numbers");
      s.samples.push_back(v.get<double>());
    }
    if (j.contains("sample_rate_hz"))
      s.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    else if (j.contains("rate"))
      s.sample_rate_hz = j.at("rate").get<double>();
    if (j.contains("label") && !j.at("label").is_null()) s.label = signals::parse_label(j.at("label").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed stroke payload: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

std::string percent_decode(std::string_view in) {
  std::string out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == '%' && i + 2 < in.size()) {
      const auto hex = std::string(in.substr(i + 1, 2));
      char* end = nullptr;
      const long v = std::strtol(hex.c_str(), &end, 16);
      if (end == hex.c_str() + 2) {
        out.push_back(static_cast<char>(v));
        i += 2;
        continue;
      }
    }
    out.push_back(in[i]);
  }
  return out;
}

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

Response json_response(const Request& req, http::status status, const nlohmann::json& body) {
  Response res{status, req.version()};
  res.set(http::field::server, "stampmon");
  res.set(http::field::content_type, "application/json");
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = body.dump();
  res.prepare_payload();
  return res;
}

Response error_response(const Request& req, http::status status, const std::string& message) {
  return json_response(req, status, {{"error", message}});
}

Response handle_request(MonitorService& svc, const Request& req) {
  const std::string target(req.target());
  const auto path = target.substr(0, target.find('?'));

  if (req.method() == http::verb::options) {
    Response res{http::status::no_content, req.version()};
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::access_control_allow_methods, "GET, POST, PUT, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    res.keep_alive(req.keep_alive());
    res.prepare_payload();
    return res;
  }

  try {
    if (path == "/strokes") {
      if (req.method() != http::verb::post) return error_response(req, http::status::method_not_allowed, "use POST");
      const auto stroke = parse_stroke_payload(req.body());
      return json_response(req, http::status::ok, svc.score(stroke).to_json());
    }
    if (path == "/threshold") {
      if (req.method() == http::verb::get) return json_response(req, http::status::ok, {{"threshold", svc.threshold()}});
      if (req.method() != http::verb::put) return error_response(req, http::status::method_not_allowed, "use PUT");
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(req.body());
      } catch (const nlohmann::json::exception& e) {
        return error_response(req, http::status::bad_request, std::string("invalid JSON: ") + e.what());
      }
      const char* key = j.is_object() && j.contains("value") ? "value" : "threshold";
      if (!j.is_object() || !j.contains(key) || !j.at(key).is_number())
        return error_response(req, http::status::bad_request, "body must be {\"value\": <number>}");
      return json_response(req, http::status::ok, {{"threshold", svc.set_threshold(j.at(key).get<double>())}});
    }
    if (req.method() != http::verb::get) return error_response(req, http::status::method_not_allowed, "use GET");
    if (path == "/model") return json_response(req, http::status::ok, svc.model_info());
    if (path == "/health") return json_response(req, http::status::ok, {{"status", "ok"}});
    if (path.rfind("/strokes/", 0) == 0) {
      const auto id = percent_decode(path.substr(9));
      if (auto cached = svc.cached_stroke(id)) return json_response(req, http::status::ok, *cached);
      return error_response(req, http::status::not_found, "stroke '" + id + "' is not in the cache");
    }
    return error_response(req, http::status::not_found, "no route for " + path);
  } catch (const ValidationError& e) {
    return error_response(req, http::status::bad_request, e.what());
  } catch (const LengthError& e) {
    return error_response(req, http::status::bad_request, e.what());
  } catch (const DimensionError& e) {
    return error_response(req, http::status::bad_request, e.what());
  } catch (const std::exception& e) {
    return error_response(req, http::status::internal_server_error, e.what());
  }
}

// ---------------------------------------------------------------------------

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, MonitorService& svc) : ws_(std::move(socket)), svc_(svc) {}

  void run(Request req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    // Subscribe before the handshake so nothing published after the client
    // sees the upgrade response is lost; writes wait for the accept.
    std::weak_ptr<WsSession> weak = shared_from_this();
    subscription_ = svc_.subscribe([weak](const std::string& msg) {
      auto self = weak.lock();
      if (!self) return false;
      auto shared = std::make_shared<const std::string>(msg);
      net::post(self->ws_.get_executor(), [self, shared] { self->enqueue(shared); });
      return true;
    });
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return close();
    ws_.text(true);
    accepted_ = true;
    if (!queue_.empty()) do_write();
    do_read();
  }

  void enqueue(std::shared_ptr<const std::string> msg) {
    if (closed_) return;
    queue_.push_back(std::move(msg));
    if (accepted_ && queue_.size() == 1) do_write();
  }

  void do_write() {
    ws_.async_write(net::buffer(*queue_.front()), beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return close();
    queue_.pop_front();
    if (!queue_.empty()) do_write();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return close();
    buffer_.consume(buffer_.size());  // clients have nothing to say
    do_read();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    svc_.unsubscribe(subscription_);
  }

  websocket::stream<beast::tcp_stream> ws_;
  MonitorService& svc_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  std::uint64_t subscription_ = 0;
  bool accepted_ = false;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, MonitorService& svc) : stream_(std::move(socket)), svc_(svc) {}

  void run() { net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this())); }

 private:
  void do_read() {
    parser_.emplace();
    parser_->body_limit(64u << 20);
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, *parser_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) return shutdown();
    if (ec) return;
    auto req = parser_->release();
    if (websocket::is_upgrade(req)) {
      if (std::string(req.target()).rfind("/events", 0) == 0) {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), svc_)->run(std::move(req));
        return;
      }
      return send(error_response(req, http::status::not_found, "WebSocket endpoint is /events"));
    }
    send(handle_request(svc_, req));
  }

  void send(Response res) {
    auto sp = std::make_shared<Response>(std::move(res));
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (sp->need_eof()) return self->shutdown();
      self->do_read();
    });
  }

  void shutdown() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  beast::tcp_stream stream_;
  MonitorService& svc_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
};

class Listener : public std::enable_shared_from_this<Listener> {
 public:
  Listener(net::io_context& ioc, const tcp::endpoint& endpoint, MonitorService& svc)
      : ioc_(ioc), acceptor_(net::make_strand(ioc)), svc_(svc) {
    beast::error_code ec;
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec)
      throw Error("cannot listen on " + endpoint.address().to_string() + ":" + std::to_string(endpoint.port()) + ": " +
                  ec.message());
  }

  std::uint16_t port() const { return acceptor_.local_endpoint().port(); }
  void start() { do_accept(); }

 private:
  void do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_), beast::bind_front_handler(&Listener::on_accept, shared_from_this()));
  }

  void on_accept(beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted) return;
    if (!ec) std::make_shared<HttpSession>(std::move(socket), svc_)->run();
    do_accept();
  }

  net::io_context& ioc_;
  tcp::acceptor acceptor_;
  MonitorService& svc_;
};

}  // namespace

struct HttpServer::Impl {
  net::io_context ioc;
  std::shared_ptr<Listener> listener;
  std::vector<std::thread> threads;
  std::size_t thread_count = 2;
  std::mutex mutex;
  std::condition_variable stopped_cv;
  bool stopped = false;
};

HttpServer::HttpServer(MonitorService& service, const std::string& address, std::uint16_t port, std::size_t threads)
    : impl_(std::make_unique<Impl>()) {
  beast::error_code ec;
  const auto addr = net::ip::make_address(address, ec);
  if (ec) throw ValidationError("invalid bind address '" + address + "'");
  impl_->thread_count = std::max<std::size_t>(1, threads);
  impl_->listener = std::make_shared<Listener>(impl_->ioc, tcp::endpoint(addr, port), service);
}

HttpServer::~HttpServer() { stop(); }

std::uint16_t HttpServer::port() const { return impl_->listener->port(); }

void HttpServer::start() {
  if (!impl_->threads.empty()) return;
  impl_->listener->start();
  for (std::size_t i = 0; i < impl_->thread_count; ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void HttpServer::stop() {
  impl_->ioc.stop();
  for (auto& t : impl_->threads)
    if (t.joinable()) t.join();
  impl_->threads.clear();
  {
    std::lock_guard lock(impl_->mutex);
    impl_->stopped = true;
  }
  impl_->stopped_cv.notify_all();
}

void HttpServer::wait() {
  std::unique_lock lock(impl_->mutex);
  impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

}  // namespace stamping::service
