// Length-prefixed JSON frames over TCP: a 4-byte big-endian payload length
// followed by a UTF-8 JSON object carrying "type" and "req_id".
#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>

#include "aft/error.hpp"
#include "aft/json_codec.hpp"

namespace aft::wire {

inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

std::string encode_frame(std::string_view payload);
std::string encode_message(const json& message);

/// Reads one frame payload. Returns nullopt on a clean end of stream before
/// the length prefix; throws Error(unavailable) on a truncated frame or a
/// socket error and Error(protocol_error) on an oversized length.
std::optional<std::string> read_frame(int fd);
void write_frame(int fd, std::string_view payload);

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string str() const { return host + ":" + std::to_string(port); }
};

/// "host:port"; throws Error(invalid_argument).
Endpoint parse_endpoint(std::string_view text);

json error_response(const json& req_id, ErrorCode code, std::string_view message);
json ok_response(const json& req_id);

/// Turns a response carrying "error" into the matching Error.
void throw_if_error(const json& response);

/// Blocking request/response client over one connection. Calls are
/// serialized; a broken connection is re-established on the next call.
/// Transport failures surface as Error(unavailable).
class Client {
 public:
  explicit Client(Endpoint endpoint, int timeout_ms = 30'000);
  explicit Client(std::string_view address, int timeout_ms = 30'000)
      : Client(parse_endpoint(address), timeout_ms) {}
  ~Client();

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  /// Fills in req_id, sends, and returns the response. Error responses are
  /// thrown as Error.
  json call(json request);
  /// Like call, but returns error responses instead of throwing them.
  json call_raw(json request);
  /// Sends raw bytes as one frame and returns the raw response.
  json call_payload(std::string_view payload);

  const Endpoint& endpoint() const noexcept { return endpoint_; }
  void disconnect();

 private:
  void ensure_connected_locked();
  json exchange_locked(std::string_view payload);

  Endpoint endpoint_;
  int timeout_ms_;
  std::mutex mu_;
  int fd_ = -1;
  std::uint64_t next_req_id_ = 1;
};

using Handler = std::function<json(const json& request)>;

/// Thread-per-connection frame server. Requests on one connection are
/// answered in order. The handler's Error exceptions become error responses;
/// malformed frames get a protocol_error response and the connection stays
/// open.
class Server {
 public:
  Server(Endpoint listen, Handler handler);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting. Throws Error(unavailable) on bind failure.
  void start();
  void stop();
  /// Actual bound port (useful with port 0).
  std::uint16_t port() const noexcept { return port_; }

 private:
  void accept_loop();
  void serve_connection(int fd);
  json dispatch(std::string_view payload);

  Endpoint listen_;
  Handler handler_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex conns_mu_;
  std::list<int> conn_fds_;
  std::list<std::thread> conn_threads_;
};

}  // namespace aft::wire
