#include "aft/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <cerrno>
#include <charconv>
#include <cstring>

namespace aft::wire {

namespace {

bool read_exact(int fd, char* out, std::size_t n, bool& clean_eof) {
  std::size_t got = 0;
  clean_eof = false;
  while (got < n) {
    ssize_t r = ::recv(fd, out + got, n - got, 0);
    if (r == 0) {
      clean_eof = got == 0;
      return false;
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::unavailable, std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t w = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::unavailable, std::string("send: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(w));
  }
}

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error(ErrorCode::unavailable, "cannot resolve " + ep.host);
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

std::string encode_frame(std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) throw Error(ErrorCode::protocol_error, "frame too large");
  auto n = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(4 + payload.size());
  out.push_back(static_cast<char>(n >> 24));
  out.push_back(static_cast<char>(n >> 16));
  out.push_back(static_cast<char>(n >> 8));
  out.push_back(static_cast<char>(n));
  out.append(payload);
  return out;
}

std::string encode_message(const json& message) { return encode_frame(message.dump()); }

std::optional<std::string> read_frame(int fd) {
  unsigned char header[4];
  bool clean_eof = false;
  if (!read_exact(fd, reinterpret_cast<char*>(header), 4, clean_eof)) {
    if (clean_eof) return std::nullopt;
    throw Error(ErrorCode::unavailable, "truncated frame header");
  }
  std::uint32_t n = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                    (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
  if (n > kMaxFrameBytes) throw Error(ErrorCode::protocol_error, "frame length " + std::to_string(n));
  std::string payload(n, '\0');
  if (n > 0 && !read_exact(fd, payload.data(), n, clean_eof)) {
    throw Error(ErrorCode::unavailable, "truncated frame");
  }
  return payload;
}

void write_frame(int fd, std::string_view payload) { write_all(fd, encode_frame(payload)); }

Endpoint parse_endpoint(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::invalid_argument, "expected host:port, got '" + std::string(text) + "'");
  }
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  auto port_text = text.substr(colon + 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port > 65535) {
    throw Error(ErrorCode::invalid_argument, "bad port in '" + std::string(text) + "'");
  }
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

json error_response(const json& req_id, ErrorCode code, std::string_view message) {
  return json{{"req_id", req_id}, {"error", to_string(code)}, {"message", message}};
}

json ok_response(const json& req_id) { return json{{"req_id", req_id}, {"ok", true}}; }

void throw_if_error(const json& response) {
  if (!response.is_object() || !response.contains("error")) return;
  ErrorCode code = ErrorCode::protocol_error;
  try {
    code = error_code_from_string(response.at("error").get<std::string>());
  } catch (const std::exception&) {
  }
  std::string message = response.value("message", std::string(to_string(code)));
  if (code == ErrorCode::storage_error) throw StorageError(message);
  throw Error(code, message);
}

// --- client ----------------------------------------------------------------

Client::Client(Endpoint endpoint, int timeout_ms) : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms) {}

Client::~Client() { disconnect(); }

void Client::disconnect() {
  std::lock_guard lock(mu_);
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Client::ensure_connected_locked() {
  if (fd_ >= 0) return;
  auto addr = resolve(endpoint_);
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorCode::unavailable, "socket failed");
  timeval tv{timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    int err = errno;
    ::close(fd);
    throw Error(ErrorCode::unavailable, "connect " + endpoint_.str() + ": " + std::strerror(err));
  }
  fd_ = fd;
}

json Client::exchange_locked(std::string_view payload) {
  ensure_connected_locked();
  try {
    write_frame(fd_, payload);
    auto reply = read_frame(fd_);
    if (!reply) throw Error(ErrorCode::unavailable, "connection closed by " + endpoint_.str());
    return json::parse(*reply);
  } catch (const json::exception& e) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::protocol_error, e.what());
  } catch (...) {
    ::close(fd_);
    fd_ = -1;
    throw;
  }
}

json Client::call_raw(json request) {
  std::lock_guard lock(mu_);
  auto id = next_req_id_++;
  request["req_id"] = id;
  auto response = exchange_locked(request.dump());
  if (!response.is_object() || response.value("req_id", json()) != json(id)) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::protocol_error, "response does not match request " + std::to_string(id));
  }
  return response;
}

json Client::call(json request) {
  auto response = call_raw(std::move(request));
  throw_if_error(response);
  return response;
}

json Client::call_payload(std::string_view payload) {
  std::lock_guard lock(mu_);
  return exchange_locked(payload);
}

// --- server ----------------------------------------------------------------

Server::Server(Endpoint listen, Handler handler) : listen_(std::move(listen)), handler_(std::move(handler)) {}

Server::~Server() { stop(); }

void Server::start() {
  auto addr = resolve(listen_);
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorCode::unavailable, "socket failed");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 128) != 0) {
    int err = errno;
    ::close(fd);
    throw Error(ErrorCode::unavailable, "bind " + listen_.str() + ": " + std::strerror(err));
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  listen_fd_ = fd;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  if (stopping_.exchange(true)) return;
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
  std::list<std::thread> threads;
  {
    std::lock_guard lock(conns_mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    threads = std::move(conn_threads_);
  }
  for (auto& t : threads) t.join();
}

void Server::accept_loop() {
  while (!stopping_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    int ready = ::poll(&pfd, 1, 200);
    if (ready <= 0) continue;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (stopping_) break;
      continue;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(conns_mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

json Server::dispatch(std::string_view payload) {
  json request;
  try {
    request = json::parse(payload);
  } catch (const json::exception& e) {
    return error_response(nullptr, ErrorCode::protocol_error, e.what());
  }
  json req_id = request.is_object() ? request.value("req_id", json()) : json();
  if (!request.is_object() || !request.contains("type") || !request["type"].is_string()) {
    return error_response(req_id, ErrorCode::protocol_error, "frame must be an object with a string \"type\"");
  }
  try {
    json response = handler_(request);
    response["req_id"] = req_id;
    return response;
  } catch (const Error& e) {
    return error_response(req_id, e.code(), e.what());
  } catch (const json::exception& e) {
    return error_response(req_id, ErrorCode::protocol_error, e.what());
  } catch (const std::exception& e) {
    return error_response(req_id, ErrorCode::unavailable, e.what());
  }
}

void Server::serve_connection(int fd) {
  try {
    while (!stopping_) {
      auto payload = read_frame(fd);
      if (!payload) break;
      write_frame(fd, dispatch(*payload).dump());
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::protocol_error) {
      // the stream cannot be resynchronized after a bad length prefix
      try {
        write_frame(fd, error_response(nullptr, e.code(), e.what()).dump());
      } catch (const std::exception&) {
      }
    }
    spdlog::debug("connection closed: {}", e.what());
  }
  std::lock_guard lock(conns_mu_);
  conn_fds_.remove(fd);
  ::close(fd);
}

}  // namespace aft::wire
