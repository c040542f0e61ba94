#pragma once

// Thin RAII wrappers over POSIX TCP sockets.

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>

namespace xfermon {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close();
  // Wakes any thread blocked on the socket without releasing the descriptor.
  void shutdown();

  // Throws RuntimeFailure on error.
  void send_all(std::span<const std::uint8_t> data);
  void send_all(std::string_view data);
  // False on orderly EOF before the first byte; throws RuntimeFailure on error or EOF mid-read.
  bool recv_exact(std::span<std::uint8_t> out);
  // Reads one '\n'-terminated line (without the terminator); nullopt on EOF.
  std::optional<std::string> read_line(std::string& buffer);

 private:
  int fd_ = -1;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

// Parses "host:port"; throws DomainError.
Endpoint parse_endpoint(std::string_view s);
std::string to_string(const Endpoint& e);

// Throws RuntimeFailure when the peer cannot be reached.
Socket connect_tcp(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::milliseconds(2000));

class Listener {
 public:
  // Port 0 picks an ephemeral port.
  explicit Listener(const Endpoint& ep);
  std::uint16_t port() const { return port_; }
  // Waits up to `timeout` for a connection.
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void close() { sock_.close(); }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

}  // namespace xfermon
