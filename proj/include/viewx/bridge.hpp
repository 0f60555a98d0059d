#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include "viewx/protocol.hpp"
#include "viewx/sampler.hpp"

namespace viewx::bridge {

inline constexpr const char* kAddressEnv = "VIEWX_BRIDGE_ADDR";

struct Address {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  static Address parse(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
      throw Error(Errc::config, "bridge address must be host:port, got '" + text + "'");
    Address a;
    a.host = text.substr(0, colon);
    const std::string port = text.substr(colon + 1);
    char* end = nullptr;
    const long p = std::strtol(port.c_str(), &end, 10);
    if (*end != '\0' || p <= 0 || p > 65535) throw Error(Errc::config, "bad port '" + port + "'");
    a.port = static_cast<std::uint16_t>(p);
    return a;
  }

  /// Address from VIEWX_BRIDGE_ADDR, if set.
  static std::optional<Address> from_env() {
    const char* v = std::getenv(kAddressEnv);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return parse(v);
  }

  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Owned socket with blocking, deadline-bounded reads and writes.
class Connection {
 public:
  Connection() = default;
  explicit Connection(int fd, std::chrono::milliseconds timeout = std::chrono::seconds(300))
      : fd_(fd), timeout_(timeout) {}
  Connection(Connection&& o) noexcept
      : fd_(std::exchange(o.fd_, -1)), timeout_(o.timeout_), received_(o.received_) {}
  Connection& operator=(Connection&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
      timeout_ = o.timeout_;
      received_ = o.received_;
    }
    return *this;
  }
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;
  ~Connection() { close(); }

  static Connection connect(const Address& addr,
                            std::chrono::milliseconds timeout = std::chrono::seconds(300)) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(addr.port);
    if (const int rc = ::getaddrinfo(addr.host.c_str(), port.c_str(), &hints, &res); rc != 0)
      throw Error(Errc::transport, "cannot resolve " + addr.str() + ": " + ::gai_strerror(rc));
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
    std::string last = "no addresses";
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
      const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) {
        last = std::strerror(errno);
        continue;
      }
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return Connection(fd, timeout);
      }
      last = std::strerror(errno);
      ::close(fd);
    }
    throw Error(Errc::transport, "cannot connect to " + addr.str() + ": " + last);
  }

  bool is_open() const noexcept { return fd_ >= 0; }
  void set_timeout(std::chrono::milliseconds t) noexcept { timeout_ = t; }

  void close() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void send_all(ByteView bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      wait(POLLOUT);
      const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::transport, std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  void send(const Message& m) { send_all(encode_message(m)); }

  /// Reads one frame. EOF before a complete frame is a transport error;
  /// malformed headers are protocol errors positioned in the stream.
  Message receive() {
    std::uint8_t header[kHeaderSize];
    const std::size_t frame_start = received_;
    recv_exact(header, kHeaderSize, frame_start == 0 ? "connection closed" : "connection closed");
    const Header h = parse_header(ByteView(header, kHeaderSize), frame_start);
    Message m{h.kind, {}};
    // Grow the buffer with the data actually received instead of trusting the
    // declared length for a single allocation.
    std::uint64_t remaining = h.length;
    constexpr std::size_t kChunk = 1 << 20;
    while (remaining > 0) {
      const std::size_t step = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, kChunk));
      const std::size_t old = m.body.size();
      m.body.resize(old + step);
      recv_exact(m.body.data() + old, step, "connection closed mid-frame");
      remaining -= step;
    }
    return m;
  }

  std::size_t bytes_received() const noexcept { return received_; }

 private:
  void wait(short events) {
    pollfd p{fd_, events, 0};
    for (;;) {
      const int rc = ::poll(&p, 1, static_cast<int>(timeout_.count()));
      if (rc > 0) return;
      if (rc == 0) throw Error(Errc::transport, "timed out after " + std::to_string(timeout_.count()) + " ms");
      if (errno != EINTR) throw Error(Errc::transport, std::string("poll failed: ") + std::strerror(errno));
    }
  }

  void recv_exact(std::uint8_t* dst, std::size_t size, const char* eof_message) {
    if (fd_ < 0) throw Error(Errc::transport, "connection is closed");
    std::size_t got = 0;
    while (got < size) {
      wait(POLLIN);
      const ssize_t n = ::recv(fd_, dst + got, size - got, 0);
      if (n == 0) throw Error(Errc::transport, eof_message);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::transport, std::string("recv failed: ") + std::strerror(errno));
      }
      got += static_cast<std::size_t>(n);
      received_ += static_cast<std::size_t>(n);
    }
  }

  int fd_ = -1;
  std::chrono::milliseconds timeout_{300000};
  std::size_t received_ = 0;
};

/// Denoiser backed by a remote server. INIT (meta + condition) is sent on the
/// first predict; SHUTDOWN is sent when the object is destroyed.
class RemoteDenoiser final : public DenoiserBase {
 public:
  RemoteDenoiser(const Address& addr, nlohmann::json meta,
                 std::chrono::milliseconds timeout = std::chrono::seconds(300))
      : conn_(Connection::connect(addr, timeout)), meta_(std::move(meta)) {}

  RemoteDenoiser(Connection conn, nlohmann::json meta)
      : conn_(std::move(conn)), meta_(std::move(meta)) {}

  ~RemoteDenoiser() override {
    if (!conn_.is_open()) return;
    try {
      conn_.set_timeout(std::chrono::milliseconds(1000));
      conn_.send(Message{Kind::shutdown, {}});
    } catch (...) {
    }
  }

  RemoteDenoiser(const RemoteDenoiser&) = delete;
  RemoteDenoiser& operator=(const RemoteDenoiser&) = delete;

  /// Server meta from the INIT acknowledgement.
  const nlohmann::json& server_meta() const noexcept { return server_meta_; }

  void initialize(std::span<const std::byte> condition) {
    InitBody init;
    init.meta = meta_;
    const auto* c = reinterpret_cast<const std::uint8_t*>(condition.data());
    init.condition.assign(c, c + condition.size());
    const Message reply = round_trip({Kind::init, encode_init(init)});
    if (reply.kind != Kind::init)
      throw Error(Errc::protocol, std::string("expected INIT acknowledgement, got ") + kind_name(reply.kind));
    server_meta_ = decode_init(reply.body).meta;
    initialized_ = true;
  }

  LatentVideo predict(const LatentVideo& x_t, float sigma, std::span<const std::byte> condition) override {
    if (!initialized_) initialize(condition);
    const Message reply = round_trip({Kind::predict, encode_predict(sigma, x_t)});
    if (reply.kind != Kind::predict_ok)
      throw Error(Errc::protocol, std::string("expected PREDICT_OK, got ") + kind_name(reply.kind));
    Tensor out = decode_predict_ok(reply.body);
    if (out.shape() != x_t.shape())
      throw Error(Errc::protocol, "protocol violation: reply shape " + shape_string(out.shape()) +
                                      " differs from request " + shape_string(x_t.shape()));
    return out;
  }

  long long calls() const noexcept { return calls_; }

 private:
  Message round_trip(const Message& request) {
    ++calls_;
    conn_.send(request);
    Message reply = conn_.receive();
    if (reply.kind == Kind::error) throw Error(Errc::backend, decode_error(reply.body));
    return reply;
  }

  Connection conn_;
  nlohmann::json meta_;
  nlohmann::json server_meta_;
  bool initialized_ = false;
  long long calls_ = 0;
};

/// Server-side session state machine shared by the mock server and tests.
/// `handle` maps one request to a reply; a nullopt reply with `closed`
/// set ends the session.
class Session {
 public:
  using PredictFn = std::function<Tensor(const Tensor&, float, const Bytes& condition)>;

  explicit Session(PredictFn predict, nlohmann::json server_meta = nlohmann::json::object())
      : predict_(std::move(predict)), server_meta_(std::move(server_meta)) {}

  bool closed() const noexcept { return closed_; }
  bool shutdown_requested() const noexcept { return shutdown_; }

  std::optional<Message> handle(const Message& m) {
    try {
      switch (m.kind) {
        case Kind::init: {
          InitBody init = decode_init(m.body);
          condition_ = std::move(init.condition);
          if (init.meta.contains("shape")) shape_ = init.meta["shape"].get<Shape>();
          initialized_ = true;
          return Message{Kind::init, encode_init({server_meta_, {}})};
        }
        case Kind::predict: {
          if (!initialized_) return error("uninitialized session");
          const PredictBody p = decode_predict(m.body);
          if (shape_ && p.x.shape() != *shape_)
            return error("shape mismatch: INIT advertised " + shape_string(*shape_) + ", PREDICT sent " +
                         shape_string(p.x.shape()));
          return Message{Kind::predict_ok, encode_predict_ok(predict_(p.x, p.sigma, condition_))};
        }
        case Kind::shutdown:
          shutdown_ = true;
          closed_ = true;
          return std::nullopt;
        case Kind::predict_ok:
        case Kind::error:
          closed_ = true;
          return error(std::string("unexpected ") + kind_name(m.kind) + " from client");
      }
    } catch (const Error& e) {
      closed_ = e.code() == Errc::protocol || closed_;
      return error(e.what());
    } catch (const std::exception& e) {
      return error(std::string("backend failure: ") + e.what());
    }
    return std::nullopt;
  }

 private:
  static Message error(const std::string& text) { return {Kind::error, encode_error(text)}; }

  PredictFn predict_;
  nlohmann::json server_meta_;
  Bytes condition_;
  std::optional<Shape> shape_;
  bool initialized_ = false;
  bool closed_ = false;
  bool shutdown_ = false;
};

/// Listens on a TCP port and serves one connection at a time on a background
/// thread, each with a fresh Session.
class MockServer {
 public:
  using SessionFactory = std::function<Session()>;

  explicit MockServer(SessionFactory factory, const std::string& host = "127.0.0.1",
                      std::uint16_t port = 0, bool exit_on_shutdown = false)
      : factory_(std::move(factory)), exit_on_shutdown_(exit_on_shutdown) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw Error(Errc::transport, std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
      ::close(listen_fd_);
      throw Error(Errc::config, "mock server needs an IPv4 host, got '" + host + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0 || ::listen(listen_fd_, 8) != 0) {
      const std::string err = std::strerror(errno);
      ::close(listen_fd_);
      throw Error(Errc::transport, "cannot listen on " + host + ":" + std::to_string(port) + ": " + err);
    }
    socklen_t len = sizeof sa;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    address_ = {host, ntohs(sa.sin_port)};
  }

  ~MockServer() { stop(); }
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  const Address& address() const noexcept { return address_; }

  void start() {
    thread_ = std::thread([this] { serve(); });
  }

  /// Serves on the calling thread until stopped (or SHUTDOWN, when configured).
  void serve() {
    while (!stopping_) {
      pollfd p{listen_fd_, POLLIN, 0};
      if (::poll(&p, 1, 50) <= 0) continue;
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      Connection conn(fd, std::chrono::seconds(300));
      Session session = factory_();
      serve_connection(conn, session);
      ++sessions_;
      if (exit_on_shutdown_ && session.shutdown_requested()) break;
    }
  }

  void stop() {
    stopping_ = true;
    if (thread_.joinable()) thread_.join();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
  }

  int sessions_served() const noexcept { return sessions_; }

 private:
  static void serve_connection(Connection& conn, Session& session) {
    while (!session.closed()) {
      Message request;
      try {
        request = conn.receive();
      } catch (const Error& e) {
        if (e.code() == Errc::protocol) {
          try {
            conn.send({Kind::error, encode_error(e.what())});
          } catch (...) {
          }
        }
        return;
      }
      const auto reply = session.handle(request);
      try {
        if (reply) conn.send(*reply);
      } catch (...) {
        return;
      }
    }
  }

  SessionFactory factory_;
  bool exit_on_shutdown_;
  int listen_fd_ = -1;
  Address address_;
  std::thread thread_;
  std::atomic<bool> stopping_{false};
  std::atomic<int> sessions_{0};
};

}  // namespace viewx::bridge
