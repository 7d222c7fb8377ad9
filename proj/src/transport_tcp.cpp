#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <optional>

#include "fedsim/transport.hpp"

namespace fedsim {

namespace {

uint64_t read_le_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (size_t i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
  return v;
}

// Reads exactly n bytes; returns false on clean EOF at a frame boundary.
bool read_exact(int fd, uint8_t* buf, size_t n, bool allow_eof_at_start) {
  size_t got = 0;
  while (got < n) {
    const ssize_t r = ::read(fd, buf + got, n - got);
    if (r == 0) {
      if (got == 0 && allow_eof_at_start) return false;
      throw TransportError("tcp: connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError("tcp: read failed");
    }
    got += size_t(r);
  }
  return true;
}

void write_all(int fd, const uint8_t* buf, size_t n) {
  size_t sent = 0;
  while (sent < n) {
    const ssize_t r = ::write(fd, buf + sent, n - sent);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw TransportError("tcp: write failed");
    }
    sent += size_t(r);
  }
}

// One length-prefixed frame from the stream, or nullopt on clean EOF.
// Framing resynchronization is never attempted: a bad frame throws and the
// caller drops the connection.
std::optional<Package> read_frame(int fd) {
  uint8_t prefix[8];
  if (!read_exact(fd, prefix, 8, /*allow_eof_at_start=*/true)) return std::nullopt;
  const uint64_t body_len = read_le_u64(prefix);
  if (body_len < kHeaderBytes || body_len > (1ull << 32)) {
    throw TransportError("tcp: implausible frame length");
  }
  std::vector<uint8_t> frame(8 + body_len);
  std::memcpy(frame.data(), prefix, 8);
  read_exact(fd, frame.data() + 8, body_len, /*allow_eof_at_start=*/false);
  try {
    return decode_package(frame);
  } catch (const Error& e) {
    throw TransportError(std::string("tcp: corrupt frame: ") + e.what());
  }
}

void write_frame(int fd, const Package& pkg) {
  const std::vector<uint8_t> bytes = encode_package(pkg);
  write_all(fd, bytes.data(), bytes.size());
}

int make_socket() {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError("tcp: socket() failed");
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd;
}

sockaddr_in make_addr(const std::string& host, uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw ConnectFailed("tcp: bad host address " + host);
  }
  return addr;
}

// Server endpoint: one reader thread per accepted connection feeding a
// single arrival-ordered inbox.
class TcpServerChannel final : public Channel {
 public:
  explicit TcpServerChannel(const TcpConfig& cfg) : rank_(cfg.rank) {
    if (cfg.world_size < 2) throw ConnectFailed("tcp: world_size must be >= 2");
    listen_fd_ = make_socket();
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = make_addr("0.0.0.0", cfg.port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      throw ConnectFailed("tcp: bind failed");
    }
    if (::listen(listen_fd_, int(cfg.world_size)) != 0) {
      throw ConnectFailed("tcp: listen failed");
    }
    for (uint32_t i = 0; i + 1 < cfg.world_size; ++i) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) throw ConnectFailed("tcp: accept failed");
      auto reg = read_frame(fd);
      if (!reg || reg->message_code != MessageCode::Register) {
        ::close(fd);
        throw TransportError("tcp: peer did not register");
      }
      std::lock_guard lock(mutex_);
      if (connections_.contains(reg->sender_rank)) {
        ::close(fd);
        throw DuplicateRank("tcp: rank registered twice");
      }
      connections_[reg->sender_rank] = fd;
      ++open_connections_;
      readers_.emplace_back([this, fd] { reader_loop(fd); });
    }
  }

  ~TcpServerChannel() override {
    close();
    for (auto& t : readers_) {
      if (t.joinable()) t.join();
    }
    std::lock_guard lock(mutex_);
    for (auto& [r, fd] : connections_) ::close(fd);
  }

  void send(const Package& pkg) override {
    int fd = -1;
    {
      std::lock_guard lock(mutex_);
      auto it = connections_.find(pkg.receiver_rank);
      if (it == connections_.end()) throw UnknownEndpoint("tcp: no connection for rank");
      fd = it->second;
    }
    std::lock_guard wlock(write_mutex_);
    write_frame(fd, pkg);
  }

  Package recv() override {
    std::unique_lock lock(mutex_);
    inbox_cv_.wait(lock, [this] { return !inbox_.empty() || open_connections_ == 0; });
    if (inbox_.empty()) throw ChannelClosed("tcp: all peers disconnected");
    Package pkg = std::move(inbox_.front());
    inbox_.pop_front();
    return pkg;
  }

  void close() override {
    if (listen_fd_ >= 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
    }
    std::lock_guard lock(mutex_);
    for (auto& [r, fd] : connections_) ::shutdown(fd, SHUT_RD);
  }

  uint32_t rank() const override { return rank_; }

 private:
  void reader_loop(int fd) {
    try {
      for (;;) {
        auto pkg = read_frame(fd);
        if (!pkg) break;
        std::lock_guard lock(mutex_);
        inbox_.push_back(std::move(*pkg));
        inbox_cv_.notify_all();
      }
    } catch (const Error&) {
      // Framing corruption or abrupt close: the connection is done.
    }
    std::lock_guard lock(mutex_);
    --open_connections_;
    inbox_cv_.notify_all();
  }

  uint32_t rank_;
  int listen_fd_ = -1;
  std::mutex mutex_;
  std::mutex write_mutex_;
  std::condition_variable inbox_cv_;
  std::map<uint32_t, int> connections_;
  std::deque<Package> inbox_;
  int open_connections_ = 0;
  std::vector<std::thread> readers_;
};

class TcpClientChannel final : public Channel {
 public:
  explicit TcpClientChannel(const TcpConfig& cfg) : rank_(cfg.rank) {
    const sockaddr_in addr = make_addr(cfg.host, cfg.port);
    for (int attempt = 0;; ++attempt) {
      fd_ = make_socket();
      if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) break;
      ::close(fd_);
      fd_ = -1;
      if (attempt + 1 >= cfg.connect_retries) {
        throw ConnectFailed("tcp: could not reach server after retries");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg.retry_delay_ms));
    }
    Package reg;
    reg.message_code = MessageCode::Register;
    reg.sender_rank = rank_;
    reg.receiver_rank = 0;
    write_frame(fd_, reg);
  }

  ~TcpClientChannel() override { close(); }

  void send(const Package& pkg) override {
    std::lock_guard lock(write_mutex_);
    if (fd_ < 0) throw TransportError("tcp: send on closed channel");
    write_frame(fd_, pkg);
  }

  Package recv() override {
    if (fd_ < 0) throw ChannelClosed("tcp: channel closed");
    auto pkg = read_frame(fd_);
    if (!pkg) {
      close();
      throw ChannelClosed("tcp: server disconnected");
    }
    return *pkg;
  }

  void close() override {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  uint32_t rank() const override { return rank_; }

 private:
  uint32_t rank_;
  int fd_ = -1;
  std::mutex write_mutex_;
};

}  // namespace

std::unique_ptr<Channel> tcp_serve(const TcpConfig& cfg) {
  return std::make_unique<TcpServerChannel>(cfg);
}

std::unique_ptr<Channel> tcp_connect(const TcpConfig& cfg) {
  return std::make_unique<TcpClientChannel>(cfg);
}

uint16_t free_tcp_port() {
  const int fd = make_socket();
  sockaddr_in addr = make_addr("127.0.0.1", 0);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw TransportError("tcp: bind for port probe failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const uint16_t port = ntohs(addr.sin_port);
  ::close(fd);
  return port;
}

}  // namespace fedsim
