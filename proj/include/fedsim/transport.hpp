#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/packaging.hpp"

namespace fedsim {

// One actor's view of the network. Both backends (in-memory sim, TCP) honor
// the same contract: send enqueues a whole Package for the receiver rank,
// recv blocks until one is available for this rank, delivery preserves
// per-pair FIFO order, and recv throws ChannelClosed once all peers are gone.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const Package& pkg) = 0;
  virtual Package recv() = 0;
  virtual void close() = 0;
  virtual uint32_t rank() const = 0;
};

// Deterministic zero-latency network for standalone/simulate modes. Every
// send is stamped with a global sequence number; recv pops in global send
// order restricted to the destination, so identical program order of sends
// yields identical recv sequences everywhere. Single-threaded cooperative
// stepping: recv on an empty queue with live peers is reported as a
// TransportError rather than blocking (the harness schedules actors so it
// never happens in a correct run).
class SimNetwork {
 public:
  explicit SimNetwork(const std::vector<uint32_t>& ranks);

  // Channels hold references back into the network, so it must stay put.
  SimNetwork(const SimNetwork&) = delete;
  SimNetwork& operator=(const SimNetwork&) = delete;

  Channel& endpoint(uint32_t rank);

  // Routes packages addressed to `rank` into `owner`'s queue (scheduler
  // topologies: the scheduler owns its group's upstream ranks).
  void alias(uint32_t rank, uint32_t owner);

  // Test-only fault injection: sends with these sequence numbers vanish.
  void drop_sends(const std::set<uint64_t>& sequence_numbers);

  uint64_t sends_issued() const { return next_seq_; }

 private:
  friend class SimChannel;
  struct Entry {
    uint64_t seq;
    Package pkg;
  };
  std::map<uint32_t, std::unique_ptr<Channel>> endpoints_;
  std::map<uint32_t, std::deque<Entry>> queues_;
  std::map<uint32_t, uint32_t> aliases_;
  std::set<uint32_t> closed_;
  std::set<uint64_t> dropped_;
  uint64_t next_seq_ = 0;
};

// TCP endpoint configuration. Rank 0 is the server; clients dial it and
// announce themselves with a Register package. The wire format is exactly
// encode_package, with the u64 length prefix as the frame delimiter; any
// framing corruption closes the connection with TransportError.
struct TcpConfig {
  std::string host = "127.0.0.1";
  uint16_t port = 0;
  uint32_t world_size = 0;  // server + clients
  uint32_t rank = 0;
  int connect_retries = 5;
  int retry_delay_ms = 1000;
};

// Server side: accepts world_size-1 registrations, one reader thread per
// connection feeding a single arrival-ordered inbox.
std::unique_ptr<Channel> tcp_serve(const TcpConfig& cfg);

// Client side: dials with bounded retries (ConnectFailed afterwards), sends
// Register, then exchanges frames on the single connection.
std::unique_ptr<Channel> tcp_connect(const TcpConfig& cfg);

// Picks a free loopback port (tests and examples).
uint16_t free_tcp_port();

}  // namespace fedsim
