#include <doctest.h>

#include <thread>
#include <vector>

#include "fedsim/rng.hpp"
#include "fedsim/transport.hpp"

using namespace fedsim;

namespace {

Package make_pkg(uint32_t from, uint32_t to, uint32_t round,
                 std::vector<uint8_t> payload = {}) {
  Package p;
  p.sender_rank = from;
  p.receiver_rank = to;
  p.round = round;
  p.message_code = MessageCode::ParameterUpdate;
  p.dtype = Dtype::F32;
  p.compression = Compression::None;
  if (!payload.empty()) {
    p.slices = {payload.size()};
    p.payload = std::move(payload);
  }
  return p;
}

Package random_pkg(Rng& rng, uint32_t from, uint32_t to) {
  Package p;
  p.sender_rank = from;
  p.receiver_rank = to;
  p.round = uint32_t(rng.next_below(1000));
  p.message_code = MessageCode(rng.next_below(4));
  p.dtype = rng.next_below(2) ? Dtype::F64 : Dtype::F32;
  p.compression = Compression(rng.next_below(3));
  const size_t slices = rng.next_below(4);
  size_t total = 0;
  for (size_t s = 0; s < slices; ++s) {
    const size_t len = rng.next_below(64);
    p.slices.push_back(len);
    total += len;
  }
  p.payload.resize(total);
  for (auto& b : p.payload) b = uint8_t(rng.next_below(256));
  return p;
}

}  // namespace

TEST_CASE("sim network: per-pair FIFO and global send ordering") {
  SimNetwork net({0, 1, 2});
  auto& server = net.endpoint(0);
  auto& c1 = net.endpoint(1);
  auto& c2 = net.endpoint(2);

  // Interleave sends from two peers to rank 0; recv order is global send
  // order, not per-sender.
  c1.send(make_pkg(1, 0, 10));
  c2.send(make_pkg(2, 0, 20));
  c1.send(make_pkg(1, 0, 11));

  auto a = server.recv();
  auto b = server.recv();
  auto c = server.recv();
  CHECK(a.sender_rank == 1);
  CHECK(a.round == 10);
  CHECK(b.sender_rank == 2);
  CHECK(b.round == 20);
  CHECK(c.sender_rank == 1);
  CHECK(c.round == 11);
  CHECK(net.sends_issued() == 3);
}

TEST_CASE("sim network: error cases") {
  SimNetwork net({0, 1});
  auto& server = net.endpoint(0);
  auto& client = net.endpoint(1);

  SUBCASE("unknown destination") {
    CHECK_THROWS_AS(server.send(make_pkg(0, 9, 0)), UnknownEndpoint);
    CHECK_THROWS_AS(net.endpoint(9), UnknownEndpoint);
  }
  SUBCASE("empty queue with live peers is a transport error, not a hang") {
    CHECK_THROWS_AS(server.recv(), TransportError);
  }
  SUBCASE("recv drains queued packages after peers close, then reports closure") {
    client.send(make_pkg(1, 0, 7));
    client.close();
    CHECK(server.recv().round == 7);
    CHECK_THROWS_AS(server.recv(), ChannelClosed);
  }
  SUBCASE("send from a closed endpoint is a transport error") {
    server.close();
    CHECK_THROWS_AS(server.send(make_pkg(0, 1, 0)), TransportError);
  }
  SUBCASE("duplicate ranks are rejected at construction") {
    CHECK_THROWS_AS(SimNetwork({0, 1, 1}), DuplicateRank);
  }
}

TEST_CASE("sim network: aliases route to the owning endpoint") {
  SimNetwork net({0, 1});
  net.alias(5, 1);
  auto& server = net.endpoint(0);
  auto& owner = net.endpoint(1);
  server.send(make_pkg(0, 5, 3));
  const auto got = owner.recv();
  CHECK(got.receiver_rank == 5);
  CHECK(got.round == 3);
}

TEST_CASE("sim network: drop schedule removes exact sends") {
  SimNetwork net({0, 1});
  net.drop_sends({1});  // second send overall vanishes
  auto& server = net.endpoint(0);
  auto& client = net.endpoint(1);
  server.send(make_pkg(0, 1, 100));
  server.send(make_pkg(0, 1, 101));
  server.send(make_pkg(0, 1, 102));
  CHECK(client.recv().round == 100);
  CHECK(client.recv().round == 102);
  CHECK_THROWS_AS(client.recv(), TransportError);
}

TEST_CASE("sim network: payload round-trips exactly") {
  SimNetwork net({0, 1});
  Rng rng(404);
  auto& a = net.endpoint(0);
  auto& b = net.endpoint(1);
  for (int i = 0; i < 200; ++i) {
    const auto pkg = random_pkg(rng, 0, 1);
    a.send(pkg);
    CHECK(b.recv() == pkg);
  }
}

TEST_CASE("tcp: loopback round-trip fuzz over a three-rank world") {
  const uint16_t port = free_tcp_port();
  TcpConfig base;
  base.port = port;
  base.world_size = 3;

  std::vector<Package> c1_got, c2_got;
  std::thread server_thread([&] {
    TcpConfig cfg = base;
    cfg.rank = 0;
    auto server = tcp_serve(cfg);
    Rng rng(7001);
    // Echo 500 random packages to each client and verify 500 uploads from
    // each, in per-sender order.
    std::vector<Package> expect1, expect2;
    for (int i = 0; i < 500; ++i) {
      auto p1 = random_pkg(rng, 0, 1);
      auto p2 = random_pkg(rng, 0, 2);
      server->send(p1);
      server->send(p2);
    }
    std::map<uint32_t, uint32_t> seen;
    for (int i = 0; i < 1000; ++i) {
      auto pkg = server->recv();
      CHECK(pkg.round == seen[pkg.sender_rank]++);
    }
    CHECK(seen[1] == 500);
    CHECK(seen[2] == 500);
    server->close();
  });

  auto client_main = [&](uint32_t rank, std::vector<Package>& got) {
    TcpConfig cfg = base;
    cfg.rank = rank;
    auto client = tcp_connect(cfg);
    Rng rng(8000 + rank);
    for (uint32_t i = 0; i < 500; ++i) {
      got.push_back(client->recv());
      auto up = random_pkg(rng, rank, 0);
      up.round = i;
      client->send(up);
    }
    client->close();
  };
  std::thread t1(client_main, 1, std::ref(c1_got));
  std::thread t2(client_main, 2, std::ref(c2_got));
  server_thread.join();
  t1.join();
  t2.join();

  // Downlink contents must match what the server generated, in order.
  Rng rng(7001);
  for (int i = 0; i < 500; ++i) {
    CHECK(c1_got[size_t(i)] == random_pkg(rng, 0, 1));
    CHECK(c2_got[size_t(i)] == random_pkg(rng, 0, 2));
  }
}

TEST_CASE("tcp: connect to a dead port fails after bounded retries") {
  TcpConfig cfg;
  cfg.port = free_tcp_port();  // nothing listens here
  cfg.world_size = 2;
  cfg.rank = 1;
  cfg.connect_retries = 2;
  cfg.retry_delay_ms = 10;
  CHECK_THROWS_AS(tcp_connect(cfg), ConnectFailed);
}
