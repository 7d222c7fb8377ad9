#include "fedsim/transport.hpp"

namespace fedsim {

class SimChannel final : public Channel {
 public:
  SimChannel(SimNetwork& net, uint32_t rank) : net_(net), rank_(rank) {}

  void send(const Package& pkg) override {
    if (net_.closed_.contains(rank_)) throw TransportError("send on closed endpoint");
    uint32_t dest = pkg.receiver_rank;
    if (auto it = net_.aliases_.find(dest); it != net_.aliases_.end()) dest = it->second;
    if (!net_.endpoints_.contains(dest)) {
      throw UnknownEndpoint("send: receiver rank not registered");
    }
    const uint64_t seq = net_.next_seq_++;
    if (net_.dropped_.contains(seq)) return;
    net_.queues_[dest].push_back({seq, pkg});
  }

  Package recv() override {
    auto& queue = net_.queues_[rank_];
    if (queue.empty()) {
      // All peers closed means nothing can ever arrive.
      bool any_open = false;
      for (const auto& [r, ep] : net_.endpoints_) {
        if (r != rank_ && !net_.closed_.contains(r)) any_open = true;
      }
      if (!any_open) throw ChannelClosed("recv: all peers closed");
      throw TransportError("recv would block: no package queued for this endpoint");
    }
    Package pkg = std::move(queue.front().pkg);
    queue.pop_front();
    return pkg;
  }

  void close() override { net_.closed_.insert(rank_); }

  uint32_t rank() const override { return rank_; }

 private:
  SimNetwork& net_;
  uint32_t rank_;
};

SimNetwork::SimNetwork(const std::vector<uint32_t>& ranks) {
  for (uint32_t r : ranks) {
    if (endpoints_.contains(r)) throw DuplicateRank("SimNetwork: duplicate rank");
    endpoints_[r] = std::make_unique<SimChannel>(*this, r);
    queues_[r];
  }
}

Channel& SimNetwork::endpoint(uint32_t rank) {
  auto it = endpoints_.find(rank);
  if (it == endpoints_.end()) throw UnknownEndpoint("SimNetwork: rank not registered");
  return *it->second;
}

void SimNetwork::alias(uint32_t rank, uint32_t owner) {
  if (!endpoints_.contains(owner)) throw UnknownEndpoint("alias: owner not registered");
  if (endpoints_.contains(rank)) throw DuplicateRank("alias: rank already has an endpoint");
  aliases_[rank] = owner;
}

void SimNetwork::drop_sends(const std::set<uint64_t>& sequence_numbers) {
  dropped_.insert(sequence_numbers.begin(), sequence_numbers.end());
}

}  // namespace fedsim
