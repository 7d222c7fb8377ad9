#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "fedsim/aggregate.hpp"
#include "fedsim/compress.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/packaging.hpp"
#include "fedsim/trainer.hpp"
#include "fedsim/transport.hpp"

namespace fedsim {

// Uplink payload codec choice. Model downloads always travel dense at the
// configured dtype; compression applies to client->server updates (the
// bandwidth-critical direction).
struct CompressionSpec {
  Compression tag = Compression::None;
  double topk_fraction = 0.01;  // k = max(1, round(fraction * param_count))

  size_t k_for(size_t param_count) const;
};

// --- Package construction / parsing -----------------------------------------
//
// ParameterUpdate downlink: one slice, payload = dense model values.
// ParameterUpdate uplink:   two slices, [u64 n_k][encoded model values].
// ParameterRequest / Exit / Register(ack): empty payload.

Package make_model_package(uint32_t sender, uint32_t receiver, uint32_t round,
                           const std::vector<double>& values, Dtype dtype);
Package make_update_package(uint32_t sender, uint32_t receiver, uint32_t round_trained,
                            const std::vector<double>& values, uint64_t n_k, Dtype dtype,
                            const CompressionSpec& comp);
Package make_control_package(MessageCode code, uint32_t sender, uint32_t receiver,
                             uint32_t round);

std::vector<double> parse_model(const Package& pkg);

struct ParsedUpdate {
  std::vector<double> values;
  uint64_t n_k = 0;
  uint32_t round_trained = 0;
};
ParsedUpdate parse_update(const Package& pkg);

// Rank convention: server rank 0, client with id i has rank i + 1.
inline constexpr uint32_t kServerRank = 0;
inline uint32_t client_rank(uint32_t client_id) { return client_id + 1; }
inline uint32_t client_id_of(uint32_t rank) { return rank - 1; }

// --- Synchronous pattern -----------------------------------------------------

enum class ServerPhase { Idle, Broadcasting, Collecting, Finished };

struct SyncServerContext {
  ModelSpec spec;
  SyncHandlerState handler;
  ServerPhase phase = ServerPhase::Idle;
  std::vector<uint32_t> sampled;  // client ids for the round in flight
  size_t num_clients = 0;
  double sample_fraction = 1.0;
  uint64_t seed = 0;
  Dtype dtype = Dtype::F64;
  CompressionSpec compression;
  uint64_t bytes_down = 0;
  uint64_t bytes_up = 0;
};

// Samples this round's clients and broadcasts the global model to them;
// transitions Idle -> Collecting. Sampling draws from Rng(seed, {round}), so
// the selection is a function of (seed, round) alone.
void sync_server_broadcast(SyncServerContext& ctx, Channel& ch);

// Receives until every sampled client reported, then aggregates and returns
// to Idle with round + 1. A transport failure rolls the round back
// (buffer cleared, phase Idle) and throws RoundAborted. Unexpected senders
// are dropped; a future-round tag is a protocol violation.
void sync_server_collect(SyncServerContext& ctx, Channel& ch);

// broadcast + collect.
void sync_server_round(SyncServerContext& ctx, Channel& ch);

// Broadcasts Exit to every client.
void sync_server_shutdown(SyncServerContext& ctx, Channel& ch);

enum class ClientPhase { WaitingModel, Training, Uploading, Exited };

struct SyncClientContext {
  ModelSpec spec;
  const Dataset* dataset = nullptr;
  std::vector<size_t> indices;
  TrainConfig train;
  uint32_t client_id = 0;
  Dtype dtype = Dtype::F64;
  CompressionSpec compression;
  ClientPhase phase = ClientPhase::WaitingModel;
  uint32_t rounds_trained = 0;
};

// Handles one incoming package: ParameterUpdate -> train and upload,
// Exit -> terminal. Returns false once exited.
bool sync_client_handle(SyncClientContext& ctx, Channel& ch, const Package& pkg);

// recv/handle until Exit (blocking transports).
void sync_client_loop(SyncClientContext& ctx, Channel& ch);

// --- Asynchronous pattern ----------------------------------------------------

struct AsyncServerState {
  ModelSpec spec;
  ModelParameters global;
  uint32_t round = 0;
  double alpha = 0.5;
  double staleness_exponent = 0.0;
  Dtype dtype = Dtype::F64;
  uint64_t updates_applied = 0;
};

// ParameterRequest -> current global and round; ParameterUpdate -> mix into
// the global, round + 1, Register-coded ack. Unknown codes are dropped.
std::vector<Package> async_server_handle(AsyncServerState& state, const Package& pkg);

// --- Scheduler (hierarchical topologies) -------------------------------------

enum class SchedulerMode { Forward, MiddleAggregate };

struct SchedulerConfig {
  uint32_t upstream_rank = 0;  // scheduler's own rank in the upper network
  SchedulerMode mode = SchedulerMode::Forward;
  // Rank-mapping table between the two networks.
  std::map<uint32_t, uint32_t> up_to_down;
  std::map<uint32_t, uint32_t> down_to_up;
  Dtype dtype = Dtype::F64;
  CompressionSpec compression;
};

// Relay/middle-aggregation actor sitting between an upstream channel (toward
// the server) and a downstream channel (toward its client group).
class Scheduler {
 public:
  explicit Scheduler(SchedulerConfig cfg);

  // Moves one package downstream. Forward mode relays it verbatim with ranks
  // rewritten; MiddleAggregate fans a model broadcast out to the whole group.
  // Returns false once Exit has been relayed (scheduler done).
  bool step_down(Channel& up, Channel& down);

  // Moves the upstream direction: Forward mode relays one package;
  // MiddleAggregate collects the whole group's updates, aggregates them and
  // uploads a single combined update with n_k = sum of the group's n_k.
  void step_up(Channel& up, Channel& down);

  // Blocking loop for cross-process deployments.
  void run(Channel& up, Channel& down);

 private:
  SchedulerConfig cfg_;
  uint32_t current_round_ = 0;
};

}  // namespace fedsim
