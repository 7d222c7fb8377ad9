#include "fedsim/protocol.hpp"

#include <algorithm>
#include <cmath>

namespace fedsim {

namespace {

std::vector<uint8_t> le_u64_bytes(uint64_t v) {
  std::vector<uint8_t> out(8);
  for (size_t i = 0; i < 8; ++i) out[i] = uint8_t(v >> (8 * i));
  return out;
}

uint64_t le_u64_from(const uint8_t* p) {
  uint64_t v = 0;
  for (size_t i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
  return v;
}

}  // namespace

size_t CompressionSpec::k_for(size_t param_count) const {
  const auto k = static_cast<size_t>(std::llround(topk_fraction * double(param_count)));
  return std::clamp<size_t>(k, 1, param_count);
}

Package make_model_package(uint32_t sender, uint32_t receiver, uint32_t round,
                           const std::vector<double>& values, Dtype dtype) {
  Package pkg;
  pkg.message_code = MessageCode::ParameterUpdate;
  pkg.sender_rank = sender;
  pkg.receiver_rank = receiver;
  pkg.round = round;
  pkg.dtype = dtype;
  pkg.compression = Compression::None;
  pkg.payload = encode_values(values, dtype, Compression::None);
  pkg.slices = {pkg.payload.size()};
  return pkg;
}

Package make_update_package(uint32_t sender, uint32_t receiver, uint32_t round_trained,
                            const std::vector<double>& values, uint64_t n_k, Dtype dtype,
                            const CompressionSpec& comp) {
  Package pkg;
  pkg.message_code = MessageCode::ParameterUpdate;
  pkg.sender_rank = sender;
  pkg.receiver_rank = receiver;
  pkg.round = round_trained;
  pkg.dtype = dtype;
  pkg.compression = comp.tag;
  const std::vector<uint8_t> meta = le_u64_bytes(n_k);
  const std::vector<uint8_t> body =
      encode_values(values, dtype, comp.tag, comp.k_for(values.size()));
  pkg.payload = meta;
  pkg.payload.insert(pkg.payload.end(), body.begin(), body.end());
  pkg.slices = {meta.size(), body.size()};
  return pkg;
}

Package make_control_package(MessageCode code, uint32_t sender, uint32_t receiver,
                             uint32_t round) {
  Package pkg;
  pkg.message_code = code;
  pkg.sender_rank = sender;
  pkg.receiver_rank = receiver;
  pkg.round = round;
  return pkg;
}

std::vector<double> parse_model(const Package& pkg) {
  if (pkg.slices.size() != 1) {
    throw CorruptPayload("parse_model: expected a single payload slice");
  }
  return decode_values(pkg.payload, pkg.dtype, pkg.compression);
}

ParsedUpdate parse_update(const Package& pkg) {
  if (pkg.slices.size() != 2 || pkg.slices[0] != 8) {
    throw CorruptPayload("parse_update: expected [n_k][values] slices");
  }
  ParsedUpdate u;
  u.n_k = le_u64_from(pkg.payload.data());
  const std::vector<uint8_t> body(pkg.payload.begin() + 8, pkg.payload.end());
  u.values = decode_values(body, pkg.dtype, pkg.compression);
  u.round_trained = pkg.round;
  return u;
}

// --- Synchronous server ------------------------------------------------------

void sync_server_broadcast(SyncServerContext& ctx, Channel& ch) {
  if (ctx.phase != ServerPhase::Idle) {
    throw RoundAborted("sync_server_broadcast: server not idle");
  }
  Rng rng(ctx.seed, {0x5a3ULL, ctx.handler.round});
  ctx.sampled = sample_clients(ctx.num_clients, ctx.sample_fraction, rng);
  ctx.phase = ServerPhase::Broadcasting;
  for (uint32_t id : ctx.sampled) {
    const Package pkg = make_model_package(kServerRank, client_rank(id), ctx.handler.round,
                                           ctx.handler.global.values, ctx.dtype);
    ctx.bytes_down += encoded_size(pkg);
    ch.send(pkg);
  }
  ctx.handler.expected = ctx.sampled.size();
  ctx.phase = ServerPhase::Collecting;
}

void sync_server_collect(SyncServerContext& ctx, Channel& ch) {
  if (ctx.phase != ServerPhase::Collecting) {
    throw RoundAborted("sync_server_collect: server not collecting");
  }
  try {
    for (;;) {
      const Package pkg = ch.recv();
      if (pkg.round > ctx.handler.round) {
        throw ProtocolViolation("sync server: package from a future round");
      }
      if (pkg.message_code != MessageCode::ParameterUpdate) continue;  // dropped
      const uint32_t id = client_id_of(pkg.sender_rank);
      if (std::find(ctx.sampled.begin(), ctx.sampled.end(), id) == ctx.sampled.end()) {
        continue;  // unexpected sender, dropped
      }
      ParsedUpdate parsed = parse_update(pkg);
      ClientUpdate update;
      update.client_id = id;
      update.n_k = parsed.n_k;
      update.round_trained = parsed.round_trained;
      update.params.values = std::move(parsed.values);
      update.params.layout = ctx.handler.global.layout;
      if (handler_receive(ctx.handler, update)) {
        ctx.bytes_up += encoded_size(pkg);
        break;
      }
      ctx.bytes_up += encoded_size(pkg);
    }
  } catch (const TransportError& e) {
    ctx.handler.buffer.clear();
    ctx.phase = ServerPhase::Idle;
    ctx.sampled.clear();
    throw RoundAborted(std::string("sync round aborted: ") + e.what());
  } catch (const ChannelClosed& e) {
    ctx.handler.buffer.clear();
    ctx.phase = ServerPhase::Idle;
    ctx.sampled.clear();
    throw RoundAborted(std::string("sync round aborted: ") + e.what());
  }
  ctx.phase = ServerPhase::Idle;
  ctx.sampled.clear();
}

void sync_server_round(SyncServerContext& ctx, Channel& ch) {
  sync_server_broadcast(ctx, ch);
  sync_server_collect(ctx, ch);
}

void sync_server_shutdown(SyncServerContext& ctx, Channel& ch) {
  for (size_t id = 0; id < ctx.num_clients; ++id) {
    ch.send(make_control_package(MessageCode::Exit, kServerRank, client_rank(uint32_t(id)),
                                 ctx.handler.round));
  }
  ctx.phase = ServerPhase::Finished;
}

// --- Synchronous client ------------------------------------------------------

bool sync_client_handle(SyncClientContext& ctx, Channel& ch, const Package& pkg) {
  if (ctx.phase == ClientPhase::Exited) return false;
  switch (pkg.message_code) {
    case MessageCode::Exit:
      ctx.phase = ClientPhase::Exited;
      return false;
    case MessageCode::ParameterUpdate: {
      ctx.phase = ClientPhase::Training;
      ModelParameters global;
      global.values = parse_model(pkg);
      global.layout = ctx.spec.layout();
      if (global.values.size() != ctx.spec.param_count()) {
        throw LayoutMismatch("sync client: model size does not match spec");
      }
      const ClientUpdate update = local_train(ctx.spec, global, *ctx.dataset, ctx.indices,
                                              ctx.train, ctx.client_id, pkg.round);
      ctx.phase = ClientPhase::Uploading;
      ch.send(make_update_package(client_rank(ctx.client_id), kServerRank, pkg.round,
                                  update.params.values, update.n_k, ctx.dtype,
                                  ctx.compression));
      ctx.rounds_trained += 1;
      ctx.phase = ClientPhase::WaitingModel;
      return true;
    }
    default:
      return true;  // dropped with no reply
  }
}

void sync_client_loop(SyncClientContext& ctx, Channel& ch) {
  while (ctx.phase != ClientPhase::Exited) {
    const Package pkg = ch.recv();
    if (!sync_client_handle(ctx, ch, pkg)) break;
  }
}

// --- Asynchronous server -----------------------------------------------------

std::vector<Package> async_server_handle(AsyncServerState& state, const Package& pkg) {
  std::vector<Package> out;
  switch (pkg.message_code) {
    case MessageCode::ParameterRequest:
      out.push_back(make_model_package(kServerRank, pkg.sender_rank, state.round,
                                       state.global.values, state.dtype));
      break;
    case MessageCode::ParameterUpdate: {
      if (pkg.round > state.round) {
        throw ProtocolViolation("async server: update from a future round");
      }
      ParsedUpdate parsed = parse_update(pkg);
      ClientUpdate update;
      update.client_id = client_id_of(pkg.sender_rank);
      update.n_k = parsed.n_k;
      update.round_trained = parsed.round_trained;
      update.params.values = std::move(parsed.values);
      update.params.layout = state.global.layout;
      state.global = async_mix(state.global, update, state.alpha, state.round,
                               state.staleness_exponent);
      state.round += 1;
      state.updates_applied += 1;
      out.push_back(
          make_control_package(MessageCode::Register, kServerRank, pkg.sender_rank, state.round));
      break;
    }
    default:
      break;  // unknown flow, dropped with diagnostic left to the caller
  }
  return out;
}

// --- Scheduler ---------------------------------------------------------------

Scheduler::Scheduler(SchedulerConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.up_to_down.empty()) throw RoutingError("scheduler: empty rank map");
}

bool Scheduler::step_down(Channel& up, Channel& down) {
  const Package pkg = up.recv();
  if (pkg.message_code == MessageCode::Exit) {
    for (const auto& [up_rank, down_rank] : cfg_.up_to_down) {
      Package exit_pkg = pkg;
      exit_pkg.receiver_rank = down_rank;
      down.send(exit_pkg);
    }
    return false;
  }
  if (cfg_.mode == SchedulerMode::Forward) {
    auto it = cfg_.up_to_down.find(pkg.receiver_rank);
    if (it == cfg_.up_to_down.end()) {
      throw RoutingError("scheduler: no downstream mapping for rank");
    }
    Package fwd = pkg;
    fwd.receiver_rank = it->second;
    down.send(fwd);
    return true;
  }
  // MiddleAggregate: one model broadcast fans out to the whole group.
  current_round_ = pkg.round;
  for (const auto& [up_rank, down_rank] : cfg_.up_to_down) {
    Package fwd = pkg;
    fwd.receiver_rank = down_rank;
    down.send(fwd);
  }
  return true;
}

void Scheduler::step_up(Channel& up, Channel& down) {
  if (cfg_.mode == SchedulerMode::Forward) {
    const Package pkg = down.recv();
    auto it = cfg_.down_to_up.find(pkg.sender_rank);
    if (it == cfg_.down_to_up.end()) {
      throw RoutingError("scheduler: no upstream mapping for rank");
    }
    Package fwd = pkg;
    fwd.sender_rank = it->second;
    up.send(fwd);
    return;
  }
  // MiddleAggregate: collect the whole group, aggregate, upload once.
  std::vector<ClientUpdate> updates;
  while (updates.size() < cfg_.up_to_down.size()) {
    const Package pkg = down.recv();
    if (pkg.message_code != MessageCode::ParameterUpdate) continue;
    ParsedUpdate parsed = parse_update(pkg);
    ClientUpdate u;
    u.client_id = pkg.sender_rank;
    u.n_k = parsed.n_k;
    u.round_trained = parsed.round_trained;
    u.params.values = std::move(parsed.values);
    u.params.layout.shapes = {{u.params.values.size()}};
    updates.push_back(std::move(u));
  }
  uint64_t total_n = 0;
  for (const auto& u : updates) total_n += u.n_k;
  const ModelParameters combined = fedavg(updates);
  up.send(make_update_package(cfg_.upstream_rank, kServerRank, current_round_,
                              combined.values, total_n, cfg_.dtype, cfg_.compression));
}

void Scheduler::run(Channel& up, Channel& down) {
  for (;;) {
    if (!step_down(up, down)) return;
    step_up(up, down);
  }
}

}  // namespace fedsim
