#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/packaging.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// One client's contribution to a round: trained parameters plus the sample
// count that weights them.
struct ClientUpdate {
  uint32_t client_id = 0;
  ModelParameters params;
  uint64_t n_k = 1;
  uint32_t round_trained = 0;
};

// Sample-count-weighted average: out[j] = sum_k (n_k / n) * w_k[j].
// Sums are compensated (Kahan) so the result is permutation invariant to
// 1e-12 relative error.
ModelParameters fedavg(const std::vector<ClientUpdate>& updates);

// Staleness-discounted asynchronous mixing:
//   alpha_t = alpha * (server_round - round_trained + 1)^(-staleness_exponent)
//   global' = (1 - alpha_t) * global + alpha_t * incoming
ModelParameters async_mix(const ModelParameters& global, const ClientUpdate& incoming,
                          double alpha, uint32_t server_round, double staleness_exponent);

// max(1, round-half-up(C * K)) distinct ids drawn uniformly without
// replacement, returned sorted.
std::vector<uint32_t> sample_clients(size_t total_clients, double fraction, Rng& rng);

// Server-side buffer for one synchronous round.
struct SyncHandlerState {
  ModelParameters global;
  uint32_t round = 0;
  size_t expected = 0;
  std::vector<ClientUpdate> buffer;
};

// Buffers one update; once `expected` updates arrived the buffer is
// aggregated into `global`, the round advances and the buffer clears.
// Returns true when the round completed.
bool handler_receive(SyncHandlerState& state, const ClientUpdate& update);

}  // namespace fedsim
