#include "fedsim/aggregate.hpp"

#include <algorithm>
#include <cmath>

namespace fedsim {

namespace {

struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

ModelParameters fedavg(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw NoUpdates("fedavg: no updates to aggregate");
  const LayoutDescriptor& layout = updates.front().params.layout;
  uint64_t total = 0;
  for (const auto& u : updates) {
    if (u.params.layout != layout || u.params.values.size() != updates.front().params.values.size()) {
      throw LayoutMismatch("fedavg: update layouts differ");
    }
    total += u.n_k;
  }
  if (total == 0) throw NoUpdates("fedavg: total sample count is zero");

  const size_t dim = updates.front().params.values.size();
  ModelParameters out;
  out.layout = layout;
  out.values.resize(dim);
  std::vector<KahanSum> acc(dim);
  for (const auto& u : updates) {
    const double weight = static_cast<double>(u.n_k) / static_cast<double>(total);
    for (size_t j = 0; j < dim; ++j) acc[j].add(weight * u.params.values[j]);
  }
  for (size_t j = 0; j < dim; ++j) out.values[j] = acc[j].sum;
  return out;
}

ModelParameters async_mix(const ModelParameters& global, const ClientUpdate& incoming,
                          double alpha, uint32_t server_round, double staleness_exponent) {
  if (incoming.params.layout != global.layout ||
      incoming.params.values.size() != global.values.size()) {
    throw LayoutMismatch("async_mix: layouts differ");
  }
  const double staleness = static_cast<double>(server_round - incoming.round_trained);
  const double alpha_t = alpha * std::pow(staleness + 1.0, -staleness_exponent);
  ModelParameters out;
  out.layout = global.layout;
  out.values.resize(global.values.size());
  for (size_t j = 0; j < global.values.size(); ++j) {
    out.values[j] = (1.0 - alpha_t) * global.values[j] + alpha_t * incoming.params.values[j];
  }
  return out;
}

std::vector<uint32_t> sample_clients(size_t total_clients, double fraction, Rng& rng) {
  if (total_clients < 1 || !(fraction > 0.0) || fraction > 1.0) {
    throw BadSampleSpec("sample_clients: need K >= 1 and C in (0, 1]");
  }
  // Round half up, at least one client, never more than K.
  size_t m = static_cast<size_t>(std::floor(fraction * static_cast<double>(total_clients) + 0.5));
  m = std::clamp<size_t>(m, 1, total_clients);

  // Partial Fisher-Yates over the id space.
  std::vector<uint32_t> ids(total_clients);
  for (size_t i = 0; i < total_clients; ++i) ids[i] = uint32_t(i);
  for (size_t i = 0; i < m; ++i) {
    const size_t j = i + static_cast<size_t>(rng.next_below(total_clients - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

bool handler_receive(SyncHandlerState& state, const ClientUpdate& update) {
  if (update.round_trained != state.round) {
    throw StaleUpdate("handler_receive: update round does not match server round");
  }
  for (const auto& buffered : state.buffer) {
    if (buffered.client_id == update.client_id) {
      throw DuplicateUpdate("handler_receive: client already reported this round");
    }
  }
  state.buffer.push_back(update);
  if (state.buffer.size() < state.expected) return false;
  state.global = fedavg(state.buffer);
  state.round += 1;
  state.buffer.clear();
  return true;
}

}  // namespace fedsim
