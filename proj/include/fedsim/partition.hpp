#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// Client id -> sorted sample indices. Lists are pairwise disjoint and cover
// [0, n_total) for every scheme.
struct PartitionMap {
  std::map<uint32_t, std::vector<size_t>> assignments;
  size_t n_total = 0;

  size_t num_clients() const { return assignments.size(); }
};

// Random permutation cut into num_clients contiguous chunks, sizes differing
// by at most one.
PartitionMap iid_partition(size_t n, size_t num_clients, uint64_t seed);

// Pathological non-IID: stable-sort indices by label, cut into equal shards,
// deal shards_per_client shards to each client uniformly at random.
// expected_shard_size, when nonzero, must satisfy
// num_shards * expected_shard_size == n.
PartitionMap shard_partition(const std::vector<uint32_t>& labels, size_t num_shards,
                             size_t shards_per_client, uint64_t seed,
                             size_t expected_shard_size = 0);

// Label skew: each class is split across clients by Dirichlet(beta)
// proportions; resampled (bounded retries) until every client holds at least
// min_size samples.
PartitionMap dirichlet_label_partition(const std::vector<uint32_t>& labels,
                                       size_t num_clients, double beta, uint64_t seed,
                                       size_t min_size = 1);

// Quantity skew: client sizes proportional to one Dirichlet(beta) draw over a
// random permutation of the index space.
PartitionMap quantity_skew_partition(size_t n, size_t num_clients, double beta,
                                     uint64_t seed, size_t min_size = 1);

struct ClientSummary {
  uint32_t client_id = 0;
  size_t size = 0;
  std::vector<size_t> label_histogram;
  size_t distinct_labels = 0;
};

std::vector<ClientSummary> partition_report(const PartitionMap& map,
                                            const std::vector<uint32_t>& labels);

// JSON round-trip: {"n_total": ..., "assignments": {"0": [...], ...}}.
// Cross-process clients load the same file so every process agrees on the
// split.
std::string partition_to_json(const PartitionMap& map);
PartitionMap partition_from_json(const std::string& json_text);
void save_partition(const PartitionMap& map, const std::string& path);
PartitionMap load_partition(const std::string& path);

}  // namespace fedsim
