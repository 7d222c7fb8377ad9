#include "fedsim/partition.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace fedsim {

namespace {

constexpr int kMaxRetries = 100;

void sort_all(PartitionMap& map) {
  for (auto& [id, indices] : map.assignments) std::sort(indices.begin(), indices.end());
}

std::vector<double> dirichlet_draw(Rng& rng, size_t k, double beta) {
  std::vector<double> p(k);
  double sum = 0.0;
  for (size_t i = 0; i < k; ++i) {
    p[i] = rng.gamma(beta);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

// Splits `count` items by proportions, largest-remainder rounding so the
// pieces sum exactly to count.
std::vector<size_t> apportion(const std::vector<double>& proportions, size_t count) {
  const size_t k = proportions.size();
  std::vector<size_t> sizes(k);
  std::vector<std::pair<double, size_t>> remainders(k);
  size_t assigned = 0;
  for (size_t i = 0; i < k; ++i) {
    const double exact = proportions[i] * static_cast<double>(count);
    sizes[i] = static_cast<size_t>(exact);
    remainders[i] = {exact - static_cast<double>(sizes[i]), i};
    assigned += sizes[i];
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (size_t i = 0; assigned < count; ++i, ++assigned) sizes[remainders[i % k].second]++;
  return sizes;
}

}  // namespace

PartitionMap iid_partition(size_t n, size_t num_clients, uint64_t seed) {
  if (num_clients < 1) throw BadSpec("iid_partition: need at least one client");
  if (n < num_clients) throw TooFewSamples("iid_partition: fewer samples than clients");
  Rng rng(seed, {0x11dULL});
  std::vector<size_t> perm = rng.permutation(n);

  PartitionMap map;
  map.n_total = n;
  const size_t base = n / num_clients;
  const size_t extra = n % num_clients;
  size_t offset = 0;
  for (size_t c = 0; c < num_clients; ++c) {
    const size_t size = base + (c < extra ? 1 : 0);
    map.assignments[uint32_t(c)] =
        std::vector<size_t>(perm.begin() + offset, perm.begin() + offset + size);
    offset += size;
  }
  sort_all(map);
  return map;
}

PartitionMap shard_partition(const std::vector<uint32_t>& labels, size_t num_shards,
                             size_t shards_per_client, uint64_t seed,
                             size_t expected_shard_size) {
  const size_t n = labels.size();
  if (num_shards == 0 || shards_per_client == 0 || num_shards % shards_per_client != 0) {
    throw BadShardSpec("shard_partition: num_shards must be a positive multiple of shards_per_client");
  }
  if (n % num_shards != 0) {
    throw BadShardSpec("shard_partition: num_shards must divide the sample count");
  }
  const size_t shard_size = n / num_shards;
  if (expected_shard_size != 0 && expected_shard_size != shard_size) {
    throw BadShardSpec("shard_partition: num_shards * shard_size != n");
  }

  // Stable sort by label keeps dataset order inside a label.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return labels[a] < labels[b]; });

  Rng rng(seed, {0x5aaULL});
  std::vector<size_t> shard_order = rng.permutation(num_shards);

  PartitionMap map;
  map.n_total = n;
  const size_t num_clients = num_shards / shards_per_client;
  for (size_t c = 0; c < num_clients; ++c) {
    auto& indices = map.assignments[uint32_t(c)];
    for (size_t s = 0; s < shards_per_client; ++s) {
      const size_t shard = shard_order[c * shards_per_client + s];
      indices.insert(indices.end(), order.begin() + shard * shard_size,
                     order.begin() + (shard + 1) * shard_size);
    }
  }
  sort_all(map);
  return map;
}

PartitionMap dirichlet_label_partition(const std::vector<uint32_t>& labels,
                                       size_t num_clients, double beta, uint64_t seed,
                                       size_t min_size) {
  if (!(beta > 0.0)) throw BadParam("dirichlet_label_partition: beta must be positive");
  if (num_clients < 1) throw BadSpec("dirichlet_label_partition: need at least one client");
  const size_t n = labels.size();
  uint32_t num_classes = 0;
  for (uint32_t y : labels) num_classes = std::max(num_classes, y + 1);

  std::vector<std::vector<size_t>> by_class(num_classes);
  for (size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    Rng rng(seed, {0xd17ULL, uint64_t(attempt)});
    PartitionMap map;
    map.n_total = n;
    for (size_t c = 0; c < num_clients; ++c) map.assignments[uint32_t(c)];
    for (uint32_t cls = 0; cls < num_classes; ++cls) {
      auto shuffled = by_class[cls];
      rng.shuffle(shuffled);
      const auto proportions = dirichlet_draw(rng, num_clients, beta);
      const auto sizes = apportion(proportions, shuffled.size());
      size_t offset = 0;
      for (size_t c = 0; c < num_clients; ++c) {
        auto& dst = map.assignments[uint32_t(c)];
        dst.insert(dst.end(), shuffled.begin() + offset, shuffled.begin() + offset + sizes[c]);
        offset += sizes[c];
      }
    }
    const bool feasible = std::all_of(
        map.assignments.begin(), map.assignments.end(),
        [&](const auto& kv) { return kv.second.size() >= min_size; });
    if (feasible) {
      sort_all(map);
      return map;
    }
  }
  throw PartitionInfeasible("dirichlet_label_partition: min_size unreachable after retries");
}

PartitionMap quantity_skew_partition(size_t n, size_t num_clients, double beta,
                                     uint64_t seed, size_t min_size) {
  if (!(beta > 0.0)) throw BadParam("quantity_skew_partition: beta must be positive");
  if (num_clients < 1) throw BadSpec("quantity_skew_partition: need at least one client");
  if (n < num_clients) throw TooFewSamples("quantity_skew_partition: fewer samples than clients");

  for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
    Rng rng(seed, {0x95cULL, uint64_t(attempt)});
    const std::vector<size_t> perm = rng.permutation(n);
    const auto proportions = dirichlet_draw(rng, num_clients, beta);
    const auto sizes = apportion(proportions, n);
    if (!std::all_of(sizes.begin(), sizes.end(),
                     [&](size_t s) { return s >= min_size; })) {
      continue;
    }
    PartitionMap map;
    map.n_total = n;
    size_t offset = 0;
    for (size_t c = 0; c < num_clients; ++c) {
      map.assignments[uint32_t(c)] =
          std::vector<size_t>(perm.begin() + offset, perm.begin() + offset + sizes[c]);
      offset += sizes[c];
    }
    sort_all(map);
    return map;
  }
  throw PartitionInfeasible("quantity_skew_partition: min_size unreachable after retries");
}

std::vector<ClientSummary> partition_report(const PartitionMap& map,
                                            const std::vector<uint32_t>& labels) {
  uint32_t num_classes = 0;
  for (uint32_t y : labels) num_classes = std::max(num_classes, y + 1);
  std::vector<ClientSummary> report;
  for (const auto& [id, indices] : map.assignments) {
    ClientSummary s;
    s.client_id = id;
    s.size = indices.size();
    s.label_histogram.assign(num_classes, 0);
    for (size_t idx : indices) s.label_histogram[labels[idx]]++;
    for (size_t count : s.label_histogram) {
      if (count > 0) s.distinct_labels++;
    }
    report.push_back(std::move(s));
  }
  return report;
}

std::string partition_to_json(const PartitionMap& map) {
  nlohmann::json j;
  j["n_total"] = map.n_total;
  nlohmann::json assignments = nlohmann::json::object();
  for (const auto& [id, indices] : map.assignments) {
    assignments[std::to_string(id)] = indices;
  }
  j["assignments"] = assignments;
  return j.dump();
}

PartitionMap partition_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  PartitionMap map;
  map.n_total = j.at("n_total").get<size_t>();
  for (const auto& [key, value] : j.at("assignments").items()) {
    map.assignments[uint32_t(std::stoul(key))] = value.get<std::vector<size_t>>();
  }
  return map;
}

void save_partition(const PartitionMap& map, const std::string& path) {
  std::ofstream out(path);
  out << partition_to_json(map) << "\n";
}

PartitionMap load_partition(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_partition: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return partition_from_json(ss.str());
}

}  // namespace fedsim
