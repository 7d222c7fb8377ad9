#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/partition.hpp"
#include "fedsim/protocol.hpp"
#include "fedsim/trainer.hpp"

namespace fedsim {

enum class RunMode { Standalone, Simulate, Server, Client, SchedulerMode };

struct DatasetSpec {
  std::string type = "synthetic";  // "synthetic" | "idx"
  size_t n = 2000;
  size_t d = 20;
  size_t classes = 2;
  double separation = 4.0;
  std::string idx_dir;
};

struct PartitionSpec {
  std::string scheme = "iid";  // "iid" | "shard" | "dirichlet" | "quantity"
  size_t num_shards = 20;
  size_t shards_per_client = 2;
  double beta = 0.5;
  size_t min_size = 1;
  std::string file;  // when set, load instead of generating
};

struct AsyncSpec {
  bool enabled = false;
  double alpha = 0.5;
  double staleness_exponent = 0.0;
};

struct NetworkSpec {
  std::string address = "127.0.0.1";
  uint16_t port = 0;
  uint32_t world_size = 0;
  uint32_t rank = 0;
  // Scheduler only: downstream listen port and the global ranks it fronts.
  uint16_t down_port = 0;
  std::vector<uint32_t> group_ranks;
  std::string scheduler_mode = "middle_aggregate";  // or "forward"
};

struct ExperimentConfig {
  RunMode mode = RunMode::Standalone;
  ModelSpec model{ModelKind::Logistic, 0, 16, 0};
  DatasetSpec dataset;
  PartitionSpec partition;
  size_t rounds = 10;
  size_t num_clients = 10;
  double sample_fraction = 1.0;
  TrainConfig train;
  CompressionSpec compression;
  AsyncSpec async_spec;
  uint64_t seed = 0;
  std::string metrics_out = "metrics.csv";
  NetworkSpec network;
  Dtype dtype = Dtype::F64;
};

// Parses the JSON config document; unknown keys are rejected with the path of
// the offending field.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// Mode-aware validation; returns one message per problem, empty when valid.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

struct RoundMetrics {
  uint32_t round = 0;
  double global_loss = 0.0;
  double accuracy = 0.0;
  uint64_t bytes_up = 0;
  uint64_t bytes_down = 0;
  double wall_ms = 0.0;
};

struct RunResult {
  std::vector<RoundMetrics> rows;
  ModelParameters final_global;
  // Global parameter vector after each round (equivalence tests).
  std::vector<std::vector<double>> trajectory;
};

std::string metrics_csv(const std::vector<RoundMetrics>& rows);
void write_metrics(const std::vector<RoundMetrics>& rows, const std::string& path);

// Builds train/eval datasets and the partition map for a config. Synthetic
// eval data is a disjoint 20% split from a derived seed; IDX mode uses the
// standard t10k files.
struct ExperimentData {
  Dataset train;
  Dataset eval;
  PartitionMap partition;
};
ExperimentData prepare_data(const ExperimentConfig& cfg);

// Serial in-process loop: sample -> serial_train -> fedavg -> evaluate, with
// byte counts taken from the packages an equivalent networked run would send.
RunResult run_standalone(const ExperimentConfig& cfg);

// Full protocol actors over the deterministic sim transport. Produces the
// same parameter trajectory as run_standalone under the same seeds.
RunResult run_simulate(const ExperimentConfig& cfg);

// Cross-process actors over TCP.
RunResult run_server(const ExperimentConfig& cfg);
void run_client(const ExperimentConfig& cfg);
void run_scheduler(const ExperimentConfig& cfg);

}  // namespace fedsim
