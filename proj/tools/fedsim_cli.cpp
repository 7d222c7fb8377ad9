#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fedsim/experiment.hpp"

namespace {

// Exit codes: 0 success, 1 config error, 2 transport error, 3 protocol abort.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitTransport = 2;
constexpr int kExitProtocol = 3;

struct RunFlags {
  std::string config_path;
  std::string mode;
  std::string metrics_out;
  std::string partition_file;
  int64_t rounds = -1;
  int64_t num_clients = -1;
  double sample_fraction = -1.0;
  int64_t seed = -1;
  uint16_t port = 0;
  int64_t rank = -1;
  int64_t world_size = -1;
  std::string address;
};

// Flags win over file values which win over defaults.
fedsim::ExperimentConfig assemble_config(const RunFlags& flags) {
  fedsim::ExperimentConfig cfg;
  if (!flags.config_path.empty()) cfg = fedsim::load_config(flags.config_path);
  if (!flags.mode.empty()) {
    auto with_mode = fedsim::parse_config("{\"mode\": \"" + flags.mode + "\"}");
    cfg.mode = with_mode.mode;
  }
  if (!flags.metrics_out.empty()) cfg.metrics_out = flags.metrics_out;
  if (!flags.partition_file.empty()) cfg.partition.file = flags.partition_file;
  if (flags.rounds >= 0) cfg.rounds = size_t(flags.rounds);
  if (flags.num_clients >= 0) cfg.num_clients = size_t(flags.num_clients);
  if (flags.sample_fraction >= 0.0) cfg.sample_fraction = flags.sample_fraction;
  if (flags.seed >= 0) cfg.seed = uint64_t(flags.seed);
  if (flags.port != 0) cfg.network.port = flags.port;
  if (flags.rank >= 0) cfg.network.rank = uint32_t(flags.rank);
  if (flags.world_size >= 0) cfg.network.world_size = uint32_t(flags.world_size);
  if (!flags.address.empty()) cfg.network.address = flags.address;
  return cfg;
}

int do_run(const RunFlags& flags) {
  const fedsim::ExperimentConfig cfg = assemble_config(flags);
  const auto problems = fedsim::validate_config(cfg);
  if (!problems.empty()) {
    for (const auto& p : problems) std::cerr << "config error: " << p << "\n";
    return kExitConfig;
  }
  switch (cfg.mode) {
    case fedsim::RunMode::Standalone:
      fedsim::run_standalone(cfg);
      break;
    case fedsim::RunMode::Simulate:
      fedsim::run_simulate(cfg);
      break;
    case fedsim::RunMode::Server:
      fedsim::run_server(cfg);
      break;
    case fedsim::RunMode::Client:
      fedsim::run_client(cfg);
      break;
    case fedsim::RunMode::SchedulerMode:
      fedsim::run_scheduler(cfg);
      break;
  }
  return kExitOk;
}

int do_partition(const std::string& config_path, const std::string& out_path) {
  const fedsim::ExperimentConfig cfg = fedsim::load_config(config_path);
  fedsim::ExperimentData data = fedsim::prepare_data(cfg);
  fedsim::save_partition(data.partition, out_path);
  std::cout << "wrote " << out_path << " (" << data.partition.num_clients() << " clients, "
            << data.partition.n_total << " samples)\n";
  return kExitOk;
}

int do_inspect(const std::string& path, const std::string& labels_config) {
  const fedsim::PartitionMap map = fedsim::load_partition(path);
  std::vector<uint32_t> labels;
  if (!labels_config.empty()) {
    const fedsim::ExperimentConfig cfg = fedsim::load_config(labels_config);
    labels = fedsim::prepare_data(cfg).train.y;
  } else {
    labels.assign(map.n_total, 0);
  }
  const auto report = fedsim::partition_report(map, labels);
  std::printf("%-8s %-8s %-10s histogram\n", "client", "size", "labels");
  for (const auto& row : report) {
    std::printf("%-8u %-8zu %-10zu [", row.client_id, row.size, row.distinct_labels);
    for (size_t c = 0; c < row.label_histogram.size(); ++c) {
      std::printf("%s%zu", c == 0 ? "" : " ", row.label_histogram[c]);
    }
    std::printf("]\n");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedsim: federated learning simulation runner"};
  app.require_subcommand(1);

  RunFlags flags;
  auto* run = app.add_subcommand("run", "run an experiment");
  run->add_option("--config", flags.config_path, "JSON config file");
  run->add_option("--mode", flags.mode, "standalone|simulate|server|client|scheduler");
  run->add_option("--metrics-out", flags.metrics_out, "metrics CSV path");
  run->add_option("--partition-file", flags.partition_file, "pre-computed partition JSON");
  run->add_option("--rounds", flags.rounds, "number of FL rounds");
  run->add_option("--num-clients", flags.num_clients, "total client count");
  run->add_option("--sample-fraction", flags.sample_fraction, "per-round client fraction");
  run->add_option("--seed", flags.seed, "root seed");
  run->add_option("--port", flags.port, "server port (cross-process modes)");
  run->add_option("--rank", flags.rank, "own rank (cross-process modes)");
  run->add_option("--world-size", flags.world_size, "server + clients (cross-process modes)");
  run->add_option("--address", flags.address, "server address");

  std::string partition_config, partition_out = "partition.json";
  auto* partition = app.add_subcommand("partition", "emit a partition JSON file");
  partition->add_option("--config", partition_config, "JSON config file")->required();
  partition->add_option("--out", partition_out, "output path");

  std::string inspect_path, inspect_config;
  auto* inspect = app.add_subcommand("inspect", "summarize a partition JSON file");
  inspect->add_option("path", inspect_path, "partition JSON file")->required();
  inspect->add_option("--config", inspect_config, "config supplying the dataset labels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return do_run(flags);
    if (partition->parsed()) return do_partition(partition_config, partition_out);
    if (inspect->parsed()) return do_inspect(inspect_path, inspect_config);
  } catch (const fedsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fedsim::ConnectFailed& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const fedsim::TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const fedsim::ChannelClosed& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const fedsim::RoundAborted& e) {
    std::cerr << "protocol abort: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const fedsim::ProtocolViolation& e) {
    std::cerr << "protocol abort: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const fedsim::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
