#include "fedsim/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace fedsim {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("config: unknown key '" + where + key + "'");
    }
  }
}

RunMode parse_mode(const std::string& s) {
  if (s == "standalone") return RunMode::Standalone;
  if (s == "simulate") return RunMode::Simulate;
  if (s == "server") return RunMode::Server;
  if (s == "client") return RunMode::Client;
  if (s == "scheduler") return RunMode::SchedulerMode;
  throw ConfigError("config: unknown mode '" + s + "'");
}

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

ModelSpec resolve_model(const ExperimentConfig& cfg, const Dataset& train) {
  ModelSpec spec = cfg.model;
  spec.input_dim = train.d;
  spec.num_classes = train.num_classes;
  return spec;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  reject_unknown_keys(j,
                      {"mode", "model", "dataset", "partition", "rounds", "num_clients",
                       "sample_fraction", "train", "compression", "async", "seed",
                       "metrics_out", "network", "dtype"},
                      "");
  if (j.contains("mode")) cfg.mode = parse_mode(j["mode"].get<std::string>());
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown_keys(m, {"kind", "hidden"}, "model.");
    if (m.contains("kind")) {
      const std::string kind = m["kind"].get<std::string>();
      if (kind == "logistic") {
        cfg.model.kind = ModelKind::Logistic;
      } else if (kind == "mlp1") {
        cfg.model.kind = ModelKind::Mlp1;
      } else {
        throw ConfigError("config: model.kind must be 'logistic' or 'mlp1'");
      }
    }
    if (m.contains("hidden")) cfg.model.hidden_dim = m["hidden"].get<size_t>();
  }
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    reject_unknown_keys(d, {"type", "n", "d", "classes", "separation", "idx_dir"}, "dataset.");
    if (d.contains("type")) cfg.dataset.type = d["type"].get<std::string>();
    if (d.contains("n")) cfg.dataset.n = d["n"].get<size_t>();
    if (d.contains("d")) cfg.dataset.d = d["d"].get<size_t>();
    if (d.contains("classes")) cfg.dataset.classes = d["classes"].get<size_t>();
    if (d.contains("separation")) cfg.dataset.separation = d["separation"].get<double>();
    if (d.contains("idx_dir")) cfg.dataset.idx_dir = d["idx_dir"].get<std::string>();
  }
  if (j.contains("partition")) {
    const auto& p = j["partition"];
    reject_unknown_keys(p, {"scheme", "num_shards", "shards_per_client", "beta", "min_size", "file"},
                        "partition.");
    if (p.contains("scheme")) cfg.partition.scheme = p["scheme"].get<std::string>();
    if (p.contains("num_shards")) cfg.partition.num_shards = p["num_shards"].get<size_t>();
    if (p.contains("shards_per_client")) {
      cfg.partition.shards_per_client = p["shards_per_client"].get<size_t>();
    }
    if (p.contains("beta")) cfg.partition.beta = p["beta"].get<double>();
    if (p.contains("min_size")) cfg.partition.min_size = p["min_size"].get<size_t>();
    if (p.contains("file")) cfg.partition.file = p["file"].get<std::string>();
  }
  if (j.contains("rounds")) cfg.rounds = j["rounds"].get<size_t>();
  if (j.contains("num_clients")) cfg.num_clients = j["num_clients"].get<size_t>();
  if (j.contains("sample_fraction")) cfg.sample_fraction = j["sample_fraction"].get<double>();
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown_keys(t, {"epochs", "lr", "batch_size", "momentum"}, "train.");
    if (t.contains("epochs")) cfg.train.epochs = t["epochs"].get<size_t>();
    if (t.contains("lr")) cfg.train.lr = t["lr"].get<double>();
    if (t.contains("batch_size")) cfg.train.batch_size = t["batch_size"].get<size_t>();
    if (t.contains("momentum")) cfg.train.momentum = t["momentum"].get<double>();
  }
  if (j.contains("compression")) {
    const auto& c = j["compression"];
    reject_unknown_keys(c, {"type", "fraction"}, "compression.");
    if (c.contains("type")) {
      const std::string type = c["type"].get<std::string>();
      if (type == "none") {
        cfg.compression.tag = Compression::None;
      } else if (type == "topk") {
        cfg.compression.tag = Compression::TopK;
      } else if (type == "f16") {
        cfg.compression.tag = Compression::F16;
      } else {
        throw ConfigError("config: compression.type must be none|topk|f16");
      }
    }
    if (c.contains("fraction")) cfg.compression.topk_fraction = c["fraction"].get<double>();
  }
  if (j.contains("async")) {
    const auto& a = j["async"];
    reject_unknown_keys(a, {"enabled", "alpha", "staleness_exponent"}, "async.");
    if (a.contains("enabled")) cfg.async_spec.enabled = a["enabled"].get<bool>();
    if (a.contains("alpha")) cfg.async_spec.alpha = a["alpha"].get<double>();
    if (a.contains("staleness_exponent")) {
      cfg.async_spec.staleness_exponent = a["staleness_exponent"].get<double>();
    }
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (j.contains("metrics_out")) cfg.metrics_out = j["metrics_out"].get<std::string>();
  if (j.contains("network")) {
    const auto& n = j["network"];
    reject_unknown_keys(n,
                        {"address", "port", "world_size", "rank", "down_port", "group_ranks",
                         "scheduler_mode"},
                        "network.");
    if (n.contains("address")) cfg.network.address = n["address"].get<std::string>();
    if (n.contains("port")) cfg.network.port = n["port"].get<uint16_t>();
    if (n.contains("world_size")) cfg.network.world_size = n["world_size"].get<uint32_t>();
    if (n.contains("rank")) cfg.network.rank = n["rank"].get<uint32_t>();
    if (n.contains("down_port")) cfg.network.down_port = n["down_port"].get<uint16_t>();
    if (n.contains("group_ranks")) {
      cfg.network.group_ranks = n["group_ranks"].get<std::vector<uint32_t>>();
    }
    if (n.contains("scheduler_mode")) {
      cfg.network.scheduler_mode = n["scheduler_mode"].get<std::string>();
    }
  }
  if (j.contains("dtype")) {
    const std::string dt = j["dtype"].get<std::string>();
    if (dt == "f32") {
      cfg.dtype = Dtype::F32;
    } else if (dt == "f64") {
      cfg.dtype = Dtype::F64;
    } else {
      throw ConfigError("config: dtype must be f32|f64");
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> problems;
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  require(cfg.train.epochs > 0, "train.epochs must be positive");
  require(cfg.train.lr >= 0.0, "train.lr must be nonnegative");
  require(cfg.train.batch_size > 0, "train.batch_size must be positive");
  require(cfg.sample_fraction > 0.0 && cfg.sample_fraction <= 1.0,
          "sample_fraction must be in (0, 1]");
  require(cfg.num_clients >= 1, "num_clients must be at least 1");
  if (cfg.dataset.type == "synthetic") {
    require(cfg.dataset.classes >= 2, "dataset.classes must be at least 2");
    require(cfg.dataset.n >= cfg.dataset.classes, "dataset.n must be >= classes");
    require(cfg.dataset.d >= 1, "dataset.d must be at least 1");
  } else if (cfg.dataset.type == "idx") {
    require(!cfg.dataset.idx_dir.empty(), "dataset.idx_dir required for idx datasets");
  } else {
    problems.push_back("dataset.type must be synthetic|idx");
  }
  if (cfg.model.kind == ModelKind::Mlp1) {
    require(cfg.model.hidden_dim > 0, "model.hidden required for mlp1");
  }
  if (cfg.compression.tag == Compression::TopK) {
    require(cfg.compression.topk_fraction > 0.0 && cfg.compression.topk_fraction <= 1.0,
            "compression.fraction must be in (0, 1]");
  }
  const bool networked = cfg.mode == RunMode::Server || cfg.mode == RunMode::Client ||
                         cfg.mode == RunMode::SchedulerMode;
  if (networked) {
    require(cfg.network.port != 0, "network.port required for cross-process modes");
    require(cfg.network.world_size >= 2, "network.world_size must be >= 2");
  }
  if (cfg.mode == RunMode::Client) {
    require(cfg.network.rank >= 1, "network.rank must be >= 1 for clients");
  }
  if (cfg.mode == RunMode::SchedulerMode) {
    require(cfg.network.down_port != 0, "network.down_port required for scheduler mode");
    require(!cfg.network.group_ranks.empty(), "network.group_ranks required for scheduler mode");
    require(cfg.network.scheduler_mode == "forward" ||
                cfg.network.scheduler_mode == "middle_aggregate",
            "network.scheduler_mode must be forward|middle_aggregate");
  }
  return problems;
}

std::string metrics_csv(const std::vector<RoundMetrics>& rows) {
  std::string out = "round,global_loss,accuracy,bytes_up,bytes_down,wall_ms\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g,%llu,%llu,%.3f\n", r.round, r.global_loss,
                  r.accuracy, static_cast<unsigned long long>(r.bytes_up),
                  static_cast<unsigned long long>(r.bytes_down), r.wall_ms);
    out += buf;
  }
  return out;
}

void write_metrics(const std::vector<RoundMetrics>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("metrics: cannot open " + path);
  out << metrics_csv(rows);
}

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  if (cfg.dataset.type == "synthetic") {
    // One draw covers train and eval so both share the same class geometry;
    // the last 20% is held out.
    const size_t n_eval = std::max(cfg.dataset.classes, cfg.dataset.n / 5);
    const Dataset full =
        synth_classification(cfg.dataset.n + n_eval, cfg.dataset.d, cfg.dataset.classes,
                             cfg.dataset.separation, cfg.seed);
    auto take = [&](size_t begin, size_t count) {
      Dataset out;
      out.n = count;
      out.d = full.d;
      out.num_classes = full.num_classes;
      out.X.assign(full.X.begin() + begin * full.d, full.X.begin() + (begin + count) * full.d);
      out.y.assign(full.y.begin() + begin, full.y.begin() + begin + count);
      return out;
    };
    data.train = take(0, cfg.dataset.n);
    data.eval = take(cfg.dataset.n, n_eval);
  } else if (cfg.dataset.type == "idx") {
    data.train = load_idx(cfg.dataset.idx_dir + "/train-images-idx3-ubyte",
                          cfg.dataset.idx_dir + "/train-labels-idx1-ubyte");
    data.eval = load_idx(cfg.dataset.idx_dir + "/t10k-images-idx3-ubyte",
                         cfg.dataset.idx_dir + "/t10k-labels-idx1-ubyte");
  } else {
    throw ConfigError("config: dataset.type must be synthetic|idx");
  }

  if (!cfg.partition.file.empty()) {
    data.partition = load_partition(cfg.partition.file);
  } else if (cfg.partition.scheme == "iid") {
    data.partition = iid_partition(data.train.n, cfg.num_clients, cfg.seed);
  } else if (cfg.partition.scheme == "shard") {
    data.partition = shard_partition(data.train.y, cfg.partition.num_shards,
                                     cfg.partition.shards_per_client, cfg.seed);
  } else if (cfg.partition.scheme == "dirichlet") {
    data.partition = dirichlet_label_partition(data.train.y, cfg.num_clients,
                                               cfg.partition.beta, cfg.seed,
                                               cfg.partition.min_size);
  } else if (cfg.partition.scheme == "quantity") {
    data.partition = quantity_skew_partition(data.train.n, cfg.num_clients, cfg.partition.beta,
                                             cfg.seed, cfg.partition.min_size);
  } else {
    throw ConfigError("config: partition.scheme must be iid|shard|dirichlet|quantity");
  }
  return data;
}

RunResult run_standalone(const ExperimentConfig& cfg) {
  const auto problems = validate_config(cfg);
  if (!problems.empty()) throw ConfigError("config: " + problems.front());
  ExperimentData data = prepare_data(cfg);
  const ModelSpec spec = resolve_model(cfg, data.train);

  RunResult result;
  ModelParameters global = init_model(spec, cfg.seed);
  const size_t num_clients = data.partition.num_clients();

  for (uint32_t round = 0; round < cfg.rounds; ++round) {
    Timer timer;
    // Same sampling stream as the sync protocol server.
    Rng rng(cfg.seed, {0x5a3ULL, round});
    const std::vector<uint32_t> sampled = sample_clients(num_clients, cfg.sample_fraction, rng);

    // The round goes through the same packages a networked run would send, so
    // byte counts and codec rounding (dtype, top-k, f16) match exactly.
    uint64_t bytes_down = 0, bytes_up = 0;
    ModelParameters received = global;
    for (uint32_t id : sampled) {
      const Package down =
          make_model_package(kServerRank, client_rank(id), round, global.values, cfg.dtype);
      bytes_down += encoded_size(down);
      received.values = parse_model(down);
    }
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = cfg.seed;
    std::vector<ClientUpdate> updates =
        serial_train(spec, received, data.train, data.partition, sampled, train_cfg, round);
    for (auto& u : updates) {
      const Package up =
          make_update_package(client_rank(u.client_id), kServerRank, round, u.params.values,
                              u.n_k, cfg.dtype, cfg.compression);
      bytes_up += encoded_size(up);
      u.params.values = parse_update(up).values;
    }
    global = fedavg(updates);

    const EvalResult eval = evaluate(spec, global, data.eval);
    result.trajectory.push_back(global.values);
    result.rows.push_back(
        {round, eval.loss, eval.accuracy, bytes_up, bytes_down, timer.ms()});
  }
  result.final_global = global;
  write_metrics(result.rows, cfg.metrics_out);
  return result;
}

namespace {

RunResult run_simulate_sync(const ExperimentConfig& cfg, ExperimentData& data,
                            const ModelSpec& spec) {
  const size_t num_clients = data.partition.num_clients();
  std::vector<uint32_t> ranks = {kServerRank};
  for (size_t i = 0; i < num_clients; ++i) ranks.push_back(client_rank(uint32_t(i)));
  SimNetwork net(ranks);

  SyncServerContext server;
  server.spec = spec;
  server.handler.global = init_model(spec, cfg.seed);
  server.num_clients = num_clients;
  server.sample_fraction = cfg.sample_fraction;
  server.seed = cfg.seed;
  server.dtype = cfg.dtype;
  server.compression = cfg.compression;

  std::vector<SyncClientContext> clients(num_clients);
  for (size_t i = 0; i < num_clients; ++i) {
    auto& c = clients[i];
    c.spec = spec;
    c.dataset = &data.train;
    c.indices = data.partition.assignments.at(uint32_t(i));
    c.train = cfg.train;
    c.train.seed = cfg.seed;
    c.client_id = uint32_t(i);
    c.dtype = cfg.dtype;
    c.compression = cfg.compression;
  }

  RunResult result;
  for (uint32_t round = 0; round < cfg.rounds; ++round) {
    Timer timer;
    const uint64_t down0 = server.bytes_down, up0 = server.bytes_up;
    sync_server_broadcast(server, net.endpoint(kServerRank));
    for (uint32_t id : server.sampled) {
      Channel& ch = net.endpoint(client_rank(id));
      sync_client_handle(clients[id], ch, ch.recv());
    }
    sync_server_collect(server, net.endpoint(kServerRank));

    const EvalResult eval = evaluate(spec, server.handler.global, data.eval);
    result.trajectory.push_back(server.handler.global.values);
    result.rows.push_back({round, eval.loss, eval.accuracy, server.bytes_up - up0,
                           server.bytes_down - down0, timer.ms()});
  }
  sync_server_shutdown(server, net.endpoint(kServerRank));
  for (size_t i = 0; i < num_clients; ++i) {
    Channel& ch = net.endpoint(client_rank(uint32_t(i)));
    sync_client_handle(clients[i], ch, ch.recv());
  }
  result.final_global = server.handler.global;
  write_metrics(result.rows, cfg.metrics_out);
  return result;
}

// Scripted async schedule: one server update per row, clients take turns in
// round-robin order. Each turn is request -> train -> upload -> ack.
RunResult run_simulate_async(const ExperimentConfig& cfg, ExperimentData& data,
                             const ModelSpec& spec) {
  const size_t num_clients = data.partition.num_clients();
  std::vector<uint32_t> ranks = {kServerRank};
  for (size_t i = 0; i < num_clients; ++i) ranks.push_back(client_rank(uint32_t(i)));
  SimNetwork net(ranks);

  AsyncServerState server;
  server.spec = spec;
  server.global = init_model(spec, cfg.seed);
  server.alpha = cfg.async_spec.alpha;
  server.staleness_exponent = cfg.async_spec.staleness_exponent;
  server.dtype = cfg.dtype;

  RunResult result;
  Channel& server_ch = net.endpoint(kServerRank);
  for (uint32_t step = 0; step < cfg.rounds; ++step) {
    Timer timer;
    uint64_t bytes_up = 0, bytes_down = 0;
    const uint32_t id = step % uint32_t(num_clients);
    Channel& ch = net.endpoint(client_rank(id));

    Package request =
        make_control_package(MessageCode::ParameterRequest, client_rank(id), kServerRank, 0);
    bytes_up += encoded_size(request);
    ch.send(request);
    for (const Package& reply : async_server_handle(server, server_ch.recv())) {
      bytes_down += encoded_size(reply);
      server_ch.send(reply);
    }
    const Package model_pkg = ch.recv();
    ModelParameters global;
    global.values = parse_model(model_pkg);
    global.layout = spec.layout();
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = cfg.seed;
    const ClientUpdate update =
        local_train(spec, global, data.train, data.partition.assignments.at(id), train_cfg, id,
                    model_pkg.round);
    const Package upload =
        make_update_package(client_rank(id), kServerRank, model_pkg.round, update.params.values,
                            update.n_k, cfg.dtype, cfg.compression);
    bytes_up += encoded_size(upload);
    ch.send(upload);
    for (const Package& reply : async_server_handle(server, server_ch.recv())) {
      bytes_down += encoded_size(reply);
      server_ch.send(reply);
    }
    ch.recv();  // ack

    const EvalResult eval = evaluate(spec, server.global, data.eval);
    result.trajectory.push_back(server.global.values);
    result.rows.push_back({step, eval.loss, eval.accuracy, bytes_up, bytes_down, timer.ms()});
  }
  result.final_global = server.global;
  write_metrics(result.rows, cfg.metrics_out);
  return result;
}

}  // namespace

RunResult run_simulate(const ExperimentConfig& cfg) {
  const auto problems = validate_config(cfg);
  if (!problems.empty()) throw ConfigError("config: " + problems.front());
  ExperimentData data = prepare_data(cfg);
  const ModelSpec spec = resolve_model(cfg, data.train);
  return cfg.async_spec.enabled ? run_simulate_async(cfg, data, spec)
                                : run_simulate_sync(cfg, data, spec);
}

RunResult run_server(const ExperimentConfig& cfg) {
  const auto problems = validate_config(cfg);
  if (!problems.empty()) throw ConfigError("config: " + problems.front());
  ExperimentData data = prepare_data(cfg);
  const ModelSpec spec = resolve_model(cfg, data.train);

  TcpConfig tcp;
  tcp.host = cfg.network.address;
  tcp.port = cfg.network.port;
  tcp.world_size = cfg.network.world_size;
  tcp.rank = 0;
  auto channel = tcp_serve(tcp);

  RunResult result;
  const size_t num_clients = cfg.network.world_size - 1;
  if (cfg.async_spec.enabled) {
    AsyncServerState server;
    server.spec = spec;
    server.global = init_model(spec, cfg.seed);
    server.alpha = cfg.async_spec.alpha;
    server.staleness_exponent = cfg.async_spec.staleness_exponent;
    server.dtype = cfg.dtype;
    while (server.updates_applied < cfg.rounds) {
      Timer timer;
      const uint64_t before = server.updates_applied;
      const Package pkg = channel->recv();
      uint64_t bytes_up = encoded_size(pkg);
      uint64_t bytes_down = 0;
      for (const Package& reply : async_server_handle(server, pkg)) {
        bytes_down += encoded_size(reply);
        channel->send(reply);
      }
      if (server.updates_applied == before) continue;  // request, not an update
      const EvalResult eval = evaluate(spec, server.global, data.eval);
      result.trajectory.push_back(server.global.values);
      result.rows.push_back({uint32_t(server.updates_applied - 1), eval.loss, eval.accuracy,
                             bytes_up, bytes_down, timer.ms()});
    }
    for (size_t id = 0; id < num_clients; ++id) {
      channel->send(make_control_package(MessageCode::Exit, kServerRank,
                                         client_rank(uint32_t(id)), server.round));
    }
    result.final_global = server.global;
  } else {
    SyncServerContext server;
    server.spec = spec;
    server.handler.global = init_model(spec, cfg.seed);
    server.num_clients = num_clients;
    server.sample_fraction = cfg.sample_fraction;
    server.seed = cfg.seed;
    server.dtype = cfg.dtype;
    server.compression = cfg.compression;
    for (uint32_t round = 0; round < cfg.rounds; ++round) {
      Timer timer;
      const uint64_t down0 = server.bytes_down, up0 = server.bytes_up;
      sync_server_round(server, *channel);
      const EvalResult eval = evaluate(spec, server.handler.global, data.eval);
      result.trajectory.push_back(server.handler.global.values);
      result.rows.push_back({round, eval.loss, eval.accuracy, server.bytes_up - up0,
                             server.bytes_down - down0, timer.ms()});
    }
    sync_server_shutdown(server, *channel);
    result.final_global = server.handler.global;
  }
  write_metrics(result.rows, cfg.metrics_out);
  return result;
}

void run_client(const ExperimentConfig& cfg) {
  const auto problems = validate_config(cfg);
  if (!problems.empty()) throw ConfigError("config: " + problems.front());
  ExperimentData data = prepare_data(cfg);
  const ModelSpec spec = resolve_model(cfg, data.train);

  TcpConfig tcp;
  tcp.host = cfg.network.address;
  tcp.port = cfg.network.port;
  tcp.world_size = cfg.network.world_size;
  tcp.rank = cfg.network.rank;
  auto channel = tcp_connect(tcp);

  const uint32_t client_id = client_id_of(cfg.network.rank);
  SyncClientContext ctx;
  ctx.spec = spec;
  ctx.dataset = &data.train;
  ctx.indices = data.partition.assignments.at(client_id);
  ctx.train = cfg.train;
  ctx.train.seed = cfg.seed;
  ctx.client_id = client_id;
  ctx.dtype = cfg.dtype;
  ctx.compression = cfg.compression;

  if (!cfg.async_spec.enabled) {
    sync_client_loop(ctx, *channel);
    return;
  }
  // Async: request-driven loop until the server says Exit.
  try {
    channel->send(make_control_package(MessageCode::ParameterRequest,
                                       cfg.network.rank, kServerRank, 0));
    for (;;) {
      const Package pkg = channel->recv();
      if (pkg.message_code == MessageCode::Exit) return;
      if (pkg.message_code == MessageCode::ParameterUpdate) {
        ModelParameters global;
        global.values = parse_model(pkg);
        global.layout = spec.layout();
        const ClientUpdate update = local_train(spec, global, data.train, ctx.indices, ctx.train,
                                                client_id, pkg.round);
        channel->send(make_update_package(cfg.network.rank, kServerRank, pkg.round,
                                          update.params.values, update.n_k, cfg.dtype,
                                          cfg.compression));
      } else if (pkg.message_code == MessageCode::Register) {
        channel->send(make_control_package(MessageCode::ParameterRequest, cfg.network.rank,
                                           kServerRank, 0));
      }
    }
  } catch (const ChannelClosed&) {
    // Server finished and hung up; treated as a clean exit.
  }
}

void run_scheduler(const ExperimentConfig& cfg) {
  const auto problems = validate_config(cfg);
  if (!problems.empty()) throw ConfigError("config: " + problems.front());

  TcpConfig down_cfg;
  down_cfg.port = cfg.network.down_port;
  down_cfg.world_size = uint32_t(cfg.network.group_ranks.size()) + 1;
  down_cfg.rank = 0;
  auto down = tcp_serve(down_cfg);

  TcpConfig up_cfg;
  up_cfg.host = cfg.network.address;
  up_cfg.port = cfg.network.port;
  up_cfg.world_size = cfg.network.world_size;

  if (cfg.network.scheduler_mode == "middle_aggregate") {
    up_cfg.rank = cfg.network.rank;
    auto up = tcp_connect(up_cfg);
    SchedulerConfig sched;
    sched.upstream_rank = cfg.network.rank;
    sched.mode = SchedulerMode::MiddleAggregate;
    for (uint32_t rank : cfg.network.group_ranks) {
      sched.up_to_down[rank] = rank;
      sched.down_to_up[rank] = rank;
    }
    sched.dtype = cfg.dtype;
    sched.compression = cfg.compression;
    Scheduler scheduler(sched);
    scheduler.run(*up, *down);
    return;
  }

  // Forward mode: the server routes by rank, so the scheduler holds one
  // upstream connection per fronted client rank and relays verbatim.
  std::map<uint32_t, std::unique_ptr<Channel>> ups;
  for (uint32_t rank : cfg.network.group_ranks) {
    TcpConfig per_rank = up_cfg;
    per_rank.rank = rank;
    ups[rank] = tcp_connect(per_rank);
  }
  std::vector<std::thread> pumps;
  for (auto& [rank, up] : ups) {
    pumps.emplace_back([&, rank = rank] {
      try {
        for (;;) {
          const Package pkg = ups[rank]->recv();
          down->send(pkg);
          if (pkg.message_code == MessageCode::Exit) return;
        }
      } catch (const ChannelClosed&) {
      } catch (const TransportError&) {
      }
    });
  }
  try {
    for (;;) {
      const Package pkg = down->recv();
      auto it = ups.find(pkg.sender_rank);
      if (it == ups.end()) throw RoutingError("scheduler: no upstream mapping for rank");
      it->second->send(pkg);
    }
  } catch (const ChannelClosed&) {
    // Group clients exited; relay work is done.
  }
  for (auto& t : pumps) t.join();
}

}  // namespace fedsim
