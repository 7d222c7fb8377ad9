// Python bindings for the core simulation operations.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedsim/aggregate.hpp"
#include "fedsim/compress.hpp"
#include "fedsim/data.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/packaging.hpp"
#include "fedsim/partition.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/trainer.hpp"

namespace py = pybind11;
using namespace fedsim;

namespace {

py::dict dataset_to_dict(const Dataset& ds) {
  py::dict out;
  out["n"] = ds.n;
  out["d"] = ds.d;
  out["num_classes"] = ds.num_classes;
  out["X"] = ds.X;
  out["y"] = ds.y;
  return out;
}

py::dict partition_to_dict(const PartitionMap& map) {
  py::dict out;
  for (const auto& [client, idx] : map.assignments) out[py::int_(client)] = idx;
  return out;
}

ClientUpdate update_from_tuple(const std::pair<std::vector<double>, uint64_t>& u,
                               uint32_t client_id, uint32_t round_trained) {
  ClientUpdate out;
  out.client_id = client_id;
  out.n_k = u.second;
  out.round_trained = round_trained;
  out.params.values = u.first;
  out.params.layout.shapes = {{u.first.size()}};
  return out;
}

py::dict result_to_dict(const RunResult& result) {
  py::dict out;
  py::list rows;
  for (const auto& r : result.rows) {
    py::dict row;
    row["round"] = r.round;
    row["global_loss"] = r.global_loss;
    row["accuracy"] = r.accuracy;
    row["bytes_up"] = r.bytes_up;
    row["bytes_down"] = r.bytes_down;
    row["wall_ms"] = r.wall_ms;
    rows.append(row);
  }
  out["rows"] = rows;
  out["trajectory"] = result.trajectory;
  out["final_global"] = result.final_global.values;
  out["csv"] = metrics_csv(result.rows);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "federated learning simulation core";

  // --- data and partitions ---------------------------------------------------
  m.def(
      "synth_classification",
      [](size_t n, size_t d, size_t classes, double separation, uint64_t seed) {
        return dataset_to_dict(synth_classification(n, d, classes, separation, seed));
      },
      py::arg("n"), py::arg("d"), py::arg("classes"), py::arg("separation") = 4.0,
      py::arg("seed") = 0);
  m.def(
      "iid_partition",
      [](size_t n, size_t clients, uint64_t seed) {
        return partition_to_dict(iid_partition(n, clients, seed));
      },
      py::arg("n"), py::arg("num_clients"), py::arg("seed") = 0);
  m.def(
      "shard_partition",
      [](const std::vector<uint32_t>& labels, size_t num_shards, size_t shards_per_client,
         uint64_t seed) {
        return partition_to_dict(shard_partition(labels, num_shards, shards_per_client, seed));
      },
      py::arg("labels"), py::arg("num_shards"), py::arg("shards_per_client"),
      py::arg("seed") = 0);
  m.def(
      "dirichlet_partition",
      [](const std::vector<uint32_t>& labels, size_t clients, double beta, uint64_t seed,
         size_t min_size) {
        return partition_to_dict(
            dirichlet_label_partition(labels, clients, beta, seed, min_size));
      },
      py::arg("labels"), py::arg("num_clients"), py::arg("beta"), py::arg("seed") = 0,
      py::arg("min_size") = 1);
  m.def(
      "quantity_partition",
      [](size_t n, size_t clients, double beta, uint64_t seed, size_t min_size) {
        return partition_to_dict(quantity_skew_partition(n, clients, beta, seed, min_size));
      },
      py::arg("n"), py::arg("num_clients"), py::arg("beta"), py::arg("seed") = 0,
      py::arg("min_size") = 1);

  // --- aggregation -----------------------------------------------------------
  m.def(
      "fedavg",
      [](const std::vector<std::pair<std::vector<double>, uint64_t>>& updates) {
        std::vector<ClientUpdate> parsed;
        for (size_t i = 0; i < updates.size(); ++i) {
          parsed.push_back(update_from_tuple(updates[i], uint32_t(i), 0));
        }
        return fedavg(parsed).values;
      },
      py::arg("updates"), "weighted average of (values, n_k) pairs");
  m.def(
      "async_mix",
      [](const std::vector<double>& global_values, const std::vector<double>& incoming,
         double alpha, uint32_t server_round, uint32_t round_trained,
         double staleness_exponent) {
        ModelParameters g;
        g.values = global_values;
        g.layout.shapes = {{global_values.size()}};
        return async_mix(g, update_from_tuple({incoming, 1}, 0, round_trained), alpha,
                         server_round, staleness_exponent)
            .values;
      },
      py::arg("global_values"), py::arg("incoming"), py::arg("alpha"),
      py::arg("server_round"), py::arg("round_trained") = 0,
      py::arg("staleness_exponent") = 0.0);
  m.def(
      "sample_clients",
      [](size_t total, double fraction, uint64_t seed) {
        Rng rng(seed);
        return sample_clients(total, fraction, rng);
      },
      py::arg("total_clients"), py::arg("fraction"), py::arg("seed") = 0);

  // --- compression -----------------------------------------------------------
  m.def(
      "topk_roundtrip",
      [](const std::vector<double>& values, size_t k) {
        return topk_decode(topk_encode(values, k));
      },
      py::arg("values"), py::arg("k"), "project onto the k largest-magnitude entries");
  m.def(
      "f16_roundtrip",
      [](const std::vector<double>& values) { return dequantize_f16(quantize_f16(values)); },
      py::arg("values"));
  m.def(
      "topk_ratio",
      [](size_t n, size_t k) {
        const auto r = measured_ratio_topk(n, k);
        return py::make_tuple(r.dense_bytes, r.encoded_bytes, r.ratio());
      },
      py::arg("n"), py::arg("k"), "(dense_bytes, encoded_bytes, ratio)");
  m.def(
      "f16_ratio",
      [](size_t n) {
        const auto r = measured_ratio_f16(n);
        return py::make_tuple(r.dense_bytes, r.encoded_bytes, r.ratio());
      },
      py::arg("n"));
  m.def("topk_threshold_for_100x", &topk_threshold_for_100x, py::arg("n"),
        "largest k whose measured top-k ratio is still >= 100");

  // --- wire format -----------------------------------------------------------
  m.def(
      "encode_package",
      [](uint32_t sender, uint32_t receiver, uint32_t round, int message_code,
         const std::vector<uint64_t>& slices, const std::vector<uint8_t>& payload) {
        Package p;
        p.sender_rank = sender;
        p.receiver_rank = receiver;
        p.round = round;
        p.message_code = MessageCode(message_code);
        p.slices = slices;
        p.payload = payload;
        return py::bytes(reinterpret_cast<const char*>(encode_package(p).data()),
                         encoded_size(p));
      },
      py::arg("sender"), py::arg("receiver"), py::arg("round"), py::arg("message_code"),
      py::arg("slices") = std::vector<uint64_t>{},
      py::arg("payload") = std::vector<uint8_t>{});
  m.def(
      "decode_package",
      [](const py::bytes& raw) {
        const std::string buf = raw;
        const Package p =
            decode_package(reinterpret_cast<const uint8_t*>(buf.data()), buf.size());
        py::dict out;
        out["sender"] = p.sender_rank;
        out["receiver"] = p.receiver_rank;
        out["round"] = p.round;
        out["message_code"] = int(p.message_code);
        out["slices"] = p.slices;
        out["payload"] = py::bytes(reinterpret_cast<const char*>(p.payload.data()),
                                   p.payload.size());
        return out;
      },
      py::arg("raw"));

  // --- experiments -----------------------------------------------------------
  m.def(
      "run_standalone",
      [](const std::string& config_json) {
        return result_to_dict(run_standalone(parse_config(config_json)));
      },
      py::arg("config_json"));
  m.def(
      "run_simulate",
      [](const std::string& config_json) {
        return result_to_dict(run_simulate(parse_config(config_json)));
      },
      py::arg("config_json"));
  m.def(
      "validate_config",
      [](const std::string& config_json) { return validate_config(parse_config(config_json)); },
      py::arg("config_json"), "list of problems; empty when the config is valid");

  py::register_exception<Error>(m, "FedsimError");
}
