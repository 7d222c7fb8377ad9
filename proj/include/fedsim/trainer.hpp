#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/aggregate.hpp"
#include "fedsim/data.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/packaging.hpp"
#include "fedsim/partition.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class ModelKind { Logistic, Mlp1 };

// Architecture of a built-in differentiable model. Logistic is a linear
// softmax classifier (W: d x c, b: c); Mlp1 adds one ReLU hidden layer
// (W1: d x h, b1: h, W2: h x c, b2: c). All weight matrices are row-major.
struct ModelSpec {
  ModelKind kind = ModelKind::Logistic;
  size_t input_dim = 0;
  size_t hidden_dim = 0;  // Mlp1 only
  size_t num_classes = 0;

  size_t param_count() const;
  LayoutDescriptor layout() const;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per layer, biases zero,
// deterministic per seed.
ModelParameters init_model(const ModelSpec& spec, uint64_t seed);

struct ForwardResult {
  double loss = 0.0;
  std::vector<uint32_t> predictions;  // argmax class per sample
};

// Mean softmax cross-entropy over the batch given by `indices` into `ds`.
ForwardResult forward_loss(const ModelSpec& spec, const ModelParameters& params,
                           const Dataset& ds, std::span<const size_t> indices);

// Analytic gradient of the mean loss, same flat layout as params.
std::vector<double> backward(const ModelSpec& spec, const ModelParameters& params,
                             const Dataset& ds, std::span<const size_t> indices);

// Loss and accuracy over the whole dataset.
struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};
EvalResult evaluate(const ModelSpec& spec, const ModelParameters& params, const Dataset& ds);

struct TrainConfig {
  size_t epochs = 5;
  double lr = 0.1;
  size_t batch_size = 32;
  double momentum = 0.0;
  uint64_t seed = 0;
};

// Mini-batch SGD over the client's samples: `epochs` passes, fresh
// Fisher-Yates shuffle per epoch seeded from (seed, client_id, round, epoch),
// last short batch kept. Bitwise deterministic given identical inputs.
ClientUpdate local_train(const ModelSpec& spec, const ModelParameters& params,
                         const Dataset& ds, std::span<const size_t> indices,
                         const TrainConfig& cfg, uint32_t client_id, uint32_t round);

// local_train per selected client in ascending id order, each starting from
// the same input params.
std::vector<ClientUpdate> serial_train(const ModelSpec& spec, const ModelParameters& params,
                                       const Dataset& ds, const PartitionMap& partition,
                                       std::span<const uint32_t> selected,
                                       const TrainConfig& cfg, uint32_t round);

}  // namespace fedsim
