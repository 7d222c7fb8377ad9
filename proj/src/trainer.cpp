#include "fedsim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedsim {

namespace {

// Writes softmax cross-entropy gradient dL/dz = softmax(z) - onehot(y) into
// `grad_z` and returns the sample's loss. Log-sum-exp stabilized.
double softmax_xent(std::span<const double> logits, uint32_t label,
                    std::span<double> grad_z, uint32_t* prediction) {
  const size_t c = logits.size();
  double max_z = logits[0];
  size_t argmax = 0;
  for (size_t k = 1; k < c; ++k) {
    if (logits[k] > max_z) {
      max_z = logits[k];
      argmax = k;
    }
  }
  double sum = 0.0;
  for (size_t k = 0; k < c; ++k) sum += std::exp(logits[k] - max_z);
  for (size_t k = 0; k < c; ++k) grad_z[k] = std::exp(logits[k] - max_z) / sum;
  const double loss = std::log(sum) - (logits[label] - max_z);
  grad_z[label] -= 1.0;
  if (prediction) *prediction = static_cast<uint32_t>(argmax);
  return loss;
}

void check_batch(const ModelSpec& spec, const ModelParameters& params,
                 const Dataset& ds, std::span<const size_t> indices) {
  if (ds.d != spec.input_dim) throw ShapeError("trainer: dataset dim does not match model");
  if (params.values.size() != spec.param_count()) {
    throw ShapeError("trainer: parameter count does not match model spec");
  }
  for (size_t idx : indices) {
    if (idx >= ds.n) throw ShapeError("trainer: batch index out of range");
    if (ds.y[idx] >= spec.num_classes) throw ShapeError("trainer: label out of range");
  }
}

// Shared forward/backward walk. When `grad` is null only loss/predictions are
// computed.
double run_batch(const ModelSpec& spec, const ModelParameters& params,
                 const Dataset& ds, std::span<const size_t> indices,
                 std::vector<double>* grad, std::vector<uint32_t>* predictions) {
  check_batch(spec, params, ds, indices);
  const size_t d = spec.input_dim;
  const size_t h = spec.hidden_dim;
  const size_t c = spec.num_classes;
  const double inv_batch = 1.0 / static_cast<double>(indices.size());
  const double* w = params.values.data();
  double* g = nullptr;
  if (grad) {
    grad->assign(params.values.size(), 0.0);
    g = grad->data();
  }
  if (predictions) predictions->resize(indices.size());

  std::vector<double> logits(c), grad_z(c);
  std::vector<double> hidden, grad_hidden;
  if (spec.kind == ModelKind::Mlp1) {
    hidden.resize(h);
    grad_hidden.resize(h);
  }

  double loss = 0.0;
  for (size_t bi = 0; bi < indices.size(); ++bi) {
    const double* x = ds.row(indices[bi]);
    const uint32_t label = ds.y[indices[bi]];
    uint32_t pred = 0;

    if (spec.kind == ModelKind::Logistic) {
      const double* W = w;            // d x c
      const double* b = w + d * c;    // c
      for (size_t k = 0; k < c; ++k) logits[k] = b[k];
      for (size_t j = 0; j < d; ++j) {
        const double xj = x[j];
        if (xj == 0.0) continue;
        for (size_t k = 0; k < c; ++k) logits[k] += xj * W[j * c + k];
      }
      loss += softmax_xent(logits, label, grad_z, &pred);
      if (g) {
        double* gW = g;
        double* gb = g + d * c;
        for (size_t k = 0; k < c; ++k) gb[k] += inv_batch * grad_z[k];
        for (size_t j = 0; j < d; ++j) {
          const double xj = inv_batch * x[j];
          if (xj == 0.0) continue;
          for (size_t k = 0; k < c; ++k) gW[j * c + k] += xj * grad_z[k];
        }
      }
    } else {
      const double* W1 = w;                        // d x h
      const double* b1 = w + d * h;                // h
      const double* W2 = b1 + h;                   // h x c
      const double* b2 = W2 + h * c;               // c
      for (size_t m = 0; m < h; ++m) hidden[m] = b1[m];
      for (size_t j = 0; j < d; ++j) {
        const double xj = x[j];
        if (xj == 0.0) continue;
        for (size_t m = 0; m < h; ++m) hidden[m] += xj * W1[j * h + m];
      }
      for (size_t m = 0; m < h; ++m) hidden[m] = std::max(hidden[m], 0.0);
      for (size_t k = 0; k < c; ++k) logits[k] = b2[k];
      for (size_t m = 0; m < h; ++m) {
        const double am = hidden[m];
        if (am == 0.0) continue;
        for (size_t k = 0; k < c; ++k) logits[k] += am * W2[m * c + k];
      }
      loss += softmax_xent(logits, label, grad_z, &pred);
      if (g) {
        double* gW1 = g;
        double* gb1 = g + d * h;
        double* gW2 = gb1 + h;
        double* gb2 = gW2 + h * c;
        for (size_t k = 0; k < c; ++k) gb2[k] += inv_batch * grad_z[k];
        for (size_t m = 0; m < h; ++m) {
          double gh = 0.0;
          for (size_t k = 0; k < c; ++k) {
            gW2[m * c + k] += inv_batch * hidden[m] * grad_z[k];
            gh += W2[m * c + k] * grad_z[k];
          }
          grad_hidden[m] = hidden[m] > 0.0 ? gh : 0.0;
        }
        for (size_t m = 0; m < h; ++m) gb1[m] += inv_batch * grad_hidden[m];
        for (size_t j = 0; j < d; ++j) {
          const double xj = inv_batch * x[j];
          if (xj == 0.0) continue;
          for (size_t m = 0; m < h; ++m) gW1[j * h + m] += xj * grad_hidden[m];
        }
      }
    }
    if (predictions) (*predictions)[bi] = pred;
  }
  return loss * inv_batch;
}

}  // namespace

size_t ModelSpec::param_count() const {
  const size_t d = input_dim, h = hidden_dim, c = num_classes;
  return kind == ModelKind::Logistic ? d * c + c : d * h + h + h * c + c;
}

LayoutDescriptor ModelSpec::layout() const {
  LayoutDescriptor l;
  l.dtype = Dtype::F64;
  const uint64_t d = input_dim, h = hidden_dim, c = num_classes;
  if (kind == ModelKind::Logistic) {
    l.shapes = {{d, c}, {c}};
  } else {
    l.shapes = {{d, h}, {h}, {h, c}, {c}};
  }
  return l;
}

ModelParameters init_model(const ModelSpec& spec, uint64_t seed) {
  Rng rng(seed, {0x171ULL});
  ModelParameters p;
  p.layout = spec.layout();
  p.values.resize(spec.param_count());
  const size_t d = spec.input_dim, h = spec.hidden_dim, c = spec.num_classes;
  auto fill_layer = [&](double* w, size_t count, size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t i = 0; i < count; ++i) w[i] = rng.uniform(-bound, bound);
  };
  double* w = p.values.data();
  if (spec.kind == ModelKind::Logistic) {
    fill_layer(w, d * c, d);  // biases stay zero
  } else {
    fill_layer(w, d * h, d);
    fill_layer(w + d * h + h, h * c, h);
  }
  return p;
}

ForwardResult forward_loss(const ModelSpec& spec, const ModelParameters& params,
                           const Dataset& ds, std::span<const size_t> indices) {
  if (indices.empty()) throw ShapeError("forward_loss: empty batch");
  ForwardResult r;
  r.loss = run_batch(spec, params, ds, indices, nullptr, &r.predictions);
  return r;
}

std::vector<double> backward(const ModelSpec& spec, const ModelParameters& params,
                             const Dataset& ds, std::span<const size_t> indices) {
  if (indices.empty()) throw ShapeError("backward: empty batch");
  std::vector<double> grad;
  run_batch(spec, params, ds, indices, &grad, nullptr);
  return grad;
}

EvalResult evaluate(const ModelSpec& spec, const ModelParameters& params, const Dataset& ds) {
  std::vector<size_t> all(ds.n);
  std::iota(all.begin(), all.end(), size_t{0});
  ForwardResult r = forward_loss(spec, params, ds, all);
  size_t correct = 0;
  for (size_t i = 0; i < ds.n; ++i) {
    if (r.predictions[i] == ds.y[i]) ++correct;
  }
  return {r.loss, static_cast<double>(correct) / static_cast<double>(ds.n)};
}

ClientUpdate local_train(const ModelSpec& spec, const ModelParameters& params,
                         const Dataset& ds, std::span<const size_t> indices,
                         const TrainConfig& cfg, uint32_t client_id, uint32_t round) {
  if (indices.empty()) throw EmptyClient("local_train: client has no samples");
  ClientUpdate update;
  update.client_id = client_id;
  update.n_k = indices.size();
  update.round_trained = round;
  update.params = params;

  std::vector<double> grad;
  std::vector<double> velocity;
  if (cfg.momentum != 0.0) velocity.assign(params.values.size(), 0.0);
  std::vector<size_t> order(indices.begin(), indices.end());

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(cfg.seed, {0x7eaULL, client_id, round, epoch});
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(start + cfg.batch_size, order.size());
      run_batch(spec, update.params, ds,
                std::span<const size_t>(order.data() + start, end - start), &grad, nullptr);
      if (cfg.momentum != 0.0) {
        for (size_t j = 0; j < grad.size(); ++j) {
          velocity[j] = cfg.momentum * velocity[j] + grad[j];
          update.params.values[j] -= cfg.lr * velocity[j];
        }
      } else {
        for (size_t j = 0; j < grad.size(); ++j) {
          update.params.values[j] -= cfg.lr * grad[j];
        }
      }
    }
  }
  return update;
}

std::vector<ClientUpdate> serial_train(const ModelSpec& spec, const ModelParameters& params,
                                       const Dataset& ds, const PartitionMap& partition,
                                       std::span<const uint32_t> selected,
                                       const TrainConfig& cfg, uint32_t round) {
  std::vector<uint32_t> order(selected.begin(), selected.end());
  std::sort(order.begin(), order.end());
  std::vector<ClientUpdate> updates;
  updates.reserve(order.size());
  for (uint32_t id : order) {
    auto it = partition.assignments.find(id);
    if (it == partition.assignments.end()) {
      throw UnknownClient("serial_train: client id not in partition");
    }
    updates.push_back(local_train(spec, params, ds, it->second, cfg, id, round));
  }
  return updates;
}

}  // namespace fedsim
