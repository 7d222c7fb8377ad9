#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/trainer.hpp"

using namespace fedsim;

namespace {

Dataset tiny_dataset(size_t n, size_t d, size_t classes, uint64_t seed) {
  return synth_classification(n, d, classes, 3.0, seed);
}

std::vector<size_t> all_indices(const Dataset& ds) {
  std::vector<size_t> idx(ds.n);
  std::iota(idx.begin(), idx.end(), size_t(0));
  return idx;
}

// Independent scalar re-implementation of the logistic forward pass:
// logits = x W + b, mean softmax cross-entropy with log-sum-exp.
double logistic_loss_oracle(const ModelSpec& spec, const ModelParameters& p,
                            const Dataset& ds, const std::vector<size_t>& idx) {
  const size_t d = spec.input_dim, c = spec.num_classes;
  const double* W = p.values.data();
  const double* b = p.values.data() + d * c;
  double total = 0.0;
  for (size_t i : idx) {
    auto x = ds.row(i);
    std::vector<double> z(c);
    for (size_t j = 0; j < c; ++j) {
      double s = b[j];
      for (size_t f = 0; f < d; ++f) s += x[f] * W[f * c + j];
      z[j] = s;
    }
    const double m = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - m);
    lse = m + std::log(lse);
    total += lse - z[ds.y[i]];
  }
  return total / double(idx.size());
}

// Central finite difference per coordinate against the analytic gradient.
void check_gradient(const ModelSpec& spec, const ModelParameters& params,
                    const Dataset& ds, const std::vector<size_t>& idx) {
  const auto grad = backward(spec, params, ds, idx);
  REQUIRE(grad.size() == params.values.size());
  const double h = 1e-5;
  for (size_t j = 0; j < params.values.size(); ++j) {
    ModelParameters plus = params, minus = params;
    plus.values[j] += h;
    minus.values[j] -= h;
    const double fd = (forward_loss(spec, plus, ds, idx).loss -
                       forward_loss(spec, minus, ds, idx).loss) /
                      (2 * h);
    const double scale = std::max({1.0, std::fabs(fd), std::fabs(grad[j])});
    CHECK(std::fabs(grad[j] - fd) <= 1e-5 * scale);
  }
}

}  // namespace

TEST_CASE("model specs: parameter counts and layouts") {
  ModelSpec logistic{ModelKind::Logistic, 10, 0, 4};
  CHECK(logistic.param_count() == 10 * 4 + 4);
  CHECK(logistic.layout().total_elements() == logistic.param_count());

  ModelSpec mlp{ModelKind::Mlp1, 10, 16, 4};
  CHECK(mlp.param_count() == 10 * 16 + 16 + 16 * 4 + 4);
  CHECK(mlp.layout().total_elements() == mlp.param_count());
}

TEST_CASE("init_model: bias zero, weights bounded, deterministic") {
  ModelSpec spec{ModelKind::Mlp1, 6, 8, 3};
  const auto a = init_model(spec, 42);
  const auto b = init_model(spec, 42);
  const auto c = init_model(spec, 43);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);

  // W1 entries within +-1/sqrt(6); b1 zero; W2 within +-1/sqrt(8); b2 zero.
  const size_t w1 = 6 * 8;
  for (size_t j = 0; j < w1; ++j) CHECK(std::fabs(a.values[j]) <= 1.0 / std::sqrt(6.0));
  for (size_t j = w1; j < w1 + 8; ++j) CHECK(a.values[j] == 0.0);
  for (size_t j = w1 + 8; j < w1 + 8 + 8 * 3; ++j) {
    CHECK(std::fabs(a.values[j]) <= 1.0 / std::sqrt(8.0));
  }
  for (size_t j = a.values.size() - 3; j < a.values.size(); ++j) CHECK(a.values[j] == 0.0);
}

TEST_CASE("forward_loss: zero parameters give ln(num_classes)") {
  for (size_t classes : {2, 3, 7}) {
    ModelSpec spec{ModelKind::Logistic, 5, 0, classes};
    ModelParameters zero;
    zero.layout = spec.layout();
    zero.values.assign(spec.param_count(), 0.0);
    const auto ds = tiny_dataset(40, 5, classes, 11);
    const auto idx = all_indices(ds);
    CHECK(forward_loss(spec, zero, ds, idx).loss ==
          doctest::Approx(std::log(double(classes))).epsilon(1e-12));
  }
}

TEST_CASE("forward_loss matches a scalar re-implementation") {
  ModelSpec spec{ModelKind::Logistic, 7, 0, 4};
  const auto ds = tiny_dataset(60, 7, 4, 21);
  const auto params = init_model(spec, 3);
  const auto idx = all_indices(ds);
  const double oracle = logistic_loss_oracle(spec, params, ds, idx);
  CHECK(std::fabs(forward_loss(spec, params, ds, idx).loss - oracle) <= 1e-12);
}

TEST_CASE("backward matches central finite differences") {
  SUBCASE("logistic") {
    ModelSpec spec{ModelKind::Logistic, 4, 0, 3};
    const auto ds = tiny_dataset(25, 4, 3, 7);
    check_gradient(spec, init_model(spec, 1), ds, all_indices(ds));
  }
  SUBCASE("mlp1") {
    ModelSpec spec{ModelKind::Mlp1, 4, 6, 3};
    const auto ds = tiny_dataset(25, 4, 3, 8);
    check_gradient(spec, init_model(spec, 2), ds, all_indices(ds));
  }
}

TEST_CASE("backward: zero-input logistic gradient is analytic") {
  // With x = 0 and zero parameters, softmax is uniform; dL/db_j =
  // mean(1/c - 1[y=j]); weight gradients vanish.
  ModelSpec spec{ModelKind::Logistic, 3, 0, 2};
  Dataset ds;
  ds.n = 4;
  ds.d = 3;
  ds.num_classes = 2;
  ds.X.assign(12, 0.0);
  ds.y = {0, 0, 0, 1};
  ModelParameters zero;
  zero.layout = spec.layout();
  zero.values.assign(spec.param_count(), 0.0);
  const auto idx = all_indices(ds);
  const auto grad = backward(spec, zero, ds, idx);
  for (size_t j = 0; j < 6; ++j) CHECK(grad[j] == 0.0);
  CHECK(grad[6] == doctest::Approx(0.5 - 0.75).epsilon(1e-12));
  CHECK(grad[7] == doctest::Approx(0.5 - 0.25).epsilon(1e-12));
}

TEST_CASE("backward: duplicating every sample leaves the mean gradient unchanged") {
  ModelSpec spec{ModelKind::Logistic, 5, 0, 3};
  const auto ds = tiny_dataset(20, 5, 3, 31);
  const auto params = init_model(spec, 4);
  auto idx = all_indices(ds);
  auto doubled = idx;
  doubled.insert(doubled.end(), idx.begin(), idx.end());
  const auto g1 = backward(spec, params, ds, idx);
  const auto g2 = backward(spec, params, ds, doubled);
  for (size_t j = 0; j < g1.size(); ++j) CHECK(std::fabs(g1[j] - g2[j]) <= 1e-12);
}

TEST_CASE("local_train basics") {
  ModelSpec spec{ModelKind::Logistic, 6, 0, 3};
  const auto ds = tiny_dataset(90, 6, 3, 41);
  const auto start = init_model(spec, 9);
  const auto idx = all_indices(ds);

  SUBCASE("lr = 0 is a no-op and reports n_k") {
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.epochs = 2;
    const auto u = local_train(spec, start, ds, idx, cfg, 0, 0);
    CHECK(u.params.values == start.values);
    CHECK(u.n_k == idx.size());
    CHECK(u.round_trained == 0);
  }

  SUBCASE("one epoch, full batch equals one explicit SGD step") {
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.lr = 0.2;
    cfg.batch_size = idx.size();
    const auto u = local_train(spec, start, ds, idx, cfg, 3, 1);
    // The epoch shuffle permutes the single batch, which does not change
    // the mean gradient.
    const auto grad = backward(spec, start, ds, idx);
    for (size_t j = 0; j < grad.size(); ++j) {
      CHECK(u.params.values[j] ==
            doctest::Approx(start.values[j] - 0.2 * grad[j]).epsilon(1e-12));
    }
  }

  SUBCASE("deterministic, and mini-batch loss decreases on separable data") {
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.lr = 0.1;
    cfg.batch_size = 16;
    const auto a = local_train(spec, start, ds, idx, cfg, 1, 2);
    const auto b = local_train(spec, start, ds, idx, cfg, 1, 2);
    CHECK(a.params.values == b.params.values);
    CHECK(forward_loss(spec, a.params, ds, idx).loss <
          forward_loss(spec, start, ds, idx).loss);

    // A different (client, round) pair shuffles differently.
    const auto c = local_train(spec, start, ds, idx, cfg, 2, 2);
    CHECK(a.params.values != c.params.values);
  }

  SUBCASE("momentum changes the trajectory") {
    TrainConfig plain, heavy;
    plain.epochs = heavy.epochs = 3;
    plain.batch_size = heavy.batch_size = 16;
    heavy.momentum = 0.9;
    const auto a = local_train(spec, start, ds, idx, plain, 0, 0);
    const auto b = local_train(spec, start, ds, idx, heavy, 0, 0);
    CHECK(a.params.values != b.params.values);
  }
}

TEST_CASE("evaluate: accuracy and loss agree with forward_loss") {
  ModelSpec spec{ModelKind::Logistic, 6, 0, 3};
  const auto ds = tiny_dataset(120, 6, 3, 51);
  const auto params = init_model(spec, 6);
  const auto idx = all_indices(ds);
  const auto fl = forward_loss(spec, params, ds, idx);
  const auto ev = evaluate(spec, params, ds);
  CHECK(ev.loss == doctest::Approx(fl.loss).epsilon(1e-12));
  size_t correct = 0;
  for (size_t i = 0; i < ds.n; ++i) {
    if (fl.predictions[i] == ds.y[i]) ++correct;
  }
  CHECK(ev.accuracy == doctest::Approx(double(correct) / double(ds.n)).epsilon(1e-12));
}

TEST_CASE("serial_train runs selected clients in order from a shared start") {
  ModelSpec spec{ModelKind::Logistic, 5, 0, 4};
  const auto ds = tiny_dataset(200, 5, 4, 61);
  const auto start = init_model(spec, 12);
  const auto part = iid_partition(ds.n, 10, 99);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;

  const std::vector<uint32_t> selected = {1, 4, 7};
  const auto updates = serial_train(spec, start, ds, part, selected, cfg, 2);
  REQUIRE(updates.size() == 3);
  for (size_t i = 0; i < selected.size(); ++i) {
    CHECK(updates[i].client_id == selected[i]);
    const auto& idx = part.assignments.at(selected[i]);
    const auto solo = local_train(spec, start, ds, idx, cfg, selected[i], 2);
    CHECK(updates[i].params.values == solo.params.values);
    CHECK(updates[i].n_k == idx.size());
  }

  const std::vector<uint32_t> bogus = {42};
  CHECK_THROWS_AS(serial_train(spec, start, ds, part, bogus, cfg, 0), UnknownClient);
}
