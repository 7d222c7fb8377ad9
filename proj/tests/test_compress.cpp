#include <doctest.h>

#include <cmath>
#include <vector>

#include "fedsim/compress.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

// Brute force over all k-subsets: smallest achievable ||v - s||^2 with s
// supported on k coordinates.
double best_ksparse_error(const std::vector<double>& v, size_t k) {
  const size_t n = v.size();
  double best = 1e300;
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    if (size_t(__builtin_popcount(mask)) != k) continue;
    double err = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (!(mask & (1u << i))) err += v[i] * v[i];
    }
    best = std::min(best, err);
  }
  return best;
}

}  // namespace

TEST_CASE("top-k picks the magnitude argmax") {
  const auto p = topk_encode({1, -5, 3}, 1);
  CHECK(p.indices == std::vector<uint32_t>{1});
  CHECK(p.values == std::vector<double>{-5});
}

TEST_CASE("k = n keeps everything") {
  const std::vector<double> v{2, -1, 0.5};
  const auto p = topk_encode(v, 3);
  CHECK(p.indices == std::vector<uint32_t>{0, 1, 2});
  CHECK(p.values == v);
}

TEST_CASE("ties break toward the lower index") {
  const auto p = topk_encode({2, -2, 0}, 1);
  CHECK(p.indices == std::vector<uint32_t>{0});
  CHECK(p.values == std::vector<double>{2});
}

TEST_CASE("k out of range") {
  CHECK_THROWS_AS(topk_encode({1, 2}, 0), BadK);
  CHECK_THROWS_AS(topk_encode({1, 2}, 3), BadK);
}

TEST_CASE("decode places kept values exactly") {
  SparsePayload p;
  p.n = 3;
  p.indices = {1};
  p.values = {-5};
  CHECK(topk_decode(p) == std::vector<double>{0, -5, 0});
}

TEST_CASE("decode rejects corrupt payloads") {
  SparsePayload p;
  p.n = 3;
  SUBCASE("non-increasing indices") {
    p.indices = {1, 1};
    p.values = {1, 2};
    CHECK_THROWS_AS(topk_decode(p), CorruptPayload);
  }
  SUBCASE("index out of range") {
    p.indices = {5};
    p.values = {1};
    CHECK_THROWS_AS(topk_decode(p), CorruptPayload);
  }
  SUBCASE("size mismatch") {
    p.indices = {0};
    p.values = {1, 2};
    CHECK_THROWS_AS(topk_decode(p), CorruptPayload);
  }
}

TEST_CASE("decode(encode) has exactly k nonzeros and is the best k-sparse approximation") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t n = 4 + rng.next_below(7);  // n <= 10 for the brute force
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-4, 4);
    const size_t k = 1 + rng.next_below(n);
    const auto dense = topk_decode(topk_encode(v, k));
    size_t nonzeros = 0;
    double err = 0.0;
    for (size_t i = 0; i < n; ++i) {
      if (dense[i] != 0.0) {
        ++nonzeros;
        CHECK(dense[i] == v[i]);  // bit equality of kept values
      }
      err += (dense[i] - v[i]) * (dense[i] - v[i]);
    }
    CHECK(nonzeros == k);
    CHECK(err == doctest::Approx(best_ksparse_error(v, k)).epsilon(1e-12));
  }
}

TEST_CASE("top-k is an idempotent projection") {
  Rng rng(37);
  std::vector<double> v(50);
  for (auto& x : v) x = rng.uniform(-1, 1);
  const auto p = topk_encode(v, 10);
  const auto p2 = topk_encode(topk_decode(p), 10);
  CHECK(p2.indices == p.indices);
  CHECK(p2.values == p.values);
}

TEST_CASE("binary16 exact values round-trip losslessly") {
  for (double x : {1.0, 0.5, -2.0, 0.0, -0.0, 65504.0, 0.25, -1024.0}) {
    CHECK(f16_to_f64(f64_to_f16(x)) == x);
  }
}

TEST_CASE("binary16 relative error bound on the normal range") {
  Rng rng(41);
  for (int i = 0; i < 100000; ++i) {
    // log-uniform over [2^-14, 65504)
    const double x = std::exp(rng.uniform(std::log(std::ldexp(1.0, -14)), std::log(65504.0)));
    const double back = f16_to_f64(f64_to_f16(x));
    CHECK(std::fabs(back - x) / x <= std::ldexp(1.0, -10));
  }
}

TEST_CASE("binary16 saturates beyond max finite half") {
  CHECK(f16_to_f64(f64_to_f16(1e6)) == 65504.0);
  CHECK(f16_to_f64(f64_to_f16(-1e6)) == -65504.0);
  CHECK(f16_to_f64(f64_to_f16(65505.0)) == 65504.0);
}

TEST_CASE("quantize/dequantize vector round-trip on representable input") {
  const std::vector<double> v{1.0, -0.5, 2.0, 0.125};
  CHECK(dequantize_f16(quantize_f16(v)) == v);
}

TEST_CASE("measured ratios follow the documented sizes") {
  // n=100000, k=500: 400000 / 4008
  const auto r = measured_ratio_topk(100000, 500);
  CHECK(r.dense_bytes == 400000);
  CHECK(r.encoded_bytes == 4008);
  CHECK(r.ratio() == doctest::Approx(99.8).epsilon(1e-3));
  CHECK(measured_ratio_topk(100000, 499).ratio() >= 100.0);
  CHECK(measured_ratio_topk(100000, 500).ratio() < 100.0);

  const auto f = measured_ratio_f16(1000);
  CHECK(f.dense_bytes == 4000);
  CHECK(f.encoded_bytes == 2008);
  CHECK(f.ratio() == doctest::Approx(4000.0 / 2008.0));

  // k = n: index overhead pushes the ratio below 1.
  CHECK(measured_ratio_topk(1000, 1000).ratio() < 1.0);
}

TEST_CASE("100x threshold formula") {
  CHECK(topk_threshold_for_100x(100000) == 499);
  for (uint64_t n : {10000ull, 100000ull, 1000000ull}) {
    const uint64_t kstar = topk_threshold_for_100x(n);
    CHECK(measured_ratio_topk(n, kstar).ratio() >= 100.0);
    CHECK(measured_ratio_topk(n, kstar + 1).ratio() < 100.0);
  }
}

TEST_CASE("wire codec sizes are consistent with measured_ratio") {
  Rng rng(43);
  std::vector<double> v(1000);
  for (auto& x : v) x = rng.uniform(-1, 1);
  CHECK(encode_values(v, Dtype::F32, Compression::None).size() == 4000);
  CHECK(encode_values(v, Dtype::F64, Compression::None).size() == 8000);
  CHECK(encode_values(v, Dtype::F32, Compression::TopK, 10).size() ==
        measured_ratio_topk(1000, 10).encoded_bytes);
  CHECK(encode_values(v, Dtype::F32, Compression::F16).size() ==
        measured_ratio_f16(1000).encoded_bytes);
}

TEST_CASE("wire codec round-trips") {
  Rng rng(47);
  std::vector<double> v(200);
  for (auto& x : v) x = rng.uniform(-2, 2);
  // Dense f64 is bit-exact.
  CHECK(decode_values(encode_values(v, Dtype::F64, Compression::None), Dtype::F64,
                      Compression::None) == v);
  // Top-k reproduces the sparse projection at f32 precision.
  const auto sparse = decode_values(encode_values(v, Dtype::F64, Compression::TopK, 20),
                                    Dtype::F64, Compression::TopK);
  const auto expect = topk_decode(topk_encode(v, 20));
  size_t nonzeros = 0;
  for (size_t i = 0; i < v.size(); ++i) {
    if (expect[i] == 0.0) {
      CHECK(sparse[i] == 0.0);
    } else {
      ++nonzeros;
      CHECK(sparse[i] == doctest::Approx(expect[i]).epsilon(1e-6));
    }
  }
  CHECK(nonzeros == 20);
}
