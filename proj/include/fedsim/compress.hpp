#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/packaging.hpp"

namespace fedsim {

// Top-k sparsification result: the k largest-magnitude entries of a dense
// vector, indices strictly increasing.
struct SparsePayload {
  uint64_t n = 0;
  std::vector<uint32_t> indices;
  std::vector<double> values;
};

// Dense vector re-expressed in IEEE-754 binary16.
struct QuantizedPayload {
  uint64_t n = 0;
  std::vector<uint16_t> halfwords;
};

// Keeps the k entries of largest absolute value; ties break toward the lower
// index. Kept values are bit-identical to the input.
SparsePayload topk_encode(const std::vector<double>& v, size_t k);

// Length-n dense vector, zero outside the kept indices.
std::vector<double> topk_decode(const SparsePayload& p);

// Round-to-nearest-even conversion; values beyond binary16 range saturate to
// +/-65504 (the largest finite half).
QuantizedPayload quantize_f16(const std::vector<double>& v);
std::vector<double> dequantize_f16(const QuantizedPayload& p);

// Scalar binary16 conversion, exposed for tests.
uint16_t f64_to_f16(double x);
double f16_to_f64(uint16_t h);

// Wire sizes and the resulting ratio against a dense f32 payload:
//   dense  = 4n
//   top-k  = 8 + 8k   (u64 n field, then u32 index + f32 value per entry)
//   f16    = 8 + 2n
struct CompressionRatio {
  uint64_t dense_bytes = 0;
  uint64_t encoded_bytes = 0;
  double ratio() const { return static_cast<double>(dense_bytes) / static_cast<double>(encoded_bytes); }
};

CompressionRatio measured_ratio_topk(uint64_t n, uint64_t k);
CompressionRatio measured_ratio_f16(uint64_t n);

// Largest k for which the top-k ratio is still >= 100x at length n, or 0 if
// no k qualifies.
uint64_t topk_threshold_for_100x(uint64_t n);

// Wire payload codecs used by the protocol layer. The compression tag in the
// Package header selects the layout; all integers little-endian:
//   None + F32: n * f32            None + F64: n * f64
//   TopK:       u64 n, k * u32 indices, k * f32 values
//   F16:        u64 n, n * u16 halfwords
std::vector<uint8_t> encode_values(const std::vector<double>& v, Dtype dtype,
                                   Compression compression, size_t topk_k = 0);
std::vector<double> decode_values(const std::vector<uint8_t>& bytes, Dtype dtype,
                                  Compression compression);

}  // namespace fedsim
