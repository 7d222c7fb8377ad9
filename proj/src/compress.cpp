#include "fedsim/compress.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace fedsim {

namespace {

template <typename T>
void put_le(std::vector<uint8_t>& out, T value) {
  for (size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<uint8_t>(value >> (8 * i)));
  }
}

template <typename T>
T get_le(const uint8_t* p) {
  T value = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(p[i]) << (8 * i);
  }
  return value;
}

void put_f32(std::vector<uint8_t>& out, float x) {
  uint32_t bits;
  std::memcpy(&bits, &x, 4);
  put_le<uint32_t>(out, bits);
}

float get_f32(const uint8_t* p) {
  uint32_t bits = get_le<uint32_t>(p);
  float x;
  std::memcpy(&x, &bits, 4);
  return x;
}

void put_f64(std::vector<uint8_t>& out, double x) {
  uint64_t bits;
  std::memcpy(&bits, &x, 8);
  put_le<uint64_t>(out, bits);
}

double get_f64(const uint8_t* p) {
  uint64_t bits = get_le<uint64_t>(p);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

}  // namespace

SparsePayload topk_encode(const std::vector<double>& v, size_t k) {
  if (k < 1 || k > v.size()) {
    throw BadK("topk_encode: k must be in [1, v.length]");
  }
  std::vector<uint32_t> order(v.size());
  std::iota(order.begin(), order.end(), 0u);
  // Larger magnitude first; on ties the lower index wins.
  auto by_magnitude = [&](uint32_t a, uint32_t b) {
    const double ma = std::fabs(v[a]);
    const double mb = std::fabs(v[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  };
  std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), by_magnitude);
  order.resize(k);
  std::sort(order.begin(), order.end());

  SparsePayload p;
  p.n = v.size();
  p.indices = std::move(order);
  p.values.reserve(k);
  for (uint32_t idx : p.indices) p.values.push_back(v[idx]);
  return p;
}

std::vector<double> topk_decode(const SparsePayload& p) {
  if (p.indices.size() != p.values.size() || p.indices.size() > p.n) {
    throw CorruptPayload("topk_decode: inconsistent sparse payload sizes");
  }
  for (size_t i = 0; i < p.indices.size(); ++i) {
    if (p.indices[i] >= p.n || (i > 0 && p.indices[i] <= p.indices[i - 1])) {
      throw CorruptPayload("topk_decode: indices must be strictly increasing and < n");
    }
  }
  std::vector<double> v(p.n, 0.0);
  for (size_t i = 0; i < p.indices.size(); ++i) v[p.indices[i]] = p.values[i];
  return v;
}

uint16_t f64_to_f16(double x) {
  if (std::isnan(x)) return 0x7e00;
  const uint16_t sign = std::signbit(x) ? 0x8000 : 0;
  double a = std::fabs(x);
  if (a == 0.0) return sign;
  if (a > 65504.0) return sign | 0x7bff;  // saturate, including infinities
  const int e = std::ilogb(a);
  if (e < -14) {
    // Subnormal half: multiples of 2^-24, round to nearest even.
    const double q = std::nearbyint(std::ldexp(a, 24));
    return sign | static_cast<uint16_t>(q);
  }
  double q = std::nearbyint(std::ldexp(a, 10 - e));  // in [1024, 2048]
  int exp = e;
  if (q == 2048.0) {
    q = 1024.0;
    ++exp;
  }
  return sign | static_cast<uint16_t>((exp + 15) << 10) |
         static_cast<uint16_t>(static_cast<uint16_t>(q) & 0x3ff);
}

double f16_to_f64(uint16_t h) {
  const double sign = (h & 0x8000) ? -1.0 : 1.0;
  const int exp = (h >> 10) & 0x1f;
  const int mant = h & 0x3ff;
  if (exp == 0x1f) {
    if (mant != 0) return std::numeric_limits<double>::quiet_NaN();
    return sign * std::numeric_limits<double>::infinity();
  }
  if (exp == 0) return sign * std::ldexp(static_cast<double>(mant), -24);
  return sign * std::ldexp(static_cast<double>(1024 + mant), exp - 25);
}

QuantizedPayload quantize_f16(const std::vector<double>& v) {
  QuantizedPayload p;
  p.n = v.size();
  p.halfwords.reserve(v.size());
  for (double x : v) p.halfwords.push_back(f64_to_f16(x));
  return p;
}

std::vector<double> dequantize_f16(const QuantizedPayload& p) {
  if (p.halfwords.size() != p.n) {
    throw CorruptPayload("dequantize_f16: halfword count does not match n");
  }
  std::vector<double> v;
  v.reserve(p.n);
  for (uint16_t h : p.halfwords) v.push_back(f16_to_f64(h));
  return v;
}

CompressionRatio measured_ratio_topk(uint64_t n, uint64_t k) {
  return {4 * n, 8 + 8 * k};
}

CompressionRatio measured_ratio_f16(uint64_t n) {
  return {4 * n, 8 + 2 * n};
}

uint64_t topk_threshold_for_100x(uint64_t n) {
  // 4n / (8k + 8) >= 100  <=>  k <= (4n - 800) / 800
  if (4 * n < 800 + 800) return 0;
  return (4 * n - 800) / 800;
}

std::vector<uint8_t> encode_values(const std::vector<double>& v, Dtype dtype,
                                   Compression compression, size_t topk_k) {
  std::vector<uint8_t> out;
  switch (compression) {
    case Compression::None:
      if (dtype == Dtype::F32) {
        out.reserve(4 * v.size());
        for (double x : v) put_f32(out, static_cast<float>(x));
      } else {
        out.reserve(8 * v.size());
        for (double x : v) put_f64(out, x);
      }
      return out;
    case Compression::TopK: {
      const SparsePayload p = topk_encode(v, topk_k);
      out.reserve(8 + 8 * p.indices.size());
      put_le<uint64_t>(out, p.n);
      for (uint32_t idx : p.indices) put_le<uint32_t>(out, idx);
      for (double val : p.values) put_f32(out, static_cast<float>(val));
      return out;
    }
    case Compression::F16: {
      const QuantizedPayload p = quantize_f16(v);
      out.reserve(8 + 2 * p.halfwords.size());
      put_le<uint64_t>(out, p.n);
      for (uint16_t h : p.halfwords) put_le<uint16_t>(out, h);
      return out;
    }
  }
  throw UnknownCode("encode_values: unknown compression tag");
}

std::vector<double> decode_values(const std::vector<uint8_t>& bytes, Dtype dtype,
                                  Compression compression) {
  switch (compression) {
    case Compression::None: {
      const size_t width = dtype == Dtype::F32 ? 4 : 8;
      if (bytes.size() % width != 0) {
        throw CorruptPayload("decode_values: dense payload length not a multiple of dtype width");
      }
      std::vector<double> v;
      v.reserve(bytes.size() / width);
      for (size_t off = 0; off < bytes.size(); off += width) {
        v.push_back(width == 4 ? static_cast<double>(get_f32(bytes.data() + off))
                               : get_f64(bytes.data() + off));
      }
      return v;
    }
    case Compression::TopK: {
      if (bytes.size() < 8 || (bytes.size() - 8) % 8 != 0) {
        throw CorruptPayload("decode_values: bad sparse payload length");
      }
      SparsePayload p;
      p.n = get_le<uint64_t>(bytes.data());
      const size_t k = (bytes.size() - 8) / 8;
      p.indices.reserve(k);
      p.values.reserve(k);
      for (size_t i = 0; i < k; ++i) {
        p.indices.push_back(get_le<uint32_t>(bytes.data() + 8 + 4 * i));
      }
      for (size_t i = 0; i < k; ++i) {
        p.values.push_back(static_cast<double>(get_f32(bytes.data() + 8 + 4 * k + 4 * i)));
      }
      return topk_decode(p);
    }
    case Compression::F16: {
      if (bytes.size() < 8 || (bytes.size() - 8) % 2 != 0) {
        throw CorruptPayload("decode_values: bad f16 payload length");
      }
      QuantizedPayload p;
      p.n = get_le<uint64_t>(bytes.data());
      const size_t count = (bytes.size() - 8) / 2;
      if (count != p.n) {
        throw CorruptPayload("decode_values: f16 count does not match n field");
      }
      p.halfwords.reserve(count);
      for (size_t i = 0; i < count; ++i) {
        p.halfwords.push_back(get_le<uint16_t>(bytes.data() + 8 + 2 * i));
      }
      return dequantize_f16(p);
    }
  }
  throw UnknownCode("decode_values: unknown compression tag");
}

}  // namespace fedsim
