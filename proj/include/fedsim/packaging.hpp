#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

enum class Dtype : uint8_t { F32 = 0, F64 = 1 };

enum class Compression : uint8_t { None = 0, TopK = 1, F16 = 2 };

enum class MessageCode : uint16_t {
  ParameterRequest = 0,
  ParameterUpdate = 1,
  Exit = 2,
  Register = 3,
};

// Shape metadata stripped off when a tensor list is flattened; enough to
// restore the original list.
struct LayoutDescriptor {
  std::vector<std::vector<uint64_t>> shapes;
  Dtype dtype = Dtype::F64;

  uint64_t total_elements() const {
    uint64_t total = 0;
    for (const auto& shape : shapes) {
      uint64_t n = 1;
      for (uint64_t dim : shape) n *= dim;
      total += n;
    }
    return total;
  }

  bool operator==(const LayoutDescriptor&) const = default;
};

// A shaped array. Values are held as f64 internally; the dtype tag records
// the precision the tensor travels at on the wire.
struct Tensor {
  std::vector<uint64_t> shape;
  std::vector<double> values;
  Dtype dtype = Dtype::F64;

  uint64_t element_count() const {
    uint64_t n = 1;
    for (uint64_t dim : shape) n *= dim;
    return n;
  }
};

// A model as one flat vector plus the layout to restore it.
struct ModelParameters {
  std::vector<double> values;
  LayoutDescriptor layout;
};

// Row-major concatenation of a tensor list into one flat vector.
ModelParameters pack(const std::vector<Tensor>& tensors);

// Inverse of pack.
std::vector<Tensor> unpack(const ModelParameters& params);
std::vector<Tensor> unpack(const std::vector<double>& flat, const LayoutDescriptor& layout);

// One message unit: fixed header plus a slice table describing how the
// payload divides into logical segments.
struct Package {
  uint32_t sender_rank = 0;
  uint32_t receiver_rank = 0;
  uint32_t round = 0;
  MessageCode message_code = MessageCode::ParameterRequest;
  Dtype dtype = Dtype::F64;
  Compression compression = Compression::None;
  std::vector<uint64_t> slices;
  std::vector<uint8_t> payload;

  bool operator==(const Package&) const = default;
};

// Wire constants (protocol v1, documented in docs/protocol.md).
inline constexpr uint32_t kPackageMagic = 0x46444C31;  // "FDL1"
inline constexpr uint16_t kProtocolVersion = 1;
inline constexpr size_t kHeaderBytes = 28;  // fixed header after the length prefix

// Serializes pkg to the little-endian v1 byte layout. Deterministic; the
// leading u64 counts every byte that follows it, so frames are
// self-delimiting on a stream.
std::vector<uint8_t> encode_package(const Package& pkg);

// Exact inverse of encode_package on its image. Throws BadMagic, Truncated,
// UnknownCode or CorruptSliceTable on malformed input. Never reads past the
// declared length prefix.
Package decode_package(const std::vector<uint8_t>& bytes);
Package decode_package(const uint8_t* data, size_t size);

// Encoded size without materializing the bytes.
size_t encoded_size(const Package& pkg);

}  // namespace fedsim
