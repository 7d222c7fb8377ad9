#include "fedsim/packaging.hpp"

#include <cstring>

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

}  // namespace

ModelParameters pack(const std::vector<Tensor>& tensors) {
  ModelParameters out;
  if (!tensors.empty()) {
    out.layout.dtype = tensors.front().dtype;
    for (const auto& t : tensors) {
      if (t.dtype != out.layout.dtype) {
        throw DtypeMismatch("pack: tensors must share one dtype");
      }
    }
  }
  for (const auto& t : tensors) {
    if (t.values.size() != t.element_count()) {
      throw LayoutMismatch("pack: tensor value count does not match its shape");
    }
    out.layout.shapes.push_back(t.shape);
    out.values.insert(out.values.end(), t.values.begin(), t.values.end());
  }
  return out;
}

std::vector<Tensor> unpack(const std::vector<double>& flat, const LayoutDescriptor& layout) {
  if (flat.size() != layout.total_elements()) {
    throw LayoutMismatch("unpack: flat length does not match layout element count");
  }
  std::vector<Tensor> tensors;
  tensors.reserve(layout.shapes.size());
  size_t offset = 0;
  for (const auto& shape : layout.shapes) {
    Tensor t;
    t.shape = shape;
    t.dtype = layout.dtype;
    const uint64_t n = t.element_count();
    t.values.assign(flat.begin() + offset, flat.begin() + offset + n);
    offset += n;
    tensors.push_back(std::move(t));
  }
  return tensors;
}

std::vector<Tensor> unpack(const ModelParameters& params) {
  return unpack(params.values, params.layout);
}

size_t encoded_size(const Package& pkg) {
  return 8 + kHeaderBytes + 8 * pkg.slices.size() + pkg.payload.size();
}

std::vector<uint8_t> encode_package(const Package& pkg) {
  uint64_t slice_sum = 0;
  for (uint64_t s : pkg.slices) slice_sum += s;
  if (slice_sum != pkg.payload.size()) {
    throw CorruptSliceTable("encode_package: slice table does not cover payload");
  }

  std::vector<uint8_t> out;
  out.reserve(encoded_size(pkg));
  const uint64_t body_len = kHeaderBytes + 8 * pkg.slices.size() + pkg.payload.size();
  put_le<uint64_t>(out, body_len);
  put_le<uint32_t>(out, kPackageMagic);
  put_le<uint16_t>(out, kProtocolVersion);
  put_le<uint16_t>(out, static_cast<uint16_t>(pkg.message_code));
  put_le<uint32_t>(out, pkg.sender_rank);
  put_le<uint32_t>(out, pkg.receiver_rank);
  put_le<uint32_t>(out, pkg.round);
  put_le<uint32_t>(out, static_cast<uint32_t>(pkg.slices.size()));
  put_le<uint8_t>(out, static_cast<uint8_t>(pkg.dtype));
  put_le<uint8_t>(out, static_cast<uint8_t>(pkg.compression));
  put_le<uint16_t>(out, 0);  // reserved
  for (uint64_t s : pkg.slices) put_le<uint64_t>(out, s);
  out.insert(out.end(), pkg.payload.begin(), pkg.payload.end());
  return out;
}

Package decode_package(const uint8_t* data, size_t size) {
  if (size < 8) throw Truncated("decode_package: missing length prefix");
  const uint64_t body_len = get_le<uint64_t>(data);
  if (size < 8 + body_len) throw Truncated("decode_package: declared length exceeds available bytes");
  const uint8_t* p = data + 8;
  // Everything below reads only within [p, p + body_len).
  if (body_len < kHeaderBytes) throw Truncated("decode_package: header incomplete");
  if (get_le<uint32_t>(p) != kPackageMagic) throw BadMagic("decode_package: bad magic");
  if (get_le<uint16_t>(p + 4) != kProtocolVersion) {
    throw UnknownCode("decode_package: unsupported protocol version");
  }
  const uint16_t code = get_le<uint16_t>(p + 6);
  if (code > static_cast<uint16_t>(MessageCode::Register)) {
    throw UnknownCode("decode_package: unknown message code");
  }
  Package pkg;
  pkg.message_code = static_cast<MessageCode>(code);
  pkg.sender_rank = get_le<uint32_t>(p + 8);
  pkg.receiver_rank = get_le<uint32_t>(p + 12);
  pkg.round = get_le<uint32_t>(p + 16);
  const uint32_t slice_count = get_le<uint32_t>(p + 20);
  const uint8_t dtype = p[24];
  if (dtype > static_cast<uint8_t>(Dtype::F64)) {
    throw UnknownCode("decode_package: unknown dtype");
  }
  pkg.dtype = static_cast<Dtype>(dtype);
  const uint8_t compression = p[25];
  if (compression > static_cast<uint8_t>(Compression::F16)) {
    throw UnknownCode("decode_package: unknown compression tag");
  }
  pkg.compression = static_cast<Compression>(compression);

  if (body_len < kHeaderBytes + 8ull * slice_count) {
    throw Truncated("decode_package: slice table incomplete");
  }
  pkg.slices.resize(slice_count);
  uint64_t slice_sum = 0;
  for (uint32_t i = 0; i < slice_count; ++i) {
    pkg.slices[i] = get_le<uint64_t>(p + kHeaderBytes + 8ull * i);
    slice_sum += pkg.slices[i];
  }
  const uint64_t payload_len = body_len - kHeaderBytes - 8ull * slice_count;
  if (slice_sum != payload_len) {
    throw CorruptSliceTable("decode_package: slice sum does not match payload length");
  }
  const uint8_t* payload = p + kHeaderBytes + 8ull * slice_count;
  pkg.payload.assign(payload, payload + payload_len);
  return pkg;
}

Package decode_package(const std::vector<uint8_t>& bytes) {
  return decode_package(bytes.data(), bytes.size());
}

}  // namespace fedsim
