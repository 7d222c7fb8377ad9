#include <doctest.h>

#include "fedsim/packaging.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

Tensor make_tensor(std::vector<uint64_t> shape, std::vector<double> values,
                   Dtype dtype = Dtype::F64) {
  return Tensor{std::move(shape), std::move(values), dtype};
}

Package random_package(Rng& rng) {
  Package pkg;
  pkg.sender_rank = uint32_t(rng.next_below(100));
  pkg.receiver_rank = uint32_t(rng.next_below(100));
  pkg.round = uint32_t(rng.next_below(1000));
  pkg.message_code = static_cast<MessageCode>(rng.next_below(4));
  pkg.dtype = static_cast<Dtype>(rng.next_below(2));
  pkg.compression = static_cast<Compression>(rng.next_below(3));
  const size_t slice_count = rng.next_below(4);
  for (size_t i = 0; i < slice_count; ++i) {
    const size_t len = rng.next_below(64);
    pkg.slices.push_back(len);
    for (size_t b = 0; b < len; ++b) pkg.payload.push_back(uint8_t(rng.next_below(256)));
  }
  return pkg;
}

}  // namespace

TEST_CASE("pack concatenates row-major in order") {
  const auto flat = pack({make_tensor({2}, {1, 2}), make_tensor({1}, {3})});
  CHECK(flat.values == std::vector<double>{1, 2, 3});
  CHECK(flat.layout.shapes == std::vector<std::vector<uint64_t>>{{2}, {1}});

  const auto matrix = pack({make_tensor({2, 2}, {4, 5, 6, 7})});
  CHECK(matrix.values == std::vector<double>{4, 5, 6, 7});
}

TEST_CASE("pack of empty list") {
  const auto flat = pack({});
  CHECK(flat.values.empty());
  CHECK(flat.layout.shapes.empty());
  CHECK(unpack(flat).empty());
}

TEST_CASE("pack rejects mixed dtypes") {
  CHECK_THROWS_AS(pack({make_tensor({1}, {1}, Dtype::F32), make_tensor({1}, {2}, Dtype::F64)}),
                  DtypeMismatch);
}

TEST_CASE("unpack inverts pack") {
  const auto flat = pack({make_tensor({2}, {1, 2}), make_tensor({1}, {3})});
  const auto tensors = unpack(flat);
  REQUIRE(tensors.size() == 2);
  CHECK(tensors[0].values == std::vector<double>{1, 2});
  CHECK(tensors[1].values == std::vector<double>{3});
}

TEST_CASE("unpack rejects length mismatch") {
  LayoutDescriptor layout;
  layout.shapes = {{2}, {1}};
  CHECK_THROWS_AS(unpack(std::vector<double>{1, 2}, layout), LayoutMismatch);
}

TEST_CASE("pack/unpack round-trip on random tensor lists") {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> tensors;
    const size_t count = rng.next_below(6);  // includes the empty list
    for (size_t t = 0; t < count; ++t) {
      Tensor tensor;
      const size_t ndim = rng.next_below(3);  // includes scalars
      uint64_t total = 1;
      for (size_t dim = 0; dim < ndim; ++dim) {
        tensor.shape.push_back(rng.next_below(4));  // includes zero dims
        total *= tensor.shape.back();
      }
      for (uint64_t i = 0; i < total; ++i) tensor.values.push_back(rng.uniform(-10, 10));
      tensors.push_back(std::move(tensor));
    }
    const auto flat = pack(tensors);
    const auto restored = unpack(flat);
    REQUIRE(restored.size() == tensors.size());
    for (size_t t = 0; t < tensors.size(); ++t) {
      CHECK(restored[t].shape == tensors[t].shape);
      CHECK(restored[t].values == tensors[t].values);
    }
  }
}

TEST_CASE("encoded sizes match the format arithmetic") {
  Package empty;
  empty.message_code = MessageCode::Exit;
  CHECK(encode_package(empty).size() == 36);  // 8 prefix + 28 header
  CHECK(encoded_size(empty) == 36);

  Package one_slice;
  one_slice.slices = {12};
  one_slice.payload.assign(12, 0xab);
  CHECK(encode_package(one_slice).size() == 56);  // 36 + 8 + 12
}

TEST_CASE("encoding is deterministic") {
  Rng rng(5);
  const Package pkg = random_package(rng);
  CHECK(encode_package(pkg) == encode_package(pkg));
}

TEST_CASE("1000 random packages round-trip bit-exactly") {
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const Package pkg = random_package(rng);
    const auto bytes = encode_package(pkg);
    CHECK(decode_package(bytes) == pkg);
  }
}

TEST_CASE("decode error classes") {
  Package pkg;
  pkg.slices = {4};
  pkg.payload = {1, 2, 3, 4};
  auto bytes = encode_package(pkg);

  SUBCASE("bad magic") {
    auto corrupt = bytes;
    corrupt[8] ^= 0xff;
    CHECK_THROWS_AS(decode_package(corrupt), BadMagic);
  }
  SUBCASE("truncated after header") {
    const std::vector<uint8_t> cut(bytes.begin(), bytes.begin() + 36);
    CHECK_THROWS_AS(decode_package(cut), Truncated);
  }
  SUBCASE("truncated mid-prefix") {
    const std::vector<uint8_t> cut(bytes.begin(), bytes.begin() + 5);
    CHECK_THROWS_AS(decode_package(cut), Truncated);
  }
  SUBCASE("unknown message code") {
    auto corrupt = bytes;
    corrupt[14] = 0x7f;  // message_code field
    CHECK_THROWS_AS(decode_package(corrupt), UnknownCode);
  }
  SUBCASE("unknown dtype") {
    auto corrupt = bytes;
    corrupt[32] = 9;
    CHECK_THROWS_AS(decode_package(corrupt), UnknownCode);
  }
  SUBCASE("unknown compression") {
    auto corrupt = bytes;
    corrupt[33] = 9;
    CHECK_THROWS_AS(decode_package(corrupt), UnknownCode);
  }
  SUBCASE("corrupt slice table") {
    auto corrupt = bytes;
    corrupt[36] = 99;  // first slice length, no longer matches payload
    CHECK_THROWS_AS(decode_package(corrupt), CorruptSliceTable);
  }
}

TEST_CASE("decoder ignores trailing bytes beyond the declared length") {
  Package pkg;
  pkg.round = 7;
  auto bytes = encode_package(pkg);
  bytes.push_back(0xde);
  bytes.push_back(0xad);
  CHECK(decode_package(bytes) == pkg);
}

TEST_CASE("encode rejects slice table that does not cover payload") {
  Package pkg;
  pkg.slices = {3};
  pkg.payload = {1, 2};
  CHECK_THROWS_AS(encode_package(pkg), CorruptSliceTable);
}
