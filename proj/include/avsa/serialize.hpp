#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "avsa/equirect_io.hpp"
#include "avsa/error.hpp"
#include "avsa/nn.hpp"

namespace avsa {

// Tensor file: "AVST" magic, u32 rank, u32 dims, little-endian float32
// payload. Checkpoint file: "AVCK" magic, u32 entry count, then per entry
// a length-prefixed name, a trainable byte and the tensor in the same
// layout. Both formats are byte-deterministic.

inline constexpr char kTensorMagic[4] = {'A', 'V', 'S', 'T'};
inline constexpr char kCheckpointMagic[4] = {'A', 'V', 'C', 'K'};

namespace detail {

inline void write_tensor_payload(std::ostream& os, const std::vector<int>& shape,
                                 const std::vector<float>& data) {
  write_u32(os, static_cast<uint32_t>(shape.size()));
  size_t n = 1;
  for (int d : shape) {
    write_u32(os, static_cast<uint32_t>(d));
    n *= static_cast<size_t>(d);
  }
  if (n != data.size()) throw ShapeError("write_tensor: shape does not match payload");
  for (float v : data) write_f32(os, v);
}

inline std::pair<std::vector<int>, std::vector<float>> read_tensor_payload(
    std::istream& is, const std::string& what) {
  const uint32_t rank = read_u32(is);
  if (!is || rank > 8) throw DataError("read_tensor: bad rank in " + what);
  std::vector<int> shape(rank);
  size_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<int>(read_u32(is));
    if (shape[i] < 0) throw DataError("read_tensor: bad dim in " + what);
    n *= static_cast<size_t>(shape[i]);
  }
  std::vector<float> data(n);
  for (size_t i = 0; i < n; ++i) data[i] = read_f32(is);
  if (!is) throw DataError("read_tensor: truncated payload in " + what);
  return {std::move(shape), std::move(data)};
}

}  // namespace detail

inline void write_tensor_file(const std::string& path, const std::vector<int>& shape,
                              const std::vector<float>& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_tensor_file: cannot open " + path);
  os.write(kTensorMagic, 4);
  detail::write_tensor_payload(os, shape, data);
  if (!os) throw DataError("write_tensor_file: write failed for " + path);
}

inline std::pair<std::vector<int>, std::vector<float>> read_tensor_file(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_tensor_file: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kTensorMagic, 4) != 0)
    throw DataError("read_tensor_file: bad magic in " + path);
  return detail::read_tensor_payload(is, path);
}

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("save_checkpoint: cannot open " + path);
  os.write(kCheckpointMagic, 4);
  detail::write_u32(os, static_cast<uint32_t>(store.entries().size()));
  std::vector<float> buf;
  for (const auto& e : store.entries()) {
    detail::write_u32(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    os.put(e.trainable ? 1 : 0);
    buf.assign(e.tensor.value().begin(), e.tensor.value().end());
    detail::write_tensor_payload(os, e.tensor.shape(), buf);
  }
  if (!os) throw DataError("save_checkpoint: write failed for " + path);
}

// Loads values into an existing store by name. Every checkpoint entry must
// match a registered parameter of the same shape; parameters absent from
// the checkpoint are an error too, so architectures cannot silently drift.
template <typename T>
void load_checkpoint(const std::string& path, ParamStore<T>& store) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("load_checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw DataError("load_checkpoint: bad magic in " + path);
  const uint32_t count = detail::read_u32(is);
  if (count != store.entries().size())
    throw DataError("load_checkpoint: entry count mismatch in " + path);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t len = detail::read_u32(is);
    if (!is || len > 4096) throw DataError("load_checkpoint: bad name in " + path);
    std::string name(len, '\0');
    is.read(name.data(), len);
    is.get();  // trainable flag, informational
    auto [shape, data] = detail::read_tensor_payload(is, path);
    Tensor<T>* t = store.find(name);
    if (!t) throw DataError("load_checkpoint: unknown parameter " + name);
    if (t->shape() != shape)
      throw DataError("load_checkpoint: shape mismatch for " + name);
    for (size_t j = 0; j < data.size(); ++j)
      t->value()[j] = static_cast<T>(data[j]);
  }
}

// FNV-1a over the float32 image of every parameter, for frozen-weight
// audits and byte-identity checks.
template <typename T>
uint64_t param_hash(const ParamStore<T>& store) {
  uint64_t h = 1469598103934665603ULL;
  auto eat = [&h](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& e : store.entries()) {
    eat(e.name.data(), e.name.size());
    for (T v : e.tensor.value()) {
      const float f = static_cast<float>(v);
      eat(&f, sizeof(f));
    }
  }
  return h;
}

inline uint64_t file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("file_hash: cannot open " + path);
  uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    const std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!is) break;
  }
  return h;
}

}  // namespace avsa
