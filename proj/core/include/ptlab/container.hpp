#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ptlab/tensor.hpp"

namespace ptlab {

// On-disk container shared by model checkpoints, reference log-prob caches
// and reward models:
//
//   bytes 0..7   magic "PTLBCK01" (8-byte magic, format version in the tag)
//   bytes 8..15  u64 little-endian manifest length in bytes
//   manifest     UTF-8 text; "meta <key> <value...>" and
//                "tensor <name> f32 <dim0> <dim1> ..." lines
//   payload      row-major little-endian float32 values, manifest order
//
// Loaders verify that the payload length matches the manifest exactly and
// throw Error(io) on any mismatch.
inline constexpr char kContainerMagic[8] = {'P', 'T', 'L', 'B', 'C', 'K', '0', '1'};

struct ContainerTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Container {
  std::vector<std::pair<std::string, std::string>> meta;  // insertion-ordered
  std::vector<ContainerTensor> tensors;

  void set_meta(const std::string& key, const std::string& value);
  const std::string* find_meta(const std::string& key) const;
  std::string require_meta(const std::string& key) const;  // throws Error(io)

  void add_tensor(const std::string& name, const Shape& shape, std::span<const float> data);

  std::vector<uint8_t> serialize() const;
  void save(const std::filesystem::path& path) const;

  static Container deserialize(std::span<const uint8_t> bytes, const std::string& origin);
  static Container load(const std::filesystem::path& path);
};

}  // namespace ptlab
