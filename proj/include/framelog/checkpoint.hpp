#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "framelog/tensor.hpp"

namespace framelog {

/// Ordered named-tensor store. Binary layout (all integers little-endian):
///
///   magic "FLOGCKPT" (8 bytes) | u32 version (=1) | u32 tensor count
///   u32 metadata length | metadata bytes (UTF-8 JSON, may be empty)
///   per tensor: u32 name length | name bytes | u32 dims[4] (N, C, H, W)
///               | u64 byte offset into the data section | u64 element count
///   data section: raw little-endian float32 values, tensors in manifest order
///
/// See docs/FORMATS.md for the full description.
class Checkpoint {
 public:
  static constexpr char kMagic[8] = {'F', 'L', 'O', 'G', 'C', 'K', 'P', 'T'};
  static constexpr std::uint32_t kVersion = 1;

  void add(std::string name, nn::Tensor tensor);
  bool has(const std::string& name) const;
  const nn::Tensor& get(const std::string& name) const;
  std::vector<std::string> names() const;
  const std::vector<std::pair<std::string, nn::Tensor>>& entries() const {
    return entries_;
  }
  std::size_t size() const { return entries_.size(); }

  std::string metadata;

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;

 private:
  std::vector<std::pair<std::string, nn::Tensor>> entries_;
};

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t seed = 14695981039346656037ull);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace framelog
