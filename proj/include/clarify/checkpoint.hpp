#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clarify/backbone.hpp"
#include "clarify/tensor.hpp"

namespace clarify {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// File layout (all integers little-endian):
//   "CLRFCKPT" | u32 version | u64 header_len | header (UTF-8 "key=value\n" lines)
//   u64 n_arrays | per array: u32 name_len, name, u32 rank, u64 dims[rank],
//   u64 count, f64 values[count]
// The header carries "content_hash", a SHA-256 over "blob <n>\0" followed by
// the array section, so any payload corruption is caught on load.
struct Checkpoint {
  std::map<std::string, std::string> header;
  std::vector<NamedArray> arrays;

  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const { return header.count(key) > 0; }
  const NamedArray* find(std::string_view name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view bytes, const std::string& source);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Hash of the array section only; header edits do not change it.
std::string content_hash(std::span<const NamedArray> arrays);

/// Copies every parameter's values, in ParameterSet order.
std::vector<NamedArray> capture_parameters(const ParameterSet& params);

/// Overwrites each parameter of `target` whose name starts with one of
/// `prefixes` from the array of the same name. Missing arrays and shape
/// mismatches are CheckpointErrors. Returns the number of tensors loaded.
std::size_t restore_parameters(const ParameterSet& target, const Checkpoint& checkpoint,
                               std::span<const std::string> prefixes);

void write_backbone_header(std::map<std::string, std::string>& header,
                           const BackboneConfig& config);
BackboneConfig backbone_from_header(const Checkpoint& checkpoint);
/// CheckpointError naming the first differing dimension.
void require_architecture(const Checkpoint& checkpoint, const BackboneConfig& expected);

}  // namespace clarify
