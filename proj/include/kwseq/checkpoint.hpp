#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kwseq/tensor.hpp"

namespace kwseq {

// Binary tensor container:
//   magic "KWSQTNSR", u32 version, u64 entry count, then per entry
//   u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values.
// All integers and doubles little-endian; values round-trip bit-exactly.
inline constexpr std::uint32_t kTensorFileVersion = 1;

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

// Copies stored values into `targets` by name. Every target must be present
// with an identical shape.
void assign_tensors(const std::vector<NamedTensor>& stored,
                    const std::vector<NamedTensor>& targets);

// Writes `contents` to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace kwseq
