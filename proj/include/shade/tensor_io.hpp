#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "shade/tensor.hpp"

namespace shade {

// Binary tensor file: magic "TENS", 1-byte version (=1), 1-byte dtype code
// (1 = 32-bit float, 2 = 8-bit unsigned), 1-byte rank, rank x 8-byte
// little-endian extents, then the row-major payload little-endian.
void write_tensor(std::ostream& os, const Tensor& t);
void write_tensor(std::ostream& os, const ByteTensor& t);
void save_tensor(const std::string& path, const Tensor& t);
void save_tensor(const std::string& path, const ByteTensor& t);

enum class TensorDType : uint8_t { Float32 = 1, Uint8 = 2 };

TensorDType peek_dtype(std::istream& is);  // does not consume
Tensor read_tensor_f32(std::istream& is);
ByteTensor read_tensor_u8(std::istream& is);
Tensor load_tensor_f32(const std::string& path);
ByteTensor load_tensor_u8(const std::string& path);

// FNV-1a 64-bit, used for dataset / checkpoint digests.
uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL);
uint64_t file_digest(const std::string& path);
std::string digest_hex(uint64_t d);

// Checkpoint container: magic "SHCK", u32 entry count, then per entry a
// u32 name length, the name bytes, and a TENS blob.
void save_named_tensors(const std::string& path,
                        const std::vector<std::pair<std::string, Tensor>>& entries);
std::vector<std::pair<std::string, Tensor>> load_named_tensors(const std::string& path);

}  // namespace shade
