#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mqt/tensor.hpp"

namespace mqt {

// Flat binary tensor container.
//
// Layout: magic "MQT0", then one record per tensor:
//   u64 name length (LE), name bytes,
//   u64 rank, u64 dims[rank],
//   u8 dtype tag (0 = f32, 1 = f64),
//   payload, little-endian row-major.
// Records run to end of stream.

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

void write_container(std::ostream& os, const std::map<std::string, Tensor>& tensors,
                     DType dtype = DType::F64);
std::map<std::string, Tensor> read_container(std::istream& is);

void save_container(const std::string& path, const std::map<std::string, Tensor>& tensors,
                    DType dtype = DType::F64);
std::map<std::string, Tensor> load_container(const std::string& path);

}  // namespace mqt
