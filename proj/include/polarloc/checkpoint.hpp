#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "polarloc/tensor.hpp"

namespace ploc {

/// Named float32 tensors in the "PLOC" checkpoint layout:
///
///   "PLOC" | u32 version | u32 count |
///   count x ( u32 name_len | name bytes | u32 rank | u64 extents[rank] | f32 data )
///
/// All integers and floats are little-endian.
using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace ploc
