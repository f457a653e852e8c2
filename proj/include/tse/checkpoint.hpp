#pragma once

// Binary checkpoint layout (all integers and doubles little-endian):
//
//   "TSECKPT\0"                          8-byte magic
//   u32 version                          currently 1
//   i32 n_rrg, n_mrb_per_rrg, n_scales, base_channels, sa_kernel, ca_reduction
//   u8  spatial_pooling
//   u64 seed
//   u32 record count
//   per record, in path order:
//     u32 path length, path bytes
//     u64 dims[4] (n, c, h, w)
//     f64 values[n*c*h*w]

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "tse/model.hpp"

namespace tse {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize(const ModelParams& params);
/// Rejects bad magic, unknown versions, truncation, and any record set that
/// does not match param_layout() of the embedded config.
ModelParams deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace tse
