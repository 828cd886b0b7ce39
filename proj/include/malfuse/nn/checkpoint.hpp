#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malfuse/nn/tensor.hpp"

namespace mf::nn {

inline constexpr char kCheckpointMagic[4] = {'M', 'F', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct TensorBlock {
    std::string name;
    Tensor2D value;
};

/// Decoded checkpoint: a JSON manifest plus named parameter blocks in
/// declaration order.
struct CheckpointData {
    nlohmann::json manifest;
    std::vector<TensorBlock> blocks;
};

// Layout:
//   "MFCK" | u16 version | u32 manifest length | manifest (UTF-8 JSON)
//   | f32 little-endian values of every block, in manifest order
// The manifest's "blocks" array lists {name, rows, cols} for each block.
std::vector<std::uint8_t> encode_checkpoint(const CheckpointData& data);
CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData load_checkpoint_file(const std::filesystem::path& path);

}  // namespace mf::nn
