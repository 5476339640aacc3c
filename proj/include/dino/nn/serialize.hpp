#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dino/nn/network.hpp"

namespace dino::nn {

// Weight file layout (little-endian):
//   "DINOQ1"  version byte 0x01
//   per layer, in network order:
//     u32 dim count, u32 dims..., f32 weights..., f32 biases...
// Conv weights are [filters, kernel, kernel, in_c]; dense are [out, in].
inline constexpr char kWeightsMagic[6] = {'D', 'I', 'N', 'O', 'Q', '1'};
inline constexpr std::uint8_t kWeightsVersion = 0x01;

std::vector<std::uint8_t> encode_weights(const QNetwork<float>& net);

// Decodes a blob whose layer shapes must match `spec`. base_offset is added
// to the offsets reported in FormatError.
QNetwork<float> decode_weights(std::span<const std::uint8_t> bytes, const NetworkSpec& spec,
                               std::uint64_t base_offset = 0);

// Decodes a blob written for the three-conv 80x80x4 pyramid, recovering the
// filter counts and dense width from the stored dims.
QNetwork<float> decode_weights(std::span<const std::uint8_t> bytes, std::uint64_t base_offset = 0);

void save_weights(const QNetwork<float>& net, const std::string& path);
QNetwork<float> load_weights(const std::string& path);
QNetwork<float> load_weights(const std::string& path, const NetworkSpec& spec);

}  // namespace dino::nn
