#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "warpadam/warp_matrix.hpp"

namespace warpadam {

// Warp checkpoint layout, all integers and floats little-endian:
//
//   "WARP"                      4 bytes magic
//   version                     u32 (currently 1)
//   count                       u64 number of matrices
//   per matrix:
//     form                      u8  (0 identity, 1 diagonal, 2 dense, 3 kronecker)
//     dim                       u64
//     factor_a, factor_b        u64 each, zero unless kronecker
//     entries                   f64 x (0 | d | d*d | a*a + b*b)
inline constexpr std::uint32_t kWarpCheckpointVersion = 1;

std::string encode_warps(const WarpSet& warps);
WarpSet decode_warps(const std::string& bytes);

void save_warps(const WarpSet& warps, const std::filesystem::path& path);
WarpSet load_warps(const std::filesystem::path& path);

}  // namespace warpadam
