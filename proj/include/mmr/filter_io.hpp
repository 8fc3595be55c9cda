#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mmr/model_matching.hpp"

namespace mmr {

// Filter-exchange file: "MDF1", little-endian u32 {version, F, T (0 = static), n_ears = 2, N_m},
// then complex float32 (re, im) pairs in index order [t][f][ear][mic].
inline constexpr std::uint32_t kFilterFormatVersion = 1;

std::vector<std::uint8_t> encode_filters(const PostFilterBank<double>& bank);
PostFilterBank<double> decode_filters(const std::vector<std::uint8_t>& bytes);

void write_filters(const std::filesystem::path& path, const PostFilterBank<double>& bank);
PostFilterBank<double> read_filters(const std::filesystem::path& path);

}  // namespace mmr
