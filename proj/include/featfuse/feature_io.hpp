#pragma once

#include <filesystem>

#include "featfuse/fusion.hpp"

// Binary payloads, all little-endian:
//   dense   : u32 H_f, u32 W_f, u32 C, then H_f*W_f*C float32 (row-major, C fastest)
//   objects : u32 V, u32 N, u32 C, ceil(V*N/8) validity bytes (bit j of the
//             packed (v, n-1) row-major index, LSB first), then V*N*C float32
//   cloud   : u32 M, u32 C, M*3 float32 xyz, M*C float32 features, M uint8 flags
namespace featfuse::io {

void WriteDenseFeatures(const std::filesystem::path& path, const DenseFeatureMap& map);
DenseFeatureMap ReadDenseFeatures(const std::filesystem::path& path);

void WriteObjectFeatures(const std::filesystem::path& path, const ObjectFeatures& features);
ObjectFeatures ReadObjectFeatures(const std::filesystem::path& path);

void WriteFeatureCloud(const std::filesystem::path& path, const FeatureCloud& cloud);
FeatureCloud ReadFeatureCloud(const std::filesystem::path& path,
                              Provenance provenance = Provenance::kFusedTarget);

}  // namespace featfuse::io
