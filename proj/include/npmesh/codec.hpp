#pragma once

#include "npmesh/lod.hpp"
#include "npmesh/network.hpp"

#include <cstdint>

namespace npmesh {

struct CodecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FeatureRecord {
  uint8_t level = 0;
  uint32_t face = 0;
  std::array<float, kLearnedFeatureDim> values{};
};

// Per-record wire size: u8 level + u32 face + 8 x f32.
constexpr size_t kFeatureRecordBytes = 1 + 4 + 4 * kLearnedFeatureDim;

// Descending per-face L2 norm of the 8-vector across all levels jointly;
// ties broken by (level asc, face asc).
std::vector<FeatureRecord> rank_features_magnitude(
    const std::vector<Eigen::MatrixXd>& learned);

// Each feature scored by how much unmasking it alone lowers
// corr + jacobian relative to the fully masked decode.
std::vector<FeatureRecord> rank_features_by_loss(const LodHierarchy& h, ParamStore& params,
                                                 const std::vector<Eigen::MatrixXd>& learned);

struct StreamHeader {
  uint8_t version = 1;
  uint8_t levels = 0;
  uint32_t num_coarse_vertices = 0;
  uint32_t num_coarse_faces = 0;
  uint32_t record_count = 0;
};

// magic "NPM1", u8 version, u8 L, u32 |V0|, u32 |F0|, u32 k, u32 CRC32 of the
// payload; payload = coarse vertices (3 x f32), coarse faces (3 x u32), then
// k feature records.
std::vector<uint8_t> encode_stream(const HalfEdgeMesh& coarse, int levels,
                                   const std::vector<FeatureRecord>& ranked, size_t k);

struct DecodedStream {
  StreamHeader header;
  HalfEdgeMesh coarse;
  std::vector<FeatureRecord> records; // those present in the prefix
  size_t coarse_block_bytes = 0;      // header + coarse payload
};

// Parses the longest whole-record prefix of the first prefix_bytes bytes.
// Throws on bad magic, truncated coarse block, or CRC mismatch (the CRC is
// only checkable when the full payload is present).
DecodedStream parse_stream(const std::vector<uint8_t>& bytes,
                           size_t prefix_bytes = SIZE_MAX);

// Reconstructs the mesh at target_level from a stream prefix.
HalfEdgeMesh decode_stream(const std::vector<uint8_t>& bytes, ParamStore& params,
                           size_t prefix_bytes, int target_level);

// CR = 3|V| / (3|V0| + 8k); topology is not counted.
double compression_ratio(int num_original_vertices, int num_coarse_vertices,
                         size_t transmitted_records);

std::vector<uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const std::vector<uint8_t>& bytes);

} // namespace npmesh
