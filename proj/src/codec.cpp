#include "npmesh/codec.hpp"

#include "npmesh/loss.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>

namespace npmesh {

namespace {

template <typename T>
void append_raw(std::vector<uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(v));
}

template <typename T>
T read_at(const std::vector<uint8_t>& bytes, size_t& off, size_t limit) {
  if (off + sizeof(T) > limit) throw CodecError("truncated stream");
  T v;
  std::memcpy(&v, bytes.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::vector<FeatureRecord> all_records(const std::vector<Eigen::MatrixXd>& learned) {
  std::vector<FeatureRecord> recs;
  for (size_t lvl = 0; lvl < learned.size(); ++lvl) {
    const auto& m = learned[lvl];
    if (m.cols() != kLearnedFeatureDim) throw CodecError("feature width must be 8");
    for (long f = 0; f < m.rows(); ++f) {
      FeatureRecord r;
      r.level = static_cast<uint8_t>(lvl);
      r.face = static_cast<uint32_t>(f);
      for (int k = 0; k < kLearnedFeatureDim; ++k)
        r.values[k] = static_cast<float>(m(f, k));
      recs.push_back(r);
    }
  }
  return recs;
}

} // namespace

std::vector<FeatureRecord> rank_features_magnitude(
    const std::vector<Eigen::MatrixXd>& learned) {
  std::vector<FeatureRecord> recs = all_records(learned);
  std::vector<double> norm(recs.size());
  for (size_t i = 0; i < recs.size(); ++i) {
    double s = 0;
    for (float v : recs[i].values) s += static_cast<double>(v) * v;
    norm[i] = std::sqrt(s);
  }
  std::vector<size_t> idx(recs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (norm[a] != norm[b]) return norm[a] > norm[b];
    if (recs[a].level != recs[b].level) return recs[a].level < recs[b].level;
    return recs[a].face < recs[b].face;
  });
  std::vector<FeatureRecord> out;
  out.reserve(recs.size());
  for (size_t i : idx) out.push_back(recs[i]);
  return out;
}

std::vector<FeatureRecord> rank_features_by_loss(const LodHierarchy& h, ParamStore& params,
                                                 const std::vector<Eigen::MatrixXd>& learned) {
  std::vector<FeatureRecord> recs = all_records(learned);

  auto masked_decode_loss = [&](int only_level, long only_face) {
    Tape tape;
    ModelContext ctx(tape, params, false, false);
    std::vector<Tensor> masked;
    for (size_t lvl = 0; lvl < learned.size(); ++lvl) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(learned[lvl].rows(), kLearnedFeatureDim);
      if (static_cast<int>(lvl) == only_level) m.row(only_face) = learned[lvl].row(only_face);
      masked.push_back(tape.input(m));
    }
    DecoderResult dec = decoder_forward(ctx, h.level_mesh(0), masked, h.L);
    double corr = loss_corr_t(tape, dec.pred_vertices, h).value()(0, 0);
    double jac = loss_jacobian_t(tape, dec.pred_vertices, h).value()(0, 0);
    return corr + jac;
  };

  const double baseline = masked_decode_loss(-1, -1);
  std::vector<double> score(recs.size());
  for (size_t i = 0; i < recs.size(); ++i)
    score[i] = baseline - masked_decode_loss(recs[i].level, recs[i].face);

  std::vector<size_t> idx(recs.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    if (recs[a].level != recs[b].level) return recs[a].level < recs[b].level;
    return recs[a].face < recs[b].face;
  });
  std::vector<FeatureRecord> out;
  out.reserve(recs.size());
  for (size_t i : idx) out.push_back(recs[i]);
  return out;
}

std::vector<uint8_t> encode_stream(const HalfEdgeMesh& coarse, int levels,
                                   const std::vector<FeatureRecord>& ranked, size_t k) {
  if (k > ranked.size()) throw CodecError("record count out of range");

  std::vector<uint8_t> payload;
  for (int v = 0; v < coarse.num_vertices(); ++v)
    for (int j = 0; j < 3; ++j)
      append_raw<float>(payload, static_cast<float>(coarse.vertices()(v, j)));
  for (int f = 0; f < coarse.num_faces(); ++f)
    for (int j = 0; j < 3; ++j)
      append_raw<uint32_t>(payload, static_cast<uint32_t>(coarse.faces()(f, j)));
  for (size_t i = 0; i < k; ++i) {
    const FeatureRecord& r = ranked[i];
    append_raw<uint8_t>(payload, r.level);
    append_raw<uint32_t>(payload, r.face);
    for (float v : r.values) append_raw<float>(payload, v);
  }

  uint32_t crc = static_cast<uint32_t>(crc32(0L, payload.data(), payload.size()));

  std::vector<uint8_t> out;
  out.insert(out.end(), {'N', 'P', 'M', '1'});
  append_raw<uint8_t>(out, 1);
  append_raw<uint8_t>(out, static_cast<uint8_t>(levels));
  append_raw<uint32_t>(out, static_cast<uint32_t>(coarse.num_vertices()));
  append_raw<uint32_t>(out, static_cast<uint32_t>(coarse.num_faces()));
  append_raw<uint32_t>(out, static_cast<uint32_t>(k));
  append_raw<uint32_t>(out, crc);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

DecodedStream parse_stream(const std::vector<uint8_t>& bytes, size_t prefix_bytes) {
  const size_t limit = std::min(prefix_bytes, bytes.size());
  size_t off = 0;
  if (limit < 4 || std::memcmp(bytes.data(), "NPM1", 4) != 0)
    throw CodecError("bad stream magic");
  off = 4;

  DecodedStream out;
  out.header.version = read_at<uint8_t>(bytes, off, limit);
  if (out.header.version != 1) throw CodecError("unsupported stream version");
  out.header.levels = read_at<uint8_t>(bytes, off, limit);
  out.header.num_coarse_vertices = read_at<uint32_t>(bytes, off, limit);
  out.header.num_coarse_faces = read_at<uint32_t>(bytes, off, limit);
  out.header.record_count = read_at<uint32_t>(bytes, off, limit);
  uint32_t crc_expected = read_at<uint32_t>(bytes, off, limit);
  const size_t payload_start = off;

  MatX3d V(out.header.num_coarse_vertices, 3);
  for (uint32_t v = 0; v < out.header.num_coarse_vertices; ++v)
    for (int j = 0; j < 3; ++j) V(v, j) = read_at<float>(bytes, off, limit);
  MatX3i F(out.header.num_coarse_faces, 3);
  for (uint32_t f = 0; f < out.header.num_coarse_faces; ++f)
    for (int j = 0; j < 3; ++j) {
      uint32_t idx = read_at<uint32_t>(bytes, off, limit);
      if (idx >= out.header.num_coarse_vertices) throw CodecError("corrupt coarse face index");
      F(f, j) = static_cast<int>(idx);
    }
  out.coarse = HalfEdgeMesh(std::move(V), std::move(F));
  out.coarse_block_bytes = off;

  // records: only whole ones within the prefix, aligned to record boundaries
  size_t remaining = limit - off;
  size_t available = std::min<size_t>(out.header.record_count,
                                      remaining / kFeatureRecordBytes);
  if (limit == bytes.size() && remaining % kFeatureRecordBytes != 0)
    throw CodecError("stream not aligned to record boundary");
  for (size_t i = 0; i < available; ++i) {
    FeatureRecord r;
    r.level = read_at<uint8_t>(bytes, off, limit);
    r.face = read_at<uint32_t>(bytes, off, limit);
    if (r.level >= out.header.levels) throw CodecError("record level out of range");
    for (auto& v : r.values) v = read_at<float>(bytes, off, limit);
    out.records.push_back(r);
  }

  const size_t full_payload = out.coarse_block_bytes - payload_start +
                              static_cast<size_t>(out.header.record_count) * kFeatureRecordBytes;
  if (limit >= payload_start + full_payload) {
    uint32_t crc = static_cast<uint32_t>(
        crc32(0L, bytes.data() + payload_start, full_payload));
    if (crc != crc_expected) throw CodecError("stream CRC mismatch");
  }
  return out;
}

HalfEdgeMesh decode_stream(const std::vector<uint8_t>& bytes, ParamStore& params,
                           size_t prefix_bytes, int target_level) {
  DecodedStream s = parse_stream(bytes, prefix_bytes);
  const int L = s.header.levels;
  if (model_levels(params) != L) throw CodecError("model level count does not match stream");

  // face counts per level from the coarse count
  std::vector<long> counts(L);
  long c = s.coarse.num_faces();
  for (int i = 0; i < L; ++i) {
    counts[i] = c;
    c *= 4;
  }

  Tape tape;
  ModelContext ctx(tape, params, false, false);
  std::vector<Tensor> masked;
  std::vector<Eigen::MatrixXd> feats;
  for (int i = 0; i < L; ++i)
    feats.push_back(Eigen::MatrixXd::Zero(counts[i], kLearnedFeatureDim));
  for (const FeatureRecord& r : s.records) {
    if (r.face >= static_cast<uint32_t>(feats[r.level].rows()))
      throw CodecError("record face index out of range");
    for (int k = 0; k < kLearnedFeatureDim; ++k)
      feats[r.level](r.face, k) = static_cast<double>(r.values[k]);
  }
  for (int i = 0; i < L; ++i) masked.push_back(tape.input(feats[i]));

  DecoderResult dec = decoder_forward(ctx, s.coarse, masked, target_level);
  return HalfEdgeMesh(dec.pred_vertices.back().value(), dec.faces.back());
}

double compression_ratio(int num_original_vertices, int num_coarse_vertices,
                         size_t transmitted_records) {
  if (num_original_vertices <= 0 || num_coarse_vertices <= 0)
    throw CodecError("compression_ratio: counts must be positive");
  return 3.0 * num_original_vertices /
         (3.0 * num_coarse_vertices +
          static_cast<double>(kLearnedFeatureDim) * static_cast<double>(transmitted_records));
}

std::vector<uint8_t> read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CodecError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CodecError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!out) throw CodecError("I/O failure writing " + path);
}

} // namespace npmesh
