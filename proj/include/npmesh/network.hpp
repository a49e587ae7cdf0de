#pragma once

#include "npmesh/features.hpp"
#include "npmesh/lod.hpp"
#include "npmesh/tensor.hpp"

namespace npmesh {

// Which learned per-face features the decoder may read; absent features are
// zeroed (the k=0 decode sees none at all).
struct TransmissionMask {
  std::vector<std::vector<bool>> available; // level 0..L-1

  static TransmissionMask full(const std::vector<int>& face_counts);
  static TransmissionMask none(const std::vector<int>& face_counts);
};

// Binds tape leaves to named parameters so gradients can be pulled back into
// the store after backward().
class ModelContext {
public:
  ModelContext(Tape& tape, ParamStore& store, bool train, bool update_running = true)
      : tape_(tape), store_(store), train_(train), update_running_(update_running) {}

  Tape& tape() { return tape_; }
  ParamStore& store() { return store_; }
  bool train() const { return train_; }

  Tensor param(const std::string& name);
  Tensor bn(Tensor x, const std::string& prefix); // prefix.gamma|beta|mean|var

  // adds each leaf's tape gradient into the store gradient
  void accumulate_grads();

private:
  Tape& tape_;
  ParamStore& store_;
  bool train_;
  bool update_running_;
  std::map<std::string, Tensor> leaves_;
};

// Encoder/decoder parameter widths for a given level count.
int encoder_conv_input_width(int level, int levels);
int decoder_conv_input_width(int level);

// Fresh model: Kaiming-uniform conv weights, zero-initialized displacement
// layers (so an untrained decode is plain midpoint subdivision).
ParamStore init_model(int levels, uint64_t seed);
int model_levels(const ParamStore& store);

// Order-invariant face convolution:
//   out = W0 x_f + W1 sum_k x_nk + W2 sum_k |x_n(k+1) - x_nk| + W3 sum_k |x_nk - x_f| + b
Tensor mesh_conv(Tensor x, const std::vector<std::array<int, 3>>& neighbors, Tensor w0, Tensor w1,
                 Tensor w2, Tensor w3, Tensor b);

Tensor avg_pool_4to1(Tensor x, const std::vector<std::array<int, 4>>& parent_children);

// center child copies the parent; corner child k averages the parent with the
// neighbor across the edge opposite corner k
Tensor upsample_1to4(Tensor x, const std::vector<std::array<int, 4>>& parent_children,
                     const std::vector<std::array<int, 3>>& parent_neighbors);

// Differentiable version of face_features_13 over a vertex tensor.
Tensor face_features_13_t(Tape& tape, Tensor vertices, const MatX3i& faces);

// Midpoint displacement from the decoder-input features of the two faces
// sharing the split edge: affine(concat(a+b, |a-b|)); symmetric in (a, b).
Tensor predict_midpoint_displacement(Tensor a, Tensor b, Tensor w, Tensor bias);

// f^{L-1} .. f^0 as tape tensors (index i holds f^i), computed from the
// ground-truth level meshes.
std::vector<Tensor> encoder_forward(ModelContext& ctx, const LodHierarchy& h);

struct DecoderResult {
  std::vector<Tensor> pred_vertices; // ~V^1 .. ~V^target
  std::vector<MatX3i> faces;         // F^1 .. F^target
};

// Client-side reconstruction. masked_learned holds f^0..f^{L-1} with
// unavailable rows already zeroed (pass tape zeros for a featureless decode).
DecoderResult decoder_forward(ModelContext& ctx, const HalfEdgeMesh& coarse,
                              const std::vector<Tensor>& masked_learned, int target_level);

Tensor apply_mask(Tape& tape, Tensor features, const std::vector<bool>& available);

struct ForwardResult {
  std::vector<Tensor> learned;       // f^0..f^{L-1}
  std::vector<Tensor> masked;        // after the mask
  DecoderResult decoded;
};

// Full encoder -> mask -> decoder pass over one hierarchy.
ForwardResult network_forward(ModelContext& ctx, const LodHierarchy& h,
                              const TransmissionMask* mask = nullptr);

// adjacency helper: the three neighbor faces of every face
std::vector<std::array<int, 3>> face_adjacency(const HalfEdgeMesh& mesh);

} // namespace npmesh
