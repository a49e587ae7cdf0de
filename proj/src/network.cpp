#include "npmesh/network.hpp"

#include "npmesh/rng.hpp"

namespace npmesh {

TransmissionMask TransmissionMask::full(const std::vector<int>& face_counts) {
  TransmissionMask m;
  for (int n : face_counts) m.available.emplace_back(n, true);
  return m;
}

TransmissionMask TransmissionMask::none(const std::vector<int>& face_counts) {
  TransmissionMask m;
  for (int n : face_counts) m.available.emplace_back(n, false);
  return m;
}

Tensor ModelContext::param(const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  Tensor t = tape_.input(store_.at(name).value);
  leaves_.emplace(name, t);
  return t;
}

Tensor ModelContext::bn(Tensor x, const std::string& prefix) {
  BatchNormState state;
  state.running_mean = store_.at(prefix + ".mean").value.row(0);
  state.running_var = store_.at(prefix + ".var").value.row(0);
  Tensor out = batchnorm(x, param(prefix + ".gamma"), param(prefix + ".beta"), state, train_,
                         0.1, 1e-5, update_running_);
  if (train_ && update_running_) {
    store_.at(prefix + ".mean").value.row(0) = state.running_mean;
    store_.at(prefix + ".var").value.row(0) = state.running_var;
  }
  return out;
}

void ModelContext::accumulate_grads() {
  for (auto& [name, leaf] : leaves_) store_.at(name).grad += leaf.grad();
}

int encoder_conv_input_width(int level, int levels) {
  return level == levels ? kMeshFeatureDim : kLearnedFeatureDim + kMeshFeatureDim;
}

int decoder_conv_input_width(int level) {
  return level == 0 ? kMeshFeatureDim + kLearnedFeatureDim
                    : 2 * kLearnedFeatureDim + kMeshFeatureDim;
}

namespace {

Eigen::MatrixXd kaiming_uniform(long rows, long cols, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(rows));
  Eigen::MatrixXd m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

void add_conv_block(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng) {
  for (int k = 0; k < 4; ++k)
    ps.add(prefix + ".conv.W" + std::to_string(k), kaiming_uniform(in, out, rng));
  ps.add(prefix + ".conv.b", Eigen::MatrixXd::Zero(1, out));
  ps.add(prefix + ".bn.gamma", Eigen::MatrixXd::Ones(1, out));
  ps.add(prefix + ".bn.beta", Eigen::MatrixXd::Zero(1, out));
  ps.add(prefix + ".bn.mean", Eigen::MatrixXd::Zero(1, out), false);
  ps.add(prefix + ".bn.var", Eigen::MatrixXd::Ones(1, out), false);
}

} // namespace

ParamStore init_model(int levels, uint64_t seed) {
  if (levels < 1) throw TensorError("model needs at least one level");
  ParamStore ps;
  Rng rng(seed);
  for (int i = levels; i >= 1; --i)
    add_conv_block(ps, "enc." + std::to_string(i), encoder_conv_input_width(i, levels),
                   kLearnedFeatureDim, rng);
  for (int i = 0; i < levels; ++i) {
    int in = decoder_conv_input_width(i);
    std::string prefix = "dec." + std::to_string(i);
    // zero init: an untrained decode reproduces midpoint subdivision
    ps.add(prefix + ".disp.W", Eigen::MatrixXd::Zero(2 * in, 3));
    ps.add(prefix + ".disp.b", Eigen::MatrixXd::Zero(1, 3));
    if (i < levels - 1) add_conv_block(ps, prefix, in, kLearnedFeatureDim, rng);
  }
  Eigen::MatrixXd lv(1, 1);
  lv(0, 0) = levels;
  ps.add("meta.levels", lv, false);
  return ps;
}

int model_levels(const ParamStore& store) {
  return static_cast<int>(store.at("meta.levels").value(0, 0));
}

std::vector<std::array<int, 3>> face_adjacency(const HalfEdgeMesh& mesh) {
  std::vector<std::array<int, 3>> adj(mesh.num_faces());
  for (int f = 0; f < mesh.num_faces(); ++f) adj[f] = mesh.face_neighbors(f);
  return adj;
}

Tensor mesh_conv(Tensor x, const std::vector<std::array<int, 3>>& neighbors, Tensor w0, Tensor w1,
                 Tensor w2, Tensor w3, Tensor b) {
  const size_t n = neighbors.size();
  if (static_cast<long>(n) != x.rows()) throw TensorError("mesh_conv: adjacency size mismatch");
  std::vector<int> n1(n), n2(n), n3(n);
  for (size_t f = 0; f < n; ++f) {
    n1[f] = neighbors[f][0];
    n2[f] = neighbors[f][1];
    n3[f] = neighbors[f][2];
  }
  Tensor x1 = gather_rows(x, n1), x2 = gather_rows(x, n2), x3 = gather_rows(x, n3);
  Tensor sum_n = add(add(x1, x2), x3);
  Tensor ring = add(add(abs_op(sub(x2, x1)), abs_op(sub(x3, x2))), abs_op(sub(x1, x3)));
  Tensor spokes = add(add(abs_op(sub(x1, x)), abs_op(sub(x2, x))), abs_op(sub(x3, x)));
  Tensor out = add(add(matmul(x, w0), matmul(sum_n, w1)),
                   add(matmul(ring, w2), matmul(spokes, w3)));
  return add_rowvec(out, b);
}

Tensor avg_pool_4to1(Tensor x, const std::vector<std::array<int, 4>>& parent_children) {
  const int np = static_cast<int>(parent_children.size());
  std::vector<int> ids(x.rows(), -1);
  for (int p = 0; p < np; ++p)
    for (int c : parent_children[p]) {
      if (c < 0 || c >= x.rows() || ids[c] != -1)
        throw TensorError("avg_pool_4to1: malformed parent map");
      ids[c] = p;
    }
  for (int id : ids)
    if (id < 0) throw TensorError("avg_pool_4to1: parent map does not cover all children");
  return segment_mean(x, ids, np);
}

Tensor upsample_1to4(Tensor x, const std::vector<std::array<int, 4>>& parent_children,
                     const std::vector<std::array<int, 3>>& parent_neighbors) {
  const int np = static_cast<int>(parent_children.size());
  if (static_cast<long>(np) != x.rows() || parent_neighbors.size() != static_cast<size_t>(np))
    throw TensorError("upsample_1to4: malformed maps");
  std::vector<int> ia(4 * np), ib(4 * np);
  for (int p = 0; p < np; ++p) {
    for (int k = 0; k < 3; ++k) {
      int child = parent_children[p][k];
      ia[child] = p;
      ib[child] = parent_neighbors[p][(k + 1) % 3]; // across the edge opposite corner k
    }
    int center = parent_children[p][3];
    ia[center] = p;
    ib[center] = p;
  }
  return scale(add(gather_rows(x, ia), gather_rows(x, ib)), 0.5);
}

Tensor face_features_13_t(Tape& tape, Tensor vertices, const MatX3i& faces) {
  const int nf = static_cast<int>(faces.rows());
  const int nv = static_cast<int>(vertices.rows());
  std::vector<int> i0(nf), i1(nf), i2(nf);
  for (int f = 0; f < nf; ++f) {
    i0[f] = faces(f, 0);
    i1[f] = faces(f, 1);
    i2[f] = faces(f, 2);
  }
  Tensor p0 = gather_rows(vertices, i0);
  Tensor p1 = gather_rows(vertices, i1);
  Tensor p2 = gather_rows(vertices, i2);

  Tensor e1 = sub(p1, p0), e2 = sub(p2, p0);
  Tensor c = cross_rows(e1, e2);
  Tensor area = scale(row_l2(c), 0.5);
  Tensor normal = normalize_rows(c);
  Tensor centroid = scale(add(add(p0, p1), p2), 1.0 / 3.0);

  auto angle = [&](Tensor a, Tensor apex, Tensor b) {
    Tensor u = sub(a, apex), v = sub(b, apex);
    return atan2_cols(row_l2(cross_rows(u, v)), dot_rows(u, v));
  };
  Tensor a0 = angle(p1, p0, p2);
  Tensor a1 = angle(p2, p1, p0);
  Tensor a2 = angle(p0, p2, p1);

  // area-weighted vertex normals: accumulate the face cross vectors
  std::vector<int> corner_face(3 * nf), corner_vertex(3 * nf);
  for (int f = 0; f < nf; ++f)
    for (int k = 0; k < 3; ++k) {
      corner_face[3 * f + k] = f;
      corner_vertex[3 * f + k] = faces(f, k);
    }
  Tensor vn = normalize_rows(segment_sum(gather_rows(c, corner_face), corner_vertex, nv));
  Tensor d0 = dot_rows(normal, gather_rows(vn, i0));
  Tensor d1 = dot_rows(normal, gather_rows(vn, i1));
  Tensor d2 = dot_rows(normal, gather_rows(vn, i2));

  Tensor out = concat(1, area, a0);
  out = concat(1, out, a1);
  out = concat(1, out, a2);
  out = concat(1, out, d0);
  out = concat(1, out, d1);
  out = concat(1, out, d2);
  out = concat(1, out, centroid);
  return concat(1, out, normal);
}

Tensor predict_midpoint_displacement(Tensor a, Tensor b, Tensor w, Tensor bias) {
  Tensor pair = concat(1, add(a, b), abs_op(sub(a, b)));
  return add_rowvec(matmul(pair, w), bias);
}

Tensor apply_mask(Tape& tape, Tensor features, const std::vector<bool>& available) {
  if (features.rows() != static_cast<long>(available.size()))
    throw TensorError("mask size mismatch");
  Eigen::MatrixXd m(features.rows(), features.cols());
  for (long i = 0; i < features.rows(); ++i)
    m.row(i).setConstant(available[i] ? 1.0 : 0.0);
  return mul(features, tape.input(m));
}

namespace {

Tensor conv_block(ModelContext& ctx, Tensor x, const std::vector<std::array<int, 3>>& adj,
                  const std::string& prefix) {
  Tensor y = mesh_conv(x, adj, ctx.param(prefix + ".conv.W0"), ctx.param(prefix + ".conv.W1"),
                       ctx.param(prefix + ".conv.W2"), ctx.param(prefix + ".conv.W3"),
                       ctx.param(prefix + ".conv.b"));
  return relu(ctx.bn(y, prefix + ".bn"));
}

} // namespace

std::vector<Tensor> encoder_forward(ModelContext& ctx, const LodHierarchy& h) {
  const int L = h.L;
  std::vector<Tensor> learned(L);
  Tensor x = ctx.tape().input(face_features_13(h.level_mesh(L)));
  for (int i = L; i >= 1; --i) {
    Tensor y = conv_block(ctx, x, face_adjacency(h.level_mesh(i)), "enc." + std::to_string(i));
    learned[i - 1] = avg_pool_4to1(y, h.parent_children[i - 1]);
    if (i - 1 >= 1)
      x = concat(1, learned[i - 1], ctx.tape().input(face_features_13(h.level_mesh(i - 1))));
  }
  return learned;
}

DecoderResult decoder_forward(ModelContext& ctx, const HalfEdgeMesh& coarse,
                              const std::vector<Tensor>& masked_learned, int target_level) {
  const int L = static_cast<int>(masked_learned.size());
  if (target_level < 1 || target_level > L)
    throw TensorError("decoder target level out of range");
  Tape& tape = ctx.tape();

  DecoderResult out;
  Tensor V = tape.input(coarse.vertices());
  MatX3i F = coarse.faces();
  Tensor X = concat(1, tape.input(face_features_13(coarse)), masked_learned[0]);

  for (int i = 0; i < target_level; ++i) {
    HalfEdgeMesh level_mesh(V.value(), F);
    const auto& edges = level_mesh.edges(); // sorted; same order as subdivide_connectivity
    const int ne = level_mesh.num_edges();
    std::vector<int> fa(ne), fb(ne), ea(ne), eb(ne);
    for (int e = 0; e < ne; ++e) {
      auto [a, b] = edges[e];
      ea[e] = a;
      eb[e] = b;
      int h0 = -1;
      for (int hf : level_mesh.vertex_faces()[a]) {
        for (int k = 0; k < 3; ++k) {
          int hh = 3 * hf + k;
          if (level_mesh.origin(hh) == a && level_mesh.dest(hh) == b) h0 = hh;
          if (level_mesh.origin(hh) == b && level_mesh.dest(hh) == a) h0 = level_mesh.twin(hh);
        }
      }
      if (h0 < 0) throw TensorError("decoder: broken connectivity");
      fa[e] = level_mesh.face_of(h0);
      fb[e] = level_mesh.face_of(level_mesh.twin(h0));
      if (fa[e] > fb[e]) std::swap(fa[e], fb[e]);
    }

    std::string prefix = "dec." + std::to_string(i);
    Tensor disp = predict_midpoint_displacement(gather_rows(X, fa), gather_rows(X, fb),
                                                ctx.param(prefix + ".disp.W"),
                                                ctx.param(prefix + ".disp.b"));
    Tensor mids = add(scale(add(gather_rows(V, ea), gather_rows(V, eb)), 0.5), disp);
    Tensor Vn = concat(0, V, mids);

    SubdivisionStep step = subdivide_connectivity(F, level_mesh.num_vertices());

    if (i + 1 < target_level) {
      Tensor up = upsample_1to4(X, step.parent_children, face_adjacency(level_mesh));
      Tensor dec_feat = conv_block(ctx, up, [&] {
        HalfEdgeMesh next_mesh(Vn.value(), step.faces);
        return face_adjacency(next_mesh);
      }(), prefix);
      Tensor fmesh = face_features_13_t(tape, Vn, step.faces);
      X = concat(1, concat(1, dec_feat, masked_learned[i + 1]), fmesh);
    }

    V = Vn;
    F = step.faces;
    out.pred_vertices.push_back(V);
    out.faces.push_back(F);
  }
  return out;
}

ForwardResult network_forward(ModelContext& ctx, const LodHierarchy& h,
                              const TransmissionMask* mask) {
  ForwardResult r;
  r.learned = encoder_forward(ctx, h);
  r.masked = r.learned;
  if (mask) {
    for (int i = 0; i < h.L; ++i)
      r.masked[i] = apply_mask(ctx.tape(), r.learned[i], mask->available[i]);
  }
  r.decoded = decoder_forward(ctx, h.level_mesh(0), r.masked, h.L);
  return r;
}

} // namespace npmesh
