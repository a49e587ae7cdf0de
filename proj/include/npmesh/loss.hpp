#pragma once

#include "npmesh/lod.hpp"
#include "npmesh/network.hpp"
#include "npmesh/tensor.hpp"

namespace npmesh {

struct LossBreakdown {
  double corr = 0, jacobian = 0, sparsity = 0, total = 0;
  double alpha = 1.0, beta = 0.1;
};

// Mean per-vertex Euclidean distance per level, summed over levels 1..L.
Tensor loss_corr_t(Tape& tape, const std::vector<Tensor>& pred_vertices,
                   const LodHierarchy& truth);

// Alternate reading of the correspondence term: Frobenius norm of the stacked
// difference over the vertex count, per level.
Tensor loss_corr_frob_t(Tape& tape, const std::vector<Tensor>& pred_vertices,
                        const LodHierarchy& truth);

// Per-face deformation Jacobians against the identity: J = T_pred * T_true^-1
// with T = [e1, e2, unit normal] columns; Frobenius norm, averaged per level
// and summed over levels.
Tensor loss_jacobian_t(Tape& tape, const std::vector<Tensor>& pred_vertices,
                       const LodHierarchy& truth);

// Face-count-normalized elementwise L1 of the learned features.
Tensor loss_sparsity_t(Tape& tape, const std::vector<Tensor>& learned);

Tensor total_loss_t(Tape& tape, Tensor corr, Tensor jacobian, Tensor sparsity, double alpha,
                    double beta);

struct LossTensors {
  Tensor corr, jacobian, sparsity, total;
  LossBreakdown values(double alpha, double beta) const;
};

LossTensors compute_losses(Tape& tape, const ForwardResult& fwd, const LodHierarchy& truth,
                           double alpha = 1.0, double beta = 0.1,
                           bool corr_frobenius = false);

// One of the 24 proper axis-aligned rotations, drawn from seed as 90-degree
// increments around each axis, applied to every level consistently.
Eigen::Matrix3d draw_axis_rotation(uint64_t seed);
LodHierarchy augment(const LodHierarchy& h, uint64_t seed);
LodHierarchy rotate_hierarchy(const LodHierarchy& h, const Eigen::Matrix3d& rot);

} // namespace npmesh
