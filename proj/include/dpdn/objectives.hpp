#pragma once

#include <optional>
#include <vector>

#include "dpdn/model.hpp"
#include "dpdn/observation.hpp"
#include "dpdn/tape_pose.hpp"

namespace dpdn::objectives {

using geometry::Pose;
using geometry::RigidScaleTransform;
using model::PredictionBundle;
using tensor::Matrix;
using tensor::PoseTensors;
using tensor::Tensor;

struct LossWeights {
  double lambda1 = 0.2;  // inter-consistency weight
  double lambda2 = 0.02; // intra-consistency weight
  double beta1 = 5.0;    // Chamfer weight inside L_inter
  double beta2 = 1.0;    // pointwise-L2 weight inside L_inter
  double gamma1 = 5.0;   // Chamfer weight inside L_supervised
  double gamma2 = 1.0;   // Smooth-L1 weight inside L_supervised
};

// The two parallel branches of one instance: transforms, bundles, and the
// pose solutions for the untransformed observation derived from each branch.
// `second` is absent in single-branch (parallel-ablation) training.
struct DualPrediction {
  RigidScaleTransform g1;
  PredictionBundle b1;
  PoseTensors composed1;
  std::optional<RigidScaleTransform> g2;
  std::optional<PredictionBundle> b2;
  std::optional<PoseTensors> composed2;

  bool has_second() const { return composed2.has_value(); }
};

// |R1-R2|_F + |t1-t2|_2 + |s1-s2|_2.
Tensor pose_distance(const PoseTensors& p1, const PoseTensors& p2);
double pose_distance(const Pose& p1, const Pose& p2);

// Symmetric Chamfer distance over unordered point sets (M x 3).
Tensor chamfer_distance(const Tensor& q1, const Tensor& q2);
double chamfer_distance(const Matrix& q1, const Matrix& q2);

// Mean Euclidean distance over index-paired points (N x 3).
Tensor l2_pointwise_distance(const Tensor& q1, const Tensor& q2);
double l2_pointwise_distance(const Matrix& q1, const Matrix& q2);

// Smooth-L1 over index-paired points, mean over rows, sum over coordinates.
Tensor smooth_l1_distance(const Tensor& q1, const Tensor& q2);
double smooth_l1_distance(const Matrix& q1, const Matrix& q2);

// D_pose between the two composed solutions + beta1 * D_cham(Qv1, Qv2)
// + beta2 * D_L2(Qo1, Qo2).
Tensor inter_consistency_loss(const DualPrediction& dp, const LossWeights& w);

// D_SL1(Q_o, Q_o') with Q_o' the canonicalization of the given points under
// the given pose: (1/|s|_2) R^T (p - t) per point.
Tensor intra_consistency_loss(const PoseTensors& pose, const Tensor& q_o,
                              const Matrix& pts);
// Variant using the bundle's own predictions against the points it saw.
Tensor intra_consistency_loss(const PredictionBundle& bundle,
                              const Matrix& pts);

// Both branches against ground truth: D_pose terms + gamma1 * Chamfer on Q_v
// + gamma2 * Smooth-L1 on Q_o. Throws MissingLabels when gt is absent.
Tensor supervised_loss(const DualPrediction& dp,
                       const std::optional<GroundTruth>& gt,
                       const LossWeights& w);

// lambda1 * L_inter + lambda2 * (L_intra,1 + L_intra,2); obs_pts are the
// untransformed observed points shared by both branches.
Tensor self_supervised_loss(const DualPrediction& dp, const Matrix& obs_pts,
                            const LossWeights& w);

struct BatchItem {
  const ObservationTriplet* obs = nullptr;
  DualPrediction dp;
};

// Mixed-batch objective: (1/B1) sum alpha_i L_sup + (1/B2) sum (1-alpha_i)
// L_self with B1 = sum alpha_i, B2 = B - B1. A vanishing side is dropped.
Tensor batch_objective(const std::vector<BatchItem>& batch,
                       const LossWeights& w);

}  // namespace dpdn::objectives
