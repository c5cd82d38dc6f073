#include "dpdn/objectives.hpp"

namespace dpdn::objectives {

using tensor::add;
using tensor::chamfer;
using tensor::div_by_scalar;
using tensor::euclid_norm;
using tensor::matmul;
using tensor::rows_norm;
using tensor::scale;
using tensor::smooth_l1_mean;
using tensor::sub;
using tensor::sum_all;
using tensor::Tape;

Tensor pose_distance(const PoseTensors& p1, const PoseTensors& p2) {
  const Tensor dr = euclid_norm(sub(p1.R, p2.R));
  const Tensor dt = euclid_norm(sub(p1.t, p2.t));
  const Tensor ds = euclid_norm(sub(p1.s, p2.s));
  return add(add(dr, dt), ds);
}

double pose_distance(const Pose& p1, const Pose& p2) {
  Tape tape;
  return pose_distance(tensor::lift_pose(tape, p1), tensor::lift_pose(tape, p2))
      .scalar();
}

Tensor chamfer_distance(const Tensor& q1, const Tensor& q2) {
  return chamfer(q1, q2);
}

double chamfer_distance(const Matrix& q1, const Matrix& q2) {
  Tape tape;
  return chamfer(tape.constant(q1), tape.constant(q2)).scalar();
}

Tensor l2_pointwise_distance(const Tensor& q1, const Tensor& q2) {
  if (q1.rows() != q2.rows() || q1.cols() != q2.cols()) {
    throw LengthMismatch("l2_pointwise_distance: point lists differ in size");
  }
  return scale(sum_all(rows_norm(sub(q1, q2))), 1.0 / double(q1.rows()));
}

double l2_pointwise_distance(const Matrix& q1, const Matrix& q2) {
  Tape tape;
  return l2_pointwise_distance(tape.constant(q1), tape.constant(q2)).scalar();
}

Tensor smooth_l1_distance(const Tensor& q1, const Tensor& q2) {
  return smooth_l1_mean(q1, q2);
}

double smooth_l1_distance(const Matrix& q1, const Matrix& q2) {
  Tape tape;
  return smooth_l1_mean(tape.constant(q1), tape.constant(q2)).scalar();
}

Tensor inter_consistency_loss(const DualPrediction& dp, const LossWeights& w) {
  if (!dp.has_second()) {
    throw LengthMismatch("inter-consistency needs both branches");
  }
  const Tensor d_pose = pose_distance(dp.composed1, *dp.composed2);
  const Tensor d_cham = chamfer(dp.b1.q_v, dp.b2->q_v);
  const Tensor d_l2 = l2_pointwise_distance(dp.b1.q_o, dp.b2->q_o);
  return add(add(d_pose, scale(d_cham, w.beta1)), scale(d_l2, w.beta2));
}

Tensor intra_consistency_loss(const PoseTensors& pose, const Tensor& q_o,
                              const Matrix& pts) {
  if (q_o.rows() != pts.rows()) {
    throw LengthMismatch("intra-consistency: bundle and points differ in N");
  }
  Tape& tape = *q_o.tape;
  // Q_o' rows: ((p - t) R) / |s|_2  ==  (1/|s|_2) R^T (p - t) per point.
  const Tensor p = tape.constant(pts);
  const Tensor shifted = sub(p, tensor::tile(pose.t, pts.rows()));
  const Tensor rotated = matmul(shifted, pose.R);
  const Tensor q_prime = div_by_scalar(rotated, euclid_norm(pose.s));
  return smooth_l1_mean(q_o, q_prime);
}

Tensor intra_consistency_loss(const PredictionBundle& bundle,
                              const Matrix& pts) {
  return intra_consistency_loss(bundle.pose_tensors(), bundle.q_o, pts);
}

Tensor supervised_loss(const DualPrediction& dp,
                       const std::optional<GroundTruth>& gt,
                       const LossWeights& w) {
  if (!gt) throw MissingLabels("supervised loss on an unlabeled instance");
  Tape& tape = *dp.b1.q_o.tape;
  const PoseTensors gt_pose = tensor::lift_pose(tape, gt->pose);
  const Tensor gt_qv = tape.constant(gt->q_v);
  const Tensor gt_qo = tape.constant(gt->q_o);

  Tensor loss = pose_distance(dp.composed1, gt_pose);
  loss = add(loss, scale(chamfer(dp.b1.q_v, gt_qv), w.gamma1));
  loss = add(loss, scale(smooth_l1_mean(dp.b1.q_o, gt_qo), w.gamma2));
  if (dp.has_second()) {
    loss = add(loss, pose_distance(*dp.composed2, gt_pose));
    loss = add(loss, scale(chamfer(dp.b2->q_v, gt_qv), w.gamma1));
    loss = add(loss, scale(smooth_l1_mean(dp.b2->q_o, gt_qo), w.gamma2));
  }
  return loss;
}

Tensor self_supervised_loss(const DualPrediction& dp, const Matrix& obs_pts,
                            const LossWeights& w) {
  // Intra terms pair each branch's composed solution with the untransformed
  // points; this equals pairing the branch's own pose with its transformed
  // input.
  Tensor intra = intra_consistency_loss(dp.composed1, dp.b1.q_o, obs_pts);
  if (!dp.has_second()) {
    return scale(intra, w.lambda2);
  }
  intra = add(intra,
              intra_consistency_loss(*dp.composed2, dp.b2->q_o, obs_pts));
  const Tensor inter = inter_consistency_loss(dp, w);
  return add(scale(inter, w.lambda1), scale(intra, w.lambda2));
}

Tensor batch_objective(const std::vector<BatchItem>& batch,
                       const LossWeights& w) {
  if (batch.empty()) throw EmptyBatch("batch objective over nothing");
  Tape& tape = *batch[0].dp.b1.q_o.tape;

  int b1 = 0, b2 = 0;
  for (const auto& item : batch) {
    if (item.obs == nullptr) throw EmptyBatch("batch item without observation");
    (item.obs->alpha ? b1 : b2) += 1;
  }

  Tensor total;
  bool have = false;
  auto accumulate = [&](const Tensor& term) {
    total = have ? add(total, term) : term;
    have = true;
  };

  for (const auto& item : batch) {
    if (item.obs->alpha) {
      accumulate(
          scale(supervised_loss(item.dp, item.obs->gt, w), 1.0 / double(b1)));
    } else {
      accumulate(scale(self_supervised_loss(item.dp, item.obs->obs_pts, w),
                       1.0 / double(b2)));
    }
  }
  if (!have) {
    return tape.constant(Matrix::Zero(1, 1));
  }
  return total;
}

}  // namespace dpdn::objectives
