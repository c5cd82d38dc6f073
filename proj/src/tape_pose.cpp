#include "dpdn/tape_pose.hpp"

namespace dpdn::tensor {

namespace {
constexpr double kSixDTol = 1e-9;

Tensor normalize_row(const Tensor& v) {
  return div_by_scalar(v, euclid_norm(v));
}
}  // namespace

Tensor rotation_from_6d(const Tensor& v6) {
  if (v6.rows() != 1 || v6.cols() != 6) {
    throw ShapeMismatch("rotation_from_6d expects a 1x6 row");
  }
  const Tensor a1 = slice_cols(v6, 0, 3);
  const Tensor a2 = slice_cols(v6, 3, 3);
  if (a1.value().norm() < kSixDTol) {
    throw DegenerateSixD("first 6D half has ~zero norm");
  }
  if (a2.value().norm() < kSixDTol) {
    throw DegenerateSixD("second 6D half has ~zero norm");
  }
  const Tensor b1 = normalize_row(a1);
  const Tensor a2n = normalize_row(a2);
  // resid = a2n - (b1 . a2n) b1
  const Tensor proj = sum_all(mul(b1, a2n));
  const Tensor resid = sub(a2n, mul_by_scalar(b1, proj));
  if (resid.value().norm() < kSixDTol) {
    throw DegenerateSixD("6D halves are parallel; rotation underdetermined");
  }
  const Tensor b2 = normalize_row(resid);
  const Tensor b3 = cross3(b1, b2);
  // Rows of the stacked matrix are b1,b2,b3; columns of R must be.
  return transpose(concat_rows({b1, b2, b3}));
}

PoseTensors compose_solution(const PoseTensors& pred,
                             const geometry::RigidScaleTransform& g) {
  Tape& tape = *pred.R.tape;
  const Tensor dr = tape.constant(g.dr.matrix());
  // R = dR * Rp
  const Tensor R = matmul(dr, pred.R);
  // t = dt + ds * dR * tp ; with 1x3 rows: (dR tp)^T = tp^T dR^T
  const Tensor drt = tape.constant(g.dr.matrix().transpose());
  Matrix dt(1, 3);
  dt.row(0) = g.dt.transpose();
  const Tensor t = add(tape.constant(dt), scale(matmul(pred.t, drt), g.ds));
  const Tensor s = scale(pred.s, g.ds);
  return PoseTensors{R, t, s};
}

PoseTensors lift_pose(Tape& tape, const geometry::Pose& pose) {
  Matrix t(1, 3), s(1, 3);
  t.row(0) = pose.t.transpose();
  s.row(0) = pose.s.transpose();
  return PoseTensors{tape.constant(pose.r.matrix()), tape.constant(t),
                     tape.constant(s)};
}

geometry::Pose extract_pose(const PoseTensors& p) {
  return geometry::Pose(geometry::Rotation(p.R.value()),
                        p.t.value().row(0).transpose(),
                        p.s.value().row(0).transpose());
}

}  // namespace dpdn::tensor
