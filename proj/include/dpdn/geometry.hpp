#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "dpdn/errors.hpp"
#include "dpdn/rng.hpp"

namespace dpdn::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Proper rotation. The constructor enforces orthonormality and det = +1;
// everything downstream may assume both.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}
  explicit Rotation(const Mat3& m);

  static Rotation rot_x(double rad);
  static Rotation rot_y(double rad);
  static Rotation rot_z(double rad);
  static Rotation from_axis_angle(const Vec3& axis, double rad);

  const Mat3& matrix() const { return m_; }
  Rotation transposed() const;

  friend Rotation operator*(const Rotation& a, const Rotation& b) {
    Rotation r;
    r.m_ = a.m_ * b.m_;
    return r;
  }

 private:
  Mat3 m_;
};

// (R, t, s): rotation, translation and per-axis size. s strictly positive.
struct Pose {
  Rotation r;
  Vec3 t = Vec3::Zero();
  Vec3 s = Vec3::Ones();

  Pose() = default;
  Pose(const Rotation& r_, const Vec3& t_, const Vec3& s_);
};

// A rigid transform with a uniform scale, (dR, dt, ds), applied to observed
// point sets before they enter the network.
struct RigidScaleTransform {
  Rotation dr;
  Vec3 dt = Vec3::Zero();
  double ds = 1.0;

  RigidScaleTransform() = default;
  RigidScaleTransform(const Rotation& dr_, const Vec3& dt_, double ds_);

  static RigidScaleTransform identity() { return {}; }
};

// Ordered point list with optional per-point attribute vectors. Point order
// is meaningful: index j of a canonical set corresponds to index j of the
// observation it was learned from.
struct PointSet {
  std::vector<Vec3> pts;
  std::optional<std::vector<Eigen::VectorXd>> attrs;

  size_t size() const { return pts.size(); }

  Eigen::MatrixXd pts_matrix() const;
  Eigen::MatrixXd attrs_matrix() const;
  static PointSet from_matrix(const Eigen::MatrixXd& m);
};

// Gram-Schmidt map from the continuous 6D rotation representation to SO(3).
// Throws DegenerateSixD when the first half is ~0 or the second half is
// parallel to the first (residual below 1e-9 after normalization).
Rotation rotation_from_6d(const Vec6& v);

// First two columns of the matrix; left inverse of rotation_from_6d.
Vec6 rotation_to_6d(const Rotation& r);

// Random (dR, dt, ds): dR from three uniform Euler angles over [0, 2pi)
// (covers SO(3) but is not Haar-uniform), dt ~ U(-0.02, 0.02) per component,
// ds ~ U(0.8, 1.2).
RigidScaleTransform sample_random_transform(Rng& rng);

// Per point: (1/ds) * dR^T * (p - dt). Attributes carried unchanged.
PointSet apply_inverse_transform(const PointSet& p, const RigidScaleTransform& g);

// Pose of the untransformed observation implied by a prediction made on the
// transformed one: R = dR*Rp, t = dt + ds*dR*tp, s = ds*sp.
Pose compose_solution(const Pose& pred, const RigidScaleTransform& g);

struct SimilarityFit {
  Rotation r;
  Vec3 t;
  double scale;
};

// Least-squares similarity alignment: minimizes sum ||dst - (c*R*src + t)||^2
// via SVD of the cross-covariance with reflection correction. Throws
// DegenerateConfiguration for collinear or duplicate source sets (and for
// size mismatch / fewer than 3 points).
SimilarityFit umeyama_fit(const PointSet& src, const PointSet& dst);

// Geodesic angle in degrees, clamped to [0, 180]. With a symmetry axis a the
// error is the angle between r1*a and r2*a instead.
double rotation_error_deg(const Rotation& r1, const Rotation& r2,
                          const std::optional<Vec3>& symmetry_axis = {});

}  // namespace dpdn::geometry
