#include "dpdn/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace dpdn::geometry {

namespace {
constexpr double kOrthoTol = 1e-6;
constexpr double kSixDTol = 1e-9;
}  // namespace

Rotation::Rotation(const Mat3& m) : m_(m) {
  const double ortho = (m.transpose() * m - Mat3::Identity()).norm();
  if (ortho > kOrthoTol) {
    throw InvalidRotation("rotation matrix is not orthonormal (residual " +
                          std::to_string(ortho) + ")");
  }
  if (std::abs(m.determinant() - 1.0) > kOrthoTol) {
    throw InvalidRotation("rotation matrix determinant is not +1");
  }
}

Rotation Rotation::rot_x(double rad) {
  Mat3 m;
  const double c = std::cos(rad), s = std::sin(rad);
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return Rotation(m);
}

Rotation Rotation::rot_y(double rad) {
  Mat3 m;
  const double c = std::cos(rad), s = std::sin(rad);
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return Rotation(m);
}

Rotation Rotation::rot_z(double rad) {
  Mat3 m;
  const double c = std::cos(rad), s = std::sin(rad);
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return Rotation(m);
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double rad) {
  const double n = axis.norm();
  if (n < 1e-12) throw InvalidRotation("axis-angle with zero axis");
  return Rotation(Eigen::AngleAxisd(rad, axis / n).toRotationMatrix());
}

Rotation Rotation::transposed() const {
  Rotation r;
  r.m_ = m_.transpose();
  return r;
}

Pose::Pose(const Rotation& r_, const Vec3& t_, const Vec3& s_)
    : r(r_), t(t_), s(s_) {
  if (!(s.x() > 0.0 && s.y() > 0.0 && s.z() > 0.0)) {
    throw InvalidPose("pose size components must be strictly positive");
  }
}

RigidScaleTransform::RigidScaleTransform(const Rotation& dr_, const Vec3& dt_,
                                         double ds_)
    : dr(dr_), dt(dt_), ds(ds_) {
  if (!(ds > 0.0)) throw InvalidPose("transform scale must be positive");
}

Eigen::MatrixXd PointSet::pts_matrix() const {
  Eigen::MatrixXd m(pts.size(), 3);
  for (size_t i = 0; i < pts.size(); ++i) m.row(i) = pts[i].transpose();
  return m;
}

Eigen::MatrixXd PointSet::attrs_matrix() const {
  if (!attrs || attrs->empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(attrs->size(), (*attrs)[0].size());
  for (size_t i = 0; i < attrs->size(); ++i) m.row(i) = (*attrs)[i].transpose();
  return m;
}

PointSet PointSet::from_matrix(const Eigen::MatrixXd& m) {
  PointSet p;
  p.pts.resize(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) p.pts[i] = m.row(i).transpose();
  return p;
}

Rotation rotation_from_6d(const Vec6& v) {
  const Vec3 a1 = v.head<3>();
  const Vec3 a2 = v.tail<3>();
  const double n1 = a1.norm();
  if (n1 < kSixDTol) throw DegenerateSixD("first 6D half has ~zero norm");
  const Vec3 b1 = a1 / n1;

  const double n2 = a2.norm();
  if (n2 < kSixDTol) throw DegenerateSixD("second 6D half has ~zero norm");
  const Vec3 a2n = a2 / n2;
  const Vec3 resid = a2n - b1.dot(a2n) * b1;
  const double nr = resid.norm();
  if (nr < kSixDTol) {
    throw DegenerateSixD("6D halves are parallel; rotation underdetermined");
  }
  const Vec3 b2 = resid / nr;
  const Vec3 b3 = b1.cross(b2);

  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b3;
  return Rotation(m);
}

Vec6 rotation_to_6d(const Rotation& r) {
  Vec6 v;
  v.head<3>() = r.matrix().col(0);
  v.tail<3>() = r.matrix().col(1);
  return v;
}

RigidScaleTransform sample_random_transform(Rng& rng) {
  const double a = rng.uniform(0.0, 2.0 * M_PI);
  const double b = rng.uniform(0.0, 2.0 * M_PI);
  const double c = rng.uniform(0.0, 2.0 * M_PI);
  const Rotation dr = Rotation::rot_z(a) * Rotation::rot_y(b) * Rotation::rot_x(c);
  Vec3 dt(rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02),
          rng.uniform(-0.02, 0.02));
  const double ds = rng.uniform(0.8, 1.2);
  return RigidScaleTransform(dr, dt, ds);
}

PointSet apply_inverse_transform(const PointSet& p,
                                 const RigidScaleTransform& g) {
  PointSet out;
  out.pts.resize(p.pts.size());
  const Mat3 rt = g.dr.matrix().transpose();
  const double inv_s = 1.0 / g.ds;
  for (size_t i = 0; i < p.pts.size(); ++i) {
    out.pts[i] = inv_s * (rt * (p.pts[i] - g.dt));
  }
  out.attrs = p.attrs;
  return out;
}

Pose compose_solution(const Pose& pred, const RigidScaleTransform& g) {
  const Rotation r = g.dr * pred.r;
  const Vec3 t = g.dt + g.ds * (g.dr.matrix() * pred.t);
  const Vec3 s = g.ds * pred.s;
  return Pose(r, t, s);
}

SimilarityFit umeyama_fit(const PointSet& src, const PointSet& dst) {
  const size_t n = src.size();
  if (n != dst.size() || n < 3) {
    throw DegenerateConfiguration("umeyama needs two sets of equal size >= 3");
  }

  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mu_s += src.pts[i];
    mu_d += dst.pts[i];
  }
  mu_s /= double(n);
  mu_d /= double(n);

  Mat3 cov = Mat3::Zero();      // cross-covariance dst x src
  Mat3 cov_src = Mat3::Zero();  // source scatter, for the rank check
  double var_s = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Vec3 ds_ = dst.pts[i] - mu_d;
    const Vec3 ss_ = src.pts[i] - mu_s;
    cov += ds_ * ss_.transpose();
    cov_src += ss_ * ss_.transpose();
    var_s += ss_.squaredNorm();
  }
  cov /= double(n);
  cov_src /= double(n);
  var_s /= double(n);

  // Collinear or duplicate sources leave the rotation underdetermined.
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov_src);
  const Vec3 ev = es.eigenvalues();  // ascending
  if (ev(2) < 1e-18 || ev(1) < 1e-12 * ev(2)) {
    throw DegenerateConfiguration("source points are collinear or coincident");
  }

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 d = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
    d(2) = -1.0;
  }
  const Mat3 rm =
      svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  const double scale = svd.singularValues().dot(d) / var_s;
  const Vec3 t = mu_d - scale * (rm * mu_s);

  SimilarityFit fit{Rotation(rm), t, scale};
  return fit;
}

double rotation_error_deg(const Rotation& r1, const Rotation& r2,
                          const std::optional<Vec3>& symmetry_axis) {
  double c;
  if (symmetry_axis) {
    const Vec3 a = symmetry_axis->normalized();
    c = (r1.matrix() * a).dot(r2.matrix() * a);
  } else {
    c = ((r1.matrix() * r2.matrix().transpose()).trace() - 1.0) / 2.0;
  }
  c = std::min(1.0, std::max(-1.0, c));
  return std::acos(c) * 180.0 / M_PI;
}

}  // namespace dpdn::geometry
