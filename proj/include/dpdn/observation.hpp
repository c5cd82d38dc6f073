#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "dpdn/geometry.hpp"

namespace dpdn {

// Ground-truth annotation of one observation: pose plus the canonical
// complete shape (q_v, M x 3) and the canonical observation-ordered partial
// set (q_o, N x 3).
struct GroundTruth {
  geometry::Pose pose;
  Eigen::MatrixXd q_v;
  Eigen::MatrixXd q_o;
};

// One training / evaluation instance. Matrices are row-per-point. `prior`
// points at the category template owned by the dataset. alpha = 1 marks a
// fully annotated instance (gt present); alpha = 0 means gt is withheld from
// training even if it exists on disk for evaluation.
struct ObservationTriplet {
  std::string id;
  int category_id = 0;
  std::string domain;  // "sim" or "real"
  int alpha = 1;
  Eigen::MatrixXd obs_pts;    // N x 3, scene frame
  Eigen::MatrixXd obs_attrs;  // N x k
  const Eigen::MatrixXd* prior = nullptr;  // M x 3, canonical frame
  std::optional<GroundTruth> gt;
};

}  // namespace dpdn
