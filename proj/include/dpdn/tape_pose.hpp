#pragma once

#include "dpdn/geometry.hpp"
#include "dpdn/tensor.hpp"

namespace dpdn::tensor {

// Differentiable pose triplet living on a tape: R is 3x3, t and s are 1x3.
struct PoseTensors {
  Tensor R;
  Tensor t;
  Tensor s;
};

// Gram-Schmidt 6D-to-rotation map as tape ops, mirroring
// geometry::rotation_from_6d exactly (same construction, same degeneracy
// checks, differentiable).
Tensor rotation_from_6d(const Tensor& v6);

// Tape version of geometry::compose_solution for a branch prediction made on
// a transformed observation.
PoseTensors compose_solution(const PoseTensors& pred,
                             const geometry::RigidScaleTransform& g);

// Lift a plain pose onto a tape as constants.
PoseTensors lift_pose(Tape& tape, const geometry::Pose& pose);

// Extract to a validated plain pose (throws if R or s violate invariants).
geometry::Pose extract_pose(const PoseTensors& p);

}  // namespace dpdn::tensor
