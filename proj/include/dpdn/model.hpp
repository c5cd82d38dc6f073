#pragma once

#include <string>
#include <vector>

#include "dpdn/observation.hpp"
#include "dpdn/params.hpp"
#include "dpdn/tape_pose.hpp"
#include "dpdn/tensor.hpp"

namespace dpdn::model {

using tensor::Matrix;
using tensor::ParamStore;
using tensor::Tape;
using tensor::Tensor;

// Hidden-layer widths of one MLP head; the output layer is appended on top.
struct MlpSpec {
  std::vector<int> hidden;
};

struct DpdnConfig {
  int n_points = 1024;
  int m_points = 1024;
  int feat_dim = 128;
  int attr_dim = 8;
  int n_categories = 3;

  // Per-point encoders: two hidden layers of width feat_dim by default.
  MlpSpec enc_attr;
  MlpSpec enc_pts;
  // Remaining heads default to three layers of width 256.
  MlpSpec deform;
  MlpSpec assign;
  MlpSpec shape;
  MlpSpec coord_embed;
  MlpSpec corr;
  MlpSpec fuse;
  MlpSpec head;

  int coord_embed_dim = 0;  // 0 -> feat_dim
  bool use_deformer = true;

  static DpdnConfig defaults();

  int embed_dim() const { return coord_embed_dim > 0 ? coord_embed_dim : feat_dim; }
};

// The five outputs of the network plus the correspondence matrix and the
// intermediate feature handles, all on one tape.
struct PredictionBundle {
  Tensor r6d;  // raw 1x6 rotation head output
  Tensor R;    // 3x3
  Tensor t;    // 1x3
  Tensor s;    // 1x3
  Tensor q_v;  // M x 3
  Tensor q_o;  // N x 3
  Tensor A;    // N x M, row-stochastic

  // diagnostics
  Tensor f_i, f_p, f_q, f_d, f_qv, f_qo, f_corr;

  tensor::PoseTensors pose_tensors() const { return {R, t, s}; }
  geometry::Rotation rotation() const { return geometry::Rotation(R.value()); }
  geometry::Vec3 translation() const { return t.value().row(0).transpose(); }
  geometry::Vec3 size_vec() const { return s.value().row(0).transpose(); }
};

// Registers every trainable parameter of the network, with per-parameter
// seeded uniform init. Must be called once before any forward.
void init_params(ParamStore& store, const DpdnConfig& cfg, uint64_t seed);

Tensor mlp_forward(Tape& tape, const ParamStore& store,
                   const std::string& prefix, const Tensor& x);

struct TripletFeatures {
  Tensor f_i;  // N x d
  Tensor f_p;  // N x d
  Tensor f_q;  // M x d
};

// Point-wise features of attributes, centered observed points, and the
// prior. No cross-point mixing happens before pooling.
TripletFeatures encode_triplet(Tape& tape, const ParamStore& store,
                               const DpdnConfig& cfg, const Matrix& obs_pts,
                               const Matrix& obs_attrs, const Matrix& prior);

struct DeformerOutput {
  Tensor f_d;   // M x d
  Tensor f_qv;  // M x d
  Tensor A;     // N x M
  Tensor q_v;   // M x 3
  Tensor q_o;   // N x 3
  Tensor f_qo;  // N x d
};

// Feature deformation field, correspondence matrix and the canonical sets.
// With the deformer disabled the field is pinned to zero and everything is
// learned from the undeformed prior features.
DeformerOutput deform_prior(Tape& tape, const ParamStore& store,
                            const DpdnConfig& cfg, const TripletFeatures& f);

struct PoseSizeOutput {
  Tensor r6d;
  Tensor R;
  Tensor t;
  Tensor s;
  Tensor f_corr;
};

PoseSizeOutput estimate_pose_size(Tape& tape, const ParamStore& store,
                                  const DpdnConfig& cfg, const Tensor& f_i,
                                  const Tensor& f_p, const Tensor& f_qo,
                                  const Matrix& obs_pts, const Tensor& q_o);

// Features of the inputs the parallel branches share (appearance attributes
// and the prior are not transformed, so these are encoded once per instance).
struct SharedFeatures {
  Tensor f_i;  // N x d
  Tensor f_q;  // M x d
};

SharedFeatures encode_shared(Tape& tape, const ParamStore& store,
                             const DpdnConfig& cfg, const Matrix& obs_attrs,
                             const Matrix& prior);

// One branch of the dual-transform pipeline on already-transformed points.
PredictionBundle forward_branch(Tape& tape, const ParamStore& store,
                                const DpdnConfig& cfg,
                                const SharedFeatures& shared,
                                const Matrix& branch_pts);

// Full network on explicit matrices.
PredictionBundle dpdn_forward(Tape& tape, const ParamStore& store,
                              const DpdnConfig& cfg, const Matrix& obs_pts,
                              const Matrix& obs_attrs, const Matrix& prior);

// Full network on an observation triplet.
PredictionBundle dpdn_forward(Tape& tape, const ParamStore& store,
                              const DpdnConfig& cfg,
                              const ObservationTriplet& obs);

}  // namespace dpdn::model
