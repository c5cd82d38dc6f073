#include "dpdn/model.hpp"

#include <cmath>

namespace dpdn::model {

using tensor::add;
using tensor::avg_pool;
using tensor::concat_cols;
using tensor::linear;
using tensor::matmul;
using tensor::relu;
using tensor::softmax_rows;
using tensor::tile;
using tensor::use_param;

DpdnConfig DpdnConfig::defaults() {
  DpdnConfig c;
  c.enc_attr.hidden = {c.feat_dim, c.feat_dim};
  c.enc_pts.hidden = {c.feat_dim, c.feat_dim};
  c.deform.hidden = {256, 256};
  c.assign.hidden = {256, 256};
  c.shape.hidden = {256, 256};
  c.coord_embed.hidden = {256, 256};
  c.corr.hidden = {256, 256};
  c.fuse.hidden = {256, 256};
  c.head.hidden = {256, 256};
  return c;
}

namespace {

void init_mlp(ParamStore& store, const std::string& prefix, int in_dim,
              const MlpSpec& spec, int out_dim, uint64_t seed) {
  int cur = in_dim;
  int layer = 0;
  for (int h : spec.hidden) {
    store.create_uniform(prefix + ".w" + std::to_string(layer), cur, h, cur,
                         seed);
    store.create_uniform(prefix + ".b" + std::to_string(layer), 1, h, cur,
                         seed);
    cur = h;
    ++layer;
  }
  store.create_uniform(prefix + ".w" + std::to_string(layer), cur, out_dim,
                       cur, seed);
  store.create_uniform(prefix + ".b" + std::to_string(layer), 1, out_dim, cur,
                       seed);
}

}  // namespace

void init_params(ParamStore& store, const DpdnConfig& cfg, uint64_t seed) {
  const int d = cfg.feat_dim;
  const int e = cfg.embed_dim();
  init_mlp(store, "enc_attr", cfg.attr_dim, cfg.enc_attr, d, seed);
  init_mlp(store, "enc_pts_obs", 3, cfg.enc_pts, d, seed);
  init_mlp(store, "enc_pts_prior", 3, cfg.enc_pts, d, seed);
  init_mlp(store, "deform", 3 * d, cfg.deform, d, seed);
  init_mlp(store, "assign", 3 * d, cfg.assign, cfg.m_points, seed);
  init_mlp(store, "shape", d, cfg.shape, 3, seed);
  init_mlp(store, "embed_obs", 3, cfg.coord_embed, e, seed);
  init_mlp(store, "embed_canon", 3, cfg.coord_embed, e, seed);
  init_mlp(store, "corr", 3 * d + 2 * e, cfg.corr, d, seed);
  init_mlp(store, "fuse", 2 * d, cfg.fuse, d, seed);
  init_mlp(store, "head_rot", d, cfg.head, 6, seed);
  init_mlp(store, "head_trans", d, cfg.head, 3, seed);
  init_mlp(store, "head_size", d, cfg.head, 3, seed);
}

Tensor mlp_forward(Tape& tape, const ParamStore& store,
                   const std::string& prefix, const Tensor& x) {
  Tensor cur = x;
  int layer = 0;
  while (true) {
    const std::string w = prefix + ".w" + std::to_string(layer);
    const std::string b = prefix + ".b" + std::to_string(layer);
    if (!store.has(w)) {
      if (layer == 0) throw ShapeMismatch("unknown MLP prefix: " + prefix);
      return cur;
    }
    if (layer > 0) cur = relu(cur);
    cur = linear(cur, use_param(tape, store, w), use_param(tape, store, b));
    ++layer;
  }
}

TripletFeatures encode_triplet(Tape& tape, const ParamStore& store,
                               const DpdnConfig& cfg, const Matrix& obs_pts,
                               const Matrix& obs_attrs, const Matrix& prior) {
  if (obs_pts.rows() != cfg.n_points || obs_pts.cols() != 3) {
    throw ShapeMismatch("obs_pts must be N x 3");
  }
  if (obs_attrs.rows() != cfg.n_points || obs_attrs.cols() != cfg.attr_dim) {
    throw ShapeMismatch("obs_attrs must be N x k");
  }
  if (prior.rows() != cfg.m_points || prior.cols() != 3) {
    throw ShapeMismatch("prior must be M x 3");
  }
  // The geometric encoder sees mean-centered coordinates; raw coordinates
  // re-enter at the correspondence stage so translation stays recoverable.
  Matrix centered = obs_pts;
  centered.rowwise() -= obs_pts.colwise().mean();

  TripletFeatures out;
  out.f_i = mlp_forward(tape, store, "enc_attr", tape.constant(obs_attrs));
  out.f_p = mlp_forward(tape, store, "enc_pts_obs", tape.constant(centered));
  out.f_q = mlp_forward(tape, store, "enc_pts_prior", tape.constant(prior));
  return out;
}

DeformerOutput deform_prior(Tape& tape, const ParamStore& store,
                            const DpdnConfig& cfg, const TripletFeatures& f) {
  const Eigen::Index n = f.f_i.rows();
  const Eigen::Index m = f.f_q.rows();
  if (f.f_p.rows() != n || f.f_i.cols() != f.f_p.cols() ||
      f.f_q.cols() != f.f_i.cols()) {
    throw ShapeMismatch("triplet feature maps are inconsistent");
  }

  DeformerOutput out;
  const Tensor fi_avg = avg_pool(f.f_i);
  const Tensor fp_avg = avg_pool(f.f_p);

  if (cfg.use_deformer) {
    const Tensor din =
        concat_cols({f.f_q, tile(fi_avg, m), tile(fp_avg, m)});
    out.f_d = mlp_forward(tape, store, "deform", din);
    out.f_qv = add(f.f_q, out.f_d);
  } else {
    out.f_d = tape.constant(Matrix::Zero(m, f.f_q.cols()));
    out.f_qv = f.f_q;
  }

  const Tensor fqv_avg = avg_pool(out.f_qv);
  const Tensor ain = concat_cols({f.f_i, f.f_p, tile(fqv_avg, n)});
  out.A = softmax_rows(mlp_forward(tape, store, "assign", ain));
  out.q_v = mlp_forward(tape, store, "shape", out.f_qv);
  out.q_o = matmul(out.A, out.q_v);
  out.f_qo = matmul(out.A, out.f_qv);
  return out;
}

PoseSizeOutput estimate_pose_size(Tape& tape, const ParamStore& store,
                                  const DpdnConfig& cfg, const Tensor& f_i,
                                  const Tensor& f_p, const Tensor& f_qo,
                                  const Matrix& obs_pts, const Tensor& q_o) {
  const Eigen::Index n = f_i.rows();
  if (obs_pts.rows() != n || q_o.rows() != n) {
    throw ShapeMismatch("correspondence inputs must share N");
  }
  const Tensor e_p =
      mlp_forward(tape, store, "embed_obs", tape.constant(obs_pts));
  const Tensor e_q = mlp_forward(tape, store, "embed_canon", q_o);

  PoseSizeOutput out;
  out.f_corr = mlp_forward(tape, store, "corr",
                           concat_cols({f_i, e_p, f_p, e_q, f_qo}));
  const Tensor fc_avg = avg_pool(out.f_corr);
  const Tensor fused =
      mlp_forward(tape, store, "fuse", concat_cols({out.f_corr, tile(fc_avg, n)}));
  const Tensor f_pose = avg_pool(fused);

  out.r6d = mlp_forward(tape, store, "head_rot", f_pose);
  out.R = tensor::rotation_from_6d(out.r6d);
  out.t = mlp_forward(tape, store, "head_trans", f_pose);
  out.s = mlp_forward(tape, store, "head_size", f_pose);
  return out;
}

SharedFeatures encode_shared(Tape& tape, const ParamStore& store,
                             const DpdnConfig& cfg, const Matrix& obs_attrs,
                             const Matrix& prior) {
  if (obs_attrs.rows() != cfg.n_points || obs_attrs.cols() != cfg.attr_dim) {
    throw ShapeMismatch("obs_attrs must be N x k");
  }
  if (prior.rows() != cfg.m_points || prior.cols() != 3) {
    throw ShapeMismatch("prior must be M x 3");
  }
  SharedFeatures out;
  out.f_i = mlp_forward(tape, store, "enc_attr", tape.constant(obs_attrs));
  out.f_q = mlp_forward(tape, store, "enc_pts_prior", tape.constant(prior));
  return out;
}

PredictionBundle forward_branch(Tape& tape, const ParamStore& store,
                                const DpdnConfig& cfg,
                                const SharedFeatures& shared,
                                const Matrix& branch_pts) {
  if (branch_pts.rows() != cfg.n_points || branch_pts.cols() != 3) {
    throw ShapeMismatch("branch points must be N x 3");
  }
  Matrix centered = branch_pts;
  centered.rowwise() -= branch_pts.colwise().mean();

  TripletFeatures f;
  f.f_i = shared.f_i;
  f.f_q = shared.f_q;
  f.f_p = mlp_forward(tape, store, "enc_pts_obs", tape.constant(centered));

  const DeformerOutput d = deform_prior(tape, store, cfg, f);
  const PoseSizeOutput p = estimate_pose_size(tape, store, cfg, f.f_i, f.f_p,
                                              d.f_qo, branch_pts, d.q_o);
  PredictionBundle b;
  b.r6d = p.r6d;
  b.R = p.R;
  b.t = p.t;
  b.s = p.s;
  b.q_v = d.q_v;
  b.q_o = d.q_o;
  b.A = d.A;
  b.f_i = f.f_i;
  b.f_p = f.f_p;
  b.f_q = f.f_q;
  b.f_d = d.f_d;
  b.f_qv = d.f_qv;
  b.f_qo = d.f_qo;
  b.f_corr = p.f_corr;
  return b;
}

PredictionBundle dpdn_forward(Tape& tape, const ParamStore& store,
                              const DpdnConfig& cfg, const Matrix& obs_pts,
                              const Matrix& obs_attrs, const Matrix& prior) {
  const TripletFeatures f = encode_triplet(tape, store, cfg, obs_pts, obs_attrs, prior);
  const DeformerOutput d = deform_prior(tape, store, cfg, f);
  const PoseSizeOutput p =
      estimate_pose_size(tape, store, cfg, f.f_i, f.f_p, d.f_qo, obs_pts, d.q_o);

  PredictionBundle b;
  b.r6d = p.r6d;
  b.R = p.R;
  b.t = p.t;
  b.s = p.s;
  b.q_v = d.q_v;
  b.q_o = d.q_o;
  b.A = d.A;
  b.f_i = f.f_i;
  b.f_p = f.f_p;
  b.f_q = f.f_q;
  b.f_d = d.f_d;
  b.f_qv = d.f_qv;
  b.f_qo = d.f_qo;
  b.f_corr = p.f_corr;
  return b;
}

PredictionBundle dpdn_forward(Tape& tape, const ParamStore& store,
                              const DpdnConfig& cfg,
                              const ObservationTriplet& obs) {
  if (obs.prior == nullptr) throw ShapeMismatch("observation lacks a prior");
  return dpdn_forward(tape, store, cfg, obs.obs_pts, obs.obs_attrs, *obs.prior);
}

}  // namespace dpdn::model
