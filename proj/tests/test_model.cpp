#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dpdn/model.hpp"
#include "dpdn/objectives.hpp"

using namespace dpdn;
using namespace dpdn::model;
using tensor::GradientMap;
using tensor::Matrix;
using tensor::ParamStore;
using tensor::Tape;
using tensor::Tensor;

namespace {

DpdnConfig tiny_config(int n = 16, int m = 16, int d = 8) {
  DpdnConfig c;
  c.n_points = n;
  c.m_points = m;
  c.feat_dim = d;
  c.attr_dim = 6;
  c.n_categories = 3;
  c.enc_attr.hidden = {d, d};
  c.enc_pts.hidden = {d, d};
  c.deform.hidden = {d};
  c.assign.hidden = {d};
  c.shape.hidden = {d};
  c.coord_embed.hidden = {d};
  c.corr.hidden = {d};
  c.fuse.hidden = {d};
  c.head.hidden = {d};
  return c;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  }
  return m;
}

struct TinyInputs {
  Matrix pts, attrs, prior;
};

TinyInputs tiny_inputs(const DpdnConfig& cfg, Rng& rng) {
  TinyInputs in;
  in.pts = random_matrix(rng, cfg.n_points, 3, -0.3, 0.3);
  in.attrs = random_matrix(rng, cfg.n_points, cfg.attr_dim);
  in.prior = random_matrix(rng, cfg.m_points, 3, -0.5, 0.5);
  return in;
}

}  // namespace

TEST_CASE("encode_triplet emits the configured shapes at reference scale") {
  DpdnConfig cfg = tiny_config(1024, 1024, 128);
  cfg.enc_attr.hidden = {128, 128};
  cfg.enc_pts.hidden = {128, 128};
  cfg.attr_dim = 8;
  ParamStore store;
  // Only the encoders are needed for this check.
  Rng rng(1);
  {
    using namespace std::string_literals;
    ParamStore full;
    init_params(full, cfg, 11);
    for (const auto& [name, e] : full.entries()) {
      if (name.rfind("enc_", 0) == 0) {
        store.create(name, e.value.rows(), e.value.cols()) = e.value;
      }
    }
  }
  const TinyInputs in = [&] {
    TinyInputs t;
    Rng r2(2);
    t.pts = random_matrix(r2, 1024, 3);
    t.attrs = random_matrix(r2, 1024, 8);
    t.prior = random_matrix(r2, 1024, 3);
    return t;
  }();
  Tape tape;
  const TripletFeatures f =
      encode_triplet(tape, store, cfg, in.pts, in.attrs, in.prior);
  CHECK(f.f_i.rows() == 1024);
  CHECK(f.f_i.cols() == 128);
  CHECK(f.f_p.rows() == 1024);
  CHECK(f.f_p.cols() == 128);
  CHECK(f.f_q.rows() == 1024);
  CHECK(f.f_q.cols() == 128);
}

TEST_CASE("per-point encoders commute with joint permutations") {
  const DpdnConfig cfg = tiny_config();
  ParamStore store;
  init_params(store, cfg, 21);
  Rng rng(3);
  const TinyInputs in = tiny_inputs(cfg, rng);

  Tape t1;
  const TripletFeatures f1 =
      encode_triplet(t1, store, cfg, in.pts, in.attrs, in.prior);

  // joint permutation of points and attributes
  std::vector<Eigen::Index> perm(size_t(cfg.n_points));
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = Eigen::Index(i);
  rng.shuffle(perm);
  Matrix pts_p(cfg.n_points, 3), attrs_p(cfg.n_points, cfg.attr_dim);
  for (int i = 0; i < cfg.n_points; ++i) {
    pts_p.row(i) = in.pts.row(perm[size_t(i)]);
    attrs_p.row(i) = in.attrs.row(perm[size_t(i)]);
  }
  Tape t2;
  const TripletFeatures f2 =
      encode_triplet(t2, store, cfg, pts_p, attrs_p, in.prior);

  double worst = 0.0;
  for (int i = 0; i < cfg.n_points; ++i) {
    worst = std::max(worst, (f2.f_p.value().row(i) -
                             f1.f_p.value().row(perm[size_t(i)]))
                                .cwiseAbs()
                                .maxCoeff());
    worst = std::max(worst, (f2.f_i.value().row(i) -
                             f1.f_i.value().row(perm[size_t(i)]))
                                .cwiseAbs()
                                .maxCoeff());
  }
  CHECK(worst < 1e-9);

  // pooled vectors are permutation-invariant up to summation order
  Tape t3, t4;
  const Tensor p1 = tensor::avg_pool(t3.constant(f1.f_p.value()));
  const Tensor p2 = tensor::avg_pool(t4.constant(f2.f_p.value()));
  CHECK((p1.value() - p2.value()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("prior permutation permutes F_Q rows identically") {
  const DpdnConfig cfg = tiny_config();
  ParamStore store;
  init_params(store, cfg, 22);
  Rng rng(5);
  const TinyInputs in = tiny_inputs(cfg, rng);

  Tape t1;
  const Tensor f_q1 =
      encode_triplet(t1, store, cfg, in.pts, in.attrs, in.prior).f_q;

  Matrix prior_rev(cfg.m_points, 3);
  for (int i = 0; i < cfg.m_points; ++i) {
    prior_rev.row(i) = in.prior.row(cfg.m_points - 1 - i);
  }
  Tape t2;
  const Tensor f_q2 =
      encode_triplet(t2, store, cfg, in.pts, in.attrs, prior_rev).f_q;
  for (int i = 0; i < cfg.m_points; ++i) {
    CHECK((f_q2.value().row(i) - f_q1.value().row(cfg.m_points - 1 - i))
              .norm() == 0.0);
  }
}

TEST_CASE("deform_prior invariants") {
  const DpdnConfig cfg = tiny_config();
  ParamStore store;
  init_params(store, cfg, 23);
  Rng rng(7);
  const TinyInputs in = tiny_inputs(cfg, rng);

  Tape tape;
  const TripletFeatures f =
      encode_triplet(tape, store, cfg, in.pts, in.attrs, in.prior);
  const DeformerOutput d = deform_prior(tape, store, cfg, f);

  SUBCASE("A rows are stochastic") {
    const Matrix& a = d.A.value();
    for (int i = 0; i < cfg.n_points; ++i) {
      CHECK(a.row(i).minCoeff() >= 0.0);
      CHECK(std::abs(a.row(i).sum() - 1.0) < 1e-5);
    }
  }

  SUBCASE("Q_o lies in the per-coordinate envelope of Q_v") {
    const Matrix& qv = d.q_v.value();
    const Matrix& qo = d.q_o.value();
    for (int c = 0; c < 3; ++c) {
      const double lo = qv.col(c).minCoeff() - 1e-5;
      const double hi = qv.col(c).maxCoeff() + 1e-5;
      for (int i = 0; i < cfg.n_points; ++i) {
        CHECK(qo(i, c) >= lo);
        CHECK(qo(i, c) <= hi);
      }
    }
  }

  SUBCASE("one-hot rows of A copy rows of Q_v exactly") {
    Tape t2;
    Matrix onehot = Matrix::Zero(cfg.n_points, cfg.m_points);
    for (int i = 0; i < cfg.n_points; ++i) {
      onehot(i, (i * 3) % cfg.m_points) = 1.0;
    }
    const Tensor qo = tensor::matmul(t2.constant(onehot),
                                     t2.constant(d.q_v.value()));
    for (int i = 0; i < cfg.n_points; ++i) {
      CHECK((qo.value().row(i) - d.q_v.value().row((i * 3) % cfg.m_points))
                .norm() == 0.0);
    }
  }

  SUBCASE("disabled deformer pins the field to zero and F_Qv to F_Q") {
    DpdnConfig off = cfg;
    off.use_deformer = false;
    Tape t3;
    const TripletFeatures f3 =
        encode_triplet(t3, store, off, in.pts, in.attrs, in.prior);
    const DeformerOutput d3 = deform_prior(t3, store, off, f3);
    CHECK(d3.f_d.value().norm() == 0.0);
    CHECK((d3.f_qv.value() - f3.f_q.value()).norm() == 0.0);
  }
}

TEST_CASE("estimate_pose_size returns a valid rotation") {
  const DpdnConfig cfg = tiny_config();
  ParamStore store;
  init_params(store, cfg, 29);
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const TinyInputs in = tiny_inputs(cfg, rng);
    Tape tape;
    const PredictionBundle b =
        dpdn_forward(tape, store, cfg, in.pts, in.attrs, in.prior);
    const geometry::Mat3 m = b.R.value();
    CHECK((m.transpose() * m - geometry::Mat3::Identity()).norm() < 1e-9);
    CHECK(std::abs(m.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("pose loss reaches the heads and the shared trunk") {
  const DpdnConfig cfg = tiny_config();
  ParamStore store;
  init_params(store, cfg, 31);
  Rng rng(13);
  const TinyInputs in = tiny_inputs(cfg, rng);

  Tape tape;
  const PredictionBundle b =
      dpdn_forward(tape, store, cfg, in.pts, in.attrs, in.prior);
  const geometry::Pose target(geometry::Rotation::rot_z(0.3),
                              geometry::Vec3(0.05, -0.02, 0.1),
                              geometry::Vec3(0.2, 0.25, 0.3));
  const Tensor loss = objectives::pose_distance(
      b.pose_tensors(), tensor::lift_pose(tape, target));
  const GradientMap gm = tensor::backward(tape, loss, store);

  for (const char* prefix :
       {"head_rot", "head_trans", "head_size", "corr", "fuse", "enc_attr",
        "enc_pts_obs", "enc_pts_prior", "deform", "assign"}) {
    bool any_nonzero = false;
    for (const auto& [name, g] : gm.grads) {
      if (name.rfind(prefix, 0) == 0 && g.cwiseAbs().maxCoeff() > 0.0) {
        any_nonzero = true;
        break;
      }
    }
    INFO("prefix: " << prefix);
    CHECK(any_nonzero);
    CHECK(gm.disconnected.count(std::string(prefix) + ".w0") == 0);
  }
}

TEST_CASE("dpdn_forward bundle arity, determinism, translation sensitivity") {
  const DpdnConfig cfg = tiny_config();
  ParamStore store;
  init_params(store, cfg, 37);
  Rng rng(17);
  const TinyInputs in = tiny_inputs(cfg, rng);

  Tape t1;
  const PredictionBundle a =
      dpdn_forward(t1, store, cfg, in.pts, in.attrs, in.prior);
  CHECK(a.R.rows() == 3);
  CHECK(a.R.cols() == 3);
  CHECK(a.t.cols() == 3);
  CHECK(a.s.cols() == 3);
  CHECK(a.q_v.rows() == cfg.m_points);
  CHECK(a.q_v.cols() == 3);
  CHECK(a.q_o.rows() == cfg.n_points);
  CHECK(a.q_o.cols() == 3);
  CHECK(a.A.rows() == cfg.n_points);
  CHECK(a.A.cols() == cfg.m_points);

  Tape t2;
  const PredictionBundle b =
      dpdn_forward(t2, store, cfg, in.pts, in.attrs, in.prior);
  CHECK((a.q_o.value() - b.q_o.value()).norm() == 0.0);
  CHECK((a.R.value() - b.R.value()).norm() == 0.0);

  Matrix shifted = in.pts;
  shifted.array() += 0.1;
  Tape t3;
  const PredictionBundle c =
      dpdn_forward(t3, store, cfg, shifted, in.attrs, in.prior);
  const double delta = (c.t.value() - a.t.value()).norm() +
                       (c.q_o.value() - a.q_o.value()).norm();
  CHECK(delta > 0.0);
}

TEST_CASE("forward and backward stay finite over random draws") {
  const DpdnConfig cfg = tiny_config(12, 12, 6);
  Rng rng(41);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    ParamStore store;
    init_params(store, cfg, derive_seed(100, uint64_t(trial)));
    const TinyInputs in = tiny_inputs(cfg, rng);
    Tape tape;
    const PredictionBundle b =
        dpdn_forward(tape, store, cfg, in.pts, in.attrs, in.prior);
    const Tensor loss = tensor::add(
        tensor::add(tensor::euclid_norm(b.q_o), tensor::euclid_norm(b.s)),
        tensor::euclid_norm(b.R));
    const GradientMap gm = tensor::backward(tape, loss, store);
    REQUIRE(std::isfinite(loss.scalar()));
    for (const auto& [name, g] : gm.grads) {
      REQUIRE(g.allFinite());
    }
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("shape mismatches are rejected") {
  const DpdnConfig cfg = tiny_config();
  ParamStore store;
  init_params(store, cfg, 51);
  Rng rng(19);
  const TinyInputs in = tiny_inputs(cfg, rng);
  Tape tape;
  Matrix bad_pts = Matrix::Zero(cfg.n_points + 1, 3);
  CHECK_THROWS_AS(dpdn_forward(tape, store, cfg, bad_pts, in.attrs, in.prior),
                  ShapeMismatch);
  Matrix bad_attrs = Matrix::Zero(cfg.n_points, cfg.attr_dim + 2);
  CHECK_THROWS_AS(dpdn_forward(tape, store, cfg, in.pts, bad_attrs, in.prior),
                  ShapeMismatch);
}
