#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dpdn/datagen.hpp"
#include "dpdn/objectives.hpp"

using namespace dpdn;
using namespace dpdn::datagen;
using geometry::Rotation;
using geometry::Vec3;

namespace fs = std::filesystem;

namespace {

DatasetSpec tiny_spec(uint64_t seed = 501) {
  DatasetSpec spec;
  spec.seed = seed;
  spec.n_points = 64;
  spec.m_points = 96;
  spec.attr_dim = 8;
  spec.categories = default_categories();
  spec.sim_train = 9;
  spec.real_train = 6;
  spec.real_test = 6;
  spec.gap.scale_shift = 0.15;
  spec.gap.extra_field_amp = 0.05;
  spec.gap.sigma_depth = 0.004;
  spec.gap.sigma_attr = 0.2;
  return spec;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

double bbox_diag(const Eigen::MatrixXd& pts) {
  return (pts.colwise().maxCoeff() - pts.colwise().minCoeff()).norm();
}

}  // namespace

TEST_CASE("generate_category normalization and determinism") {
  const auto cats = default_categories();
  Rng rng(1);
  const Category cat = generate_category(cats[0], 0, 1024, rng);
  CHECK(cat.template_pts.rows() == 1024);

  // unit-diagonal normalization: the bbox extent vector has norm 1 and the
  // template fits inside the unit cube centered at the origin
  CHECK(bbox_diag(cat.template_pts) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(cat.template_pts.cwiseAbs().maxCoeff() <= 0.5 + 1e-12);
  const Eigen::RowVector3d center = 0.5 * (cat.template_pts.colwise().maxCoeff() +
                                           cat.template_pts.colwise().minCoeff());
  CHECK(center.norm() < 1e-9);

  Rng rng2(1);
  const Category again = generate_category(cats[0], 0, 1024, rng2);
  CHECK((again.template_pts - cat.template_pts).norm() == 0.0);
  CHECK((again.template_normals - cat.template_normals).norm() == 0.0);
}

TEST_CASE("generate_category rejects bad specs") {
  CategorySpec bad;
  bad.name = "bad";
  bad.family = ShapeFamily::Composite;  // no parts
  Rng rng(2);
  CHECK_THROWS_AS(generate_category(bad, 0, 128, rng), InvalidSpec);
}

TEST_CASE("synthesize_instance deformation behavior") {
  auto cats = default_categories();
  Rng rng(3);
  const Category cat = generate_category(cats[1], 1, 256, rng);

  SUBCASE("zero amplitudes reproduce the template") {
    Category frozen = cat;
    frozen.spec.deform.scale_jitter = 0.0;
    frozen.spec.deform.field_amp = 0.0;
    Rng r(4);
    const Instance inst = synthesize_instance(frozen, r);
    CHECK((inst.canonical - frozen.template_pts).norm() < 1e-12);
  }

  SUBCASE("non-zero amplitude produces a measurably different shape") {
    Rng r(5);
    const Instance inst = synthesize_instance(cat, r);
    CHECK(objectives::chamfer_distance(cat.template_pts, inst.canonical) > 0.0);
  }

  SUBCASE("field displacement is bounded by the configured amplitude") {
    Category jitterless = cat;
    jitterless.spec.deform.scale_jitter = 0.0;
    jitterless.spec.deform.field_amp = 0.07;
    Rng r(6);
    const Instance inst = synthesize_instance(jitterless, r);
    const double max_disp =
        (inst.raw_deformed - inst.scaled_base).rowwise().norm().maxCoeff();
    CHECK(max_disp <= 0.07 + 1e-12);
  }

  SUBCASE("canonical output is unit-diagonal") {
    Rng r(7);
    const Instance inst = synthesize_instance(cat, r);
    CHECK(bbox_diag(inst.canonical) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("render_observation geometry and noise bounds") {
  auto cats = default_categories();
  Rng rng(8);
  const Category cat = generate_category(cats[0], 0, 256, rng);
  const Instance inst = synthesize_instance(cat, rng);
  const Eigen::RowVector3d ext = inst.canonical.colwise().maxCoeff() -
                                 inst.canonical.colwise().minCoeff();
  const double diag = 0.25;
  const geometry::Pose pose(Rotation::rot_y(0.8), Vec3(0.1, -0.05, 0.2),
                            diag * ext.transpose());

  SUBCASE("sim domain: exact canonicalization identity") {
    Rng r(9);
    const ObservationTriplet obs =
        render_observation(cat, inst, pose, "sim", {}, 128, 8, 3, r);
    CHECK(obs.obs_pts.rows() == 128);
    CHECK(obs.alpha == 1);
    REQUIRE(obs.gt.has_value());
    const double inv = 1.0 / pose.s.norm();
    double worst = 0.0;
    for (int i = 0; i < 128; ++i) {
      const Vec3 q = inv * (pose.r.matrix().transpose() *
                            (Vec3(obs.obs_pts.row(i).transpose()) - pose.t));
      worst = std::max(worst, (q - Vec3(obs.gt->q_o.row(i).transpose())).norm());
    }
    CHECK(worst < 1e-9);
  }

  SUBCASE("real domain: residual RMS bounded by 3 sigma / |s|") {
    GapSpec gap;
    gap.sigma_depth = 0.005;
    Rng r(10);
    const ObservationTriplet obs =
        render_observation(cat, inst, pose, "real", gap, 128, 8, 3, r);
    CHECK(obs.alpha == 0);
    const double inv = 1.0 / pose.s.norm();
    double sum_sq = 0.0;
    for (int i = 0; i < 128; ++i) {
      const Vec3 q = inv * (pose.r.matrix().transpose() *
                            (Vec3(obs.obs_pts.row(i).transpose()) - pose.t));
      sum_sq += (q - Vec3(obs.gt->q_o.row(i).transpose())).squaredNorm();
    }
    const double rms = std::sqrt(sum_sq / 128.0);
    CHECK(rms <= 3.0 * gap.sigma_depth / pose.s.norm());
  }

  SUBCASE("observed points sit on the visible half") {
    Rng r(11);
    const ObservationTriplet obs =
        render_observation(cat, inst, pose, "sim", {}, 128, 8, 3, r);
    // every observed point canonicalizes onto some instance point
    double worst = 0.0;
    for (int i = 0; i < 128; ++i) {
      double best = 1e9;
      for (int j = 0; j < inst.canonical.rows(); ++j) {
        best = std::min(best,
                        (obs.gt->q_o.row(i) - inst.canonical.row(j)).norm());
      }
      worst = std::max(worst, best);
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("make_split writes a loadable, reproducible dataset") {
  const DatasetSpec spec = tiny_spec();
  const std::string dir = "datagen_test_out";
  const std::string dir2 = "datagen_test_out2";
  fs::remove_all(dir);
  fs::remove_all(dir2);
  make_split(spec, dir);
  make_split(spec, dir2);

  SUBCASE("generation is bitwise reproducible") {
    CHECK(slurp(fs::path(dir) / "manifest.json") ==
          slurp(fs::path(dir2) / "manifest.json"));
    CHECK(slurp(fs::path(dir) / "real_eval_labels.json") ==
          slurp(fs::path(dir2) / "real_eval_labels.json"));
    CHECK(slurp(fs::path(dir) / "records/sim_train_00000.json") ==
          slurp(fs::path(dir2) / "records/sim_train_00000.json"));
    CHECK(slurp(fs::path(dir) / "records/real_test_00005.json") ==
          slurp(fs::path(dir2) / "records/real_test_00005.json"));
  }

  SUBCASE("alpha flags and label placement follow the split contract") {
    const Dataset ds = Dataset::load(dir);
    CHECK(ds.sim_train.size() == 9);
    CHECK(ds.real_train.size() == 6);
    CHECK(ds.real_test.size() == 6);
    for (const auto& o : ds.sim_train) {
      CHECK(o.alpha == 1);
      CHECK(o.gt.has_value());
    }
    for (const auto& o : ds.real_train) {
      CHECK(o.alpha == 0);
      CHECK(!o.gt.has_value());  // withheld from the trainer
    }
    for (const auto& o : ds.real_test) CHECK(!o.gt.has_value());
    // the record files of real records carry no inline gt
    const std::string raw = slurp(fs::path(dir) / "records/real_train_00000.json");
    CHECK(raw.find("\"gt\"") == std::string::npos);
  }

  SUBCASE("eval labels attach from the side file") {
    Dataset ds = Dataset::load(dir);
    ds.attach_real_labels();
    for (const auto& o : ds.real_test) {
      REQUIRE(o.gt.has_value());
      CHECK(o.alpha == 0);
      // GT self-consistency within float32 quantization + depth noise
      const double inv = 1.0 / o.gt->pose.s.norm();
      double sum_sq = 0.0;
      for (int i = 0; i < o.obs_pts.rows(); ++i) {
        const Vec3 q = inv * (o.gt->pose.r.matrix().transpose() *
                              (Vec3(o.obs_pts.row(i).transpose()) - o.gt->pose.t));
        sum_sq += (q - Vec3(o.gt->q_o.row(i).transpose())).squaredNorm();
      }
      const double rms = std::sqrt(sum_sq / double(o.obs_pts.rows()));
      CHECK(rms <= 3.0 * spec.gap.sigma_depth / o.gt->pose.s.norm() + 1e-5);
    }
  }

  SUBCASE("3:1 batches are drawable from the generated counts") {
    Dataset ds = Dataset::load(dir);
    std::vector<const ObservationTriplet*> labeled, unlabeled;
    for (const auto& o : ds.sim_train) labeled.push_back(&o);
    for (const auto& o : ds.real_train) unlabeled.push_back(&o);
    BatchSampler sampler(labeled, unlabeled);
    Rng rng(13);
    sampler.new_epoch(rng);
    const auto batch = sampler.sample_batch(4, 3, 1, rng);
    REQUIRE(batch.size() == 4);
    int n_labeled = 0;
    for (const auto* o : batch) n_labeled += o->alpha;
    CHECK(n_labeled == 3);
  }

  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("the gap knob separates the domain shape marginals") {
  auto cats = default_categories();
  Rng rng(17);
  const Category cat = generate_category(cats[2], 2, 128, rng);
  GapSpec gap;
  gap.scale_shift = 0.15;
  gap.extra_field_amp = 0.05;

  std::vector<Eigen::MatrixXd> sim_shapes, real_shapes;
  for (int i = 0; i < 12; ++i) {
    Rng rs(derive_seed(900, uint64_t(i)));
    sim_shapes.push_back(synthesize_instance(cat, rs).canonical);
    Rng rr(derive_seed(901, uint64_t(i)));
    real_shapes.push_back(synthesize_instance(cat, rr, gap).canonical);
  }
  double within = 0.0, across = 0.0;
  int nw = 0, na = 0;
  for (size_t i = 0; i < sim_shapes.size(); ++i) {
    for (size_t j = i + 1; j < sim_shapes.size(); ++j) {
      within += objectives::chamfer_distance(sim_shapes[i], sim_shapes[j]);
      ++nw;
    }
    for (size_t j = 0; j < real_shapes.size(); ++j) {
      across += objectives::chamfer_distance(sim_shapes[i], real_shapes[j]);
      ++na;
    }
  }
  within /= nw;
  across /= na;
  // configured floor for the witness
  const double floor = 0.002;
  CHECK(across > within + floor);
}

TEST_CASE("batch sampler contracts") {
  std::vector<ObservationTriplet> all(10);
  for (int i = 0; i < 10; ++i) {
    all[size_t(i)].id = "r" + std::to_string(i);
    all[size_t(i)].alpha = i < 6 ? 1 : 0;
  }
  std::vector<const ObservationTriplet*> labeled, unlabeled;
  for (const auto& o : all) (o.alpha ? labeled : unlabeled).push_back(&o);

  SUBCASE("ratio 1:0 gives an all-labeled batch") {
    BatchSampler s(labeled, unlabeled);
    Rng rng(1);
    s.new_epoch(rng);
    const auto batch = s.sample_batch(4, 1, 0, rng);
    for (const auto* o : batch) CHECK(o->alpha == 1);
  }

  SUBCASE("without replacement within an epoch") {
    BatchSampler s(labeled, unlabeled);
    Rng rng(2);
    s.new_epoch(rng);
    std::set<std::string> seen;
    for (int k = 0; k < 3; ++k) {
      for (const auto* o : s.sample_batch(2, 1, 0, rng)) {
        CHECK(seen.insert(o->id).second);
      }
    }
  }

  SUBCASE("exhaustion raises InsufficientData rather than repeating") {
    BatchSampler s(labeled, unlabeled);
    Rng rng(3);
    s.new_epoch(rng);
    (void)s.sample_batch(6, 1, 0, rng);
    CHECK_THROWS_AS(s.sample_batch(1, 1, 0, rng), InsufficientData);
    s.new_epoch(rng);
    CHECK(s.sample_batch(1, 1, 0, rng).size() == 1);
  }

  SUBCASE("demanding unlabeled data from an empty pool throws") {
    BatchSampler s(labeled, {});
    Rng rng(4);
    s.new_epoch(rng);
    CHECK_THROWS_AS(s.sample_batch(4, 3, 1, rng), InsufficientData);
  }
}
