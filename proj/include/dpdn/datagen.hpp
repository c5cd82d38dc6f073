#pragma once

#include <string>
#include <vector>

#include "dpdn/geometry.hpp"
#include "dpdn/observation.hpp"
#include "dpdn/rng.hpp"

namespace dpdn::datagen {

using Eigen::MatrixXd;
using geometry::Vec3;

enum class ShapeFamily { Box, Cylinder, Ellipsoid, Composite };

std::string family_name(ShapeFamily f);
ShapeFamily family_from_name(const std::string& s);

// One primitive of a composite surface, in the category's local frame.
struct PartSpec {
  ShapeFamily family = ShapeFamily::Box;
  Vec3 scale = Vec3::Ones();
  Vec3 offset = Vec3::Zero();
};

struct DeformSpec {
  double scale_jitter = 0.12;  // per-axis scales drawn from U(1-j, 1+j)
  double field_amp = 0.03;     // max per-point displacement of the field
  double field_freq = 4.0;
};

struct CategorySpec {
  std::string name;
  ShapeFamily family = ShapeFamily::Composite;
  std::vector<PartSpec> parts;  // empty -> one unit part of `family`
  bool symmetric = false;
  Vec3 symmetry_axis = Vec3::UnitY();
  DeformSpec deform;
};

// Template point set sampled from the surface family, bounding-box centered
// and scaled to a unit-diagonal extent vector.
struct Category {
  int id = 0;
  CategorySpec spec;
  MatrixXd template_pts;      // M x 3
  MatrixXd template_normals;  // M x 3
};

// The Sim2Real gap dial applied to real-domain records.
struct GapSpec {
  double scale_shift = 0.0;      // bias added to per-axis scale draws
  double extra_field_amp = 0.0;  // extra smooth-field amplitude
  double sigma_depth = 0.0;      // Gaussian depth noise along the view ray
  double sigma_attr = 0.0;       // Gaussian noise on appearance attributes
};

struct PoseRanges {
  double rot_max_deg = 60.0;
  double t_range = 0.25;
  double diag_min = 0.15;
  double diag_max = 0.40;
};

struct Instance {
  MatrixXd canonical;     // M x 3 unit-diagonal canonical shape = Q_v gt
  MatrixXd normals;       // M x 3
  MatrixXd scaled_base;   // M x 3, anisotropic scaling only
  MatrixXd raw_deformed;  // M x 3, scaled + displacement, pre-normalization
};

Category generate_category(const CategorySpec& spec, int id, int m_points,
                           Rng& rng);

// Anisotropic per-axis scaling plus a smooth low-frequency displacement
// field; the canonical output is re-normalized to unit diagonal.
Instance synthesize_instance(const Category& cat, Rng& rng,
                             const GapSpec& gap = {});

// Scene points |s|_2 * R * q + t restricted to the half facing a random view
// direction (backface culling on rotated normals), resampled to exactly
// n_points. Real-domain records get depth noise and attribute noise; q_o gt
// canonicalizes the exact pre-noise points.
ObservationTriplet render_observation(const Category& cat,
                                      const Instance& instance,
                                      const geometry::Pose& pose,
                                      const std::string& domain,
                                      const GapSpec& gap, int n_points,
                                      int attr_dim, int n_categories,
                                      Rng& rng);

struct DatasetSpec {
  uint64_t seed = 1;
  int n_points = 1024;
  int m_points = 1024;
  int attr_dim = 8;
  std::vector<CategorySpec> categories;
  int sim_train = 480;
  int real_train = 360;
  int real_test = 150;
  GapSpec gap;
  PoseRanges pose;
};

// The three desk-scale categories: a mug-like and a laptop-like composite
// (asymmetric) and a bottle-like solid of revolution (symmetric about +y).
std::vector<CategorySpec> default_categories();

// Writes manifest.json, one record file per instance, and
// real_eval_labels.json (ground truth of every real record, never read by
// the self-supervised trainer).
void make_split(const DatasetSpec& spec, const std::string& out_dir);

struct RecordRef {
  std::string id;
  std::string file;
  int category = 0;
  std::string domain;
  std::string split;
  int alpha = 1;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(const Dataset&) = delete;
  Dataset& operator=(const Dataset&) = delete;
  Dataset(Dataset&&) = default;
  Dataset& operator=(Dataset&&) = default;

  static Dataset load(const std::string& dir);
  // Attaches ground truth to real records from real_eval_labels.json.
  void attach_real_labels();

  DatasetSpec spec;
  std::string dir;
  std::vector<Category> categories;
  std::vector<ObservationTriplet> sim_train;
  std::vector<ObservationTriplet> real_train;
  std::vector<ObservationTriplet> real_test;
  bool labels_attached = false;
};

// Without-replacement batch sampling from a labeled and an unlabeled pool.
// Throws InsufficientData when the current epoch cannot supply a batch;
// callers start a new epoch explicitly.
class BatchSampler {
 public:
  BatchSampler(std::vector<const ObservationTriplet*> labeled,
               std::vector<const ObservationTriplet*> unlabeled);

  // Exactly b instances, ceil(b * rl/(rl+ru)) labeled.
  std::vector<const ObservationTriplet*> sample_batch(int b, int ratio_labeled,
                                                      int ratio_unlabeled,
                                                      Rng& rng);
  void new_epoch(Rng& rng);

 private:
  std::vector<const ObservationTriplet*> labeled_;
  std::vector<const ObservationTriplet*> unlabeled_;
  std::vector<size_t> order_l_, order_u_;
  size_t next_l_ = 0, next_u_ = 0;
};

}  // namespace dpdn::datagen
