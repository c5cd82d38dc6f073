#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpdn/geometry.hpp"

namespace dpdn::evalharness {

using geometry::Pose;
using geometry::Vec3;

// Oriented 3D box: center t, axes R, per-axis extents s.
struct OrientedBox {
  Pose pose;
  std::array<Vec3, 8> corners() const;
};

// Exact intersection-over-union via half-space clipping of one box's corner
// polytope against the other's six face planes. Symmetric within 1e-9.
double box_iou_3d(const OrientedBox& b1, const OrientedBox& b2);

struct PoseErrors {
  double rot_deg;
  double trans;
};

// Rotation error (symmetry-aware when flagged) plus Euclidean translation
// error in scene units (1 unit = 1 m, so the 2cm threshold is 0.02).
PoseErrors pose_errors(const Pose& pred, const Pose& gt, bool symmetric,
                       const Vec3& symmetry_axis = Vec3::UnitY());

struct Thresholds {
  std::vector<double> iou = {0.50, 0.75};
  // (degrees, translation in scene units)
  std::vector<std::pair<double, double>> pose = {
      {5.0, 0.02}, {5.0, 0.05}, {10.0, 0.02}, {10.0, 0.05}};
};

// One scored instance; a missing prediction counts as failing every
// threshold (the error-path contract for degenerate predictions).
struct InstanceRecord {
  std::string id;
  std::string category;
  std::optional<Pose> pred;
  Pose gt;
  bool symmetric = false;
  Vec3 symmetry_axis = Vec3::UnitY();
};

struct MetricsReport {
  std::string run_id;
  std::vector<std::string> metrics;     // fixed order
  std::vector<std::string> categories;  // sorted
  // metric -> category -> AP in [0, 100]
  std::map<std::string, std::map<std::string, double>> per_category;
  std::map<std::string, double> mean;
  // per-instance error records: id, category, iou, rot_deg, trans
  std::vector<std::tuple<std::string, std::string, double, double, double>>
      instances;
  nlohmann::ordered_json config_echo;

  bool operator==(const MetricsReport& other) const;
};

// AP at a threshold = percentage of a category's instances meeting it
// (inclusive comparisons); the mean is unweighted over categories.
MetricsReport compute_map(const std::vector<InstanceRecord>& records,
                          const Thresholds& thresholds,
                          const std::string& run_id,
                          nlohmann::ordered_json config_echo = {});

// Input to the Umeyama re-scoring of an estimator-free pipeline.
struct UmeyamaRecord {
  std::string id;
  std::string category;
  Eigen::MatrixXd q_o;  // predicted canonical points, N x 3
  Eigen::MatrixXd p_o;  // observed points, N x 3
  Pose gt;
  bool symmetric = false;
  Vec3 symmetry_axis = Vec3::UnitY();
};

// Fits (R, t, c) aligning Q_o to P_o per instance; size = c * per-axis
// extent of Q_o. Degenerate fits score the instance as a failure.
MetricsReport evaluate_umeyama_baseline(
    const std::vector<UmeyamaRecord>& records, const Thresholds& thresholds,
    const std::string& run_id, nlohmann::ordered_json config_echo = {});

// JSON (full, round-trippable) plus CSV summary with fixed header
// run_id,metric,category,value. Byte-stable for identical inputs.
void write_report(const MetricsReport& report, const std::string& json_path,
                  const std::string& csv_path);
void write_report_csv(const MetricsReport& report, const std::string& csv_path);
MetricsReport read_report(const std::string& json_path);

}  // namespace dpdn::evalharness
