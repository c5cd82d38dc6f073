#include "dpdn/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dpdn/errors.hpp"

namespace dpdn::evalharness {

using json = nlohmann::ordered_json;

std::array<Vec3, 8> OrientedBox::corners() const {
  std::array<Vec3, 8> out;
  const Eigen::Matrix3d rm = pose.r.matrix();
  int k = 0;
  for (int ix : {-1, 1}) {
    for (int iy : {-1, 1}) {
      for (int iz : {-1, 1}) {
        const Vec3 local(0.5 * ix * pose.s.x(), 0.5 * iy * pose.s.y(),
                         0.5 * iz * pose.s.z());
        out[size_t(k++)] = pose.t + rm * local;
      }
    }
  }
  return out;
}

namespace {

using Polygon = std::vector<Vec3>;

struct HalfSpace {
  Vec3 n;    // outward normal
  double c;  // inside: n.x <= c
};

std::array<HalfSpace, 6> box_half_spaces(const OrientedBox& b) {
  std::array<HalfSpace, 6> hs;
  const Eigen::Matrix3d rm = b.pose.r.matrix();
  for (int a = 0; a < 3; ++a) {
    const Vec3 n = rm.col(a);
    const double h = 0.5 * b.pose.s(a);
    const double d = n.dot(b.pose.t);
    hs[size_t(2 * a)] = {n, d + h};
    hs[size_t(2 * a + 1)] = {-n, -(d - h)};
  }
  return hs;
}

// Box faces as outward-oriented quads (CCW seen from outside).
std::vector<Polygon> box_faces(const OrientedBox& b) {
  const auto co = b.corners();  // index bits: x<<2 | y<<1 | z (0=-, 1=+)
  auto idx = [](int x, int y, int z) { return size_t((x << 2) | (y << 1) | z); };
  std::vector<Polygon> faces;
  // +x, -x, +y, -y, +z, -z with consistent outward winding
  faces.push_back({co[idx(1, 0, 0)], co[idx(1, 1, 0)], co[idx(1, 1, 1)], co[idx(1, 0, 1)]});
  faces.push_back({co[idx(0, 0, 0)], co[idx(0, 0, 1)], co[idx(0, 1, 1)], co[idx(0, 1, 0)]});
  faces.push_back({co[idx(0, 1, 0)], co[idx(0, 1, 1)], co[idx(1, 1, 1)], co[idx(1, 1, 0)]});
  faces.push_back({co[idx(0, 0, 0)], co[idx(1, 0, 0)], co[idx(1, 0, 1)], co[idx(0, 0, 1)]});
  faces.push_back({co[idx(0, 0, 1)], co[idx(1, 0, 1)], co[idx(1, 1, 1)], co[idx(0, 1, 1)]});
  faces.push_back({co[idx(0, 0, 0)], co[idx(0, 1, 0)], co[idx(1, 1, 0)], co[idx(1, 0, 0)]});
  return faces;
}

// Sutherland-Hodgman against one half-space; crossing points are appended to
// cap_points so the new planar face can be rebuilt afterwards.
Polygon clip_polygon(const Polygon& poly, const HalfSpace& h, double eps,
                     std::vector<Vec3>& cap_points) {
  Polygon out;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec3& a = poly[i];
    const Vec3& b = poly[(i + 1) % n];
    const double da = h.n.dot(a) - h.c;
    const double db = h.n.dot(b) - h.c;
    const bool ina = da <= eps;
    const bool inb = db <= eps;
    if (ina) out.push_back(a);
    if (ina != inb) {
      const double t = da / (da - db);
      const Vec3 p = a + t * (b - a);
      out.push_back(p);
      cap_points.push_back(p);
    }
  }
  return out;
}

void dedup_in_place(Polygon& poly, double eps) {
  Polygon out;
  for (const Vec3& p : poly) {
    if (out.empty() || (out.back() - p).norm() > eps) out.push_back(p);
  }
  while (out.size() > 1 && (out.front() - out.back()).norm() <= eps) {
    out.pop_back();
  }
  poly = std::move(out);
}

double polyhedron_volume(const std::vector<Polygon>& faces) {
  double six_v = 0.0;
  for (const Polygon& f : faces) {
    for (size_t i = 1; i + 1 < f.size(); ++i) {
      six_v += f[0].dot(f[i].cross(f[i + 1]));
    }
  }
  return six_v / 6.0;
}

double intersection_volume(const OrientedBox& b1, const OrientedBox& b2) {
  const double scale =
      std::max({b1.pose.s.maxCoeff(), b2.pose.s.maxCoeff(), 1e-12});
  const double eps = 1e-12 * scale;

  std::vector<Polygon> faces = box_faces(b1);
  for (const HalfSpace& h : box_half_spaces(b2)) {
    std::vector<Polygon> next;
    std::vector<Vec3> cap;
    for (const Polygon& f : faces) {
      Polygon clipped = clip_polygon(f, h, eps, cap);
      dedup_in_place(clipped, eps);
      if (clipped.size() >= 3) next.push_back(std::move(clipped));
    }
    // Rebuild the cap polygon on the clipping plane, wound CCW around +n so
    // its outward normal matches the plane's.
    if (cap.size() >= 3) {
      Vec3 centroid = Vec3::Zero();
      for (const Vec3& p : cap) centroid += p;
      centroid /= double(cap.size());
      Vec3 u = (cap[0] - centroid);
      if (u.norm() < eps) u = h.n.unitOrthogonal();
      u.normalize();
      const Vec3 w = h.n.cross(u).normalized();
      std::vector<std::pair<double, Vec3>> angled;
      angled.reserve(cap.size());
      for (const Vec3& p : cap) {
        const Vec3 d = p - centroid;
        angled.emplace_back(std::atan2(d.dot(w), d.dot(u)), p);
      }
      std::sort(angled.begin(), angled.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      Polygon capped;
      for (const auto& [ang, p] : angled) capped.push_back(p);
      dedup_in_place(capped, eps);
      if (capped.size() >= 3) next.push_back(std::move(capped));
    }
    faces = std::move(next);
    if (faces.empty()) return 0.0;
  }
  return std::max(0.0, polyhedron_volume(faces));
}

double box_volume(const OrientedBox& b) {
  return b.pose.s.x() * b.pose.s.y() * b.pose.s.z();
}

}  // namespace

double box_iou_3d(const OrientedBox& b1, const OrientedBox& b2) {
  const double vi = intersection_volume(b1, b2);
  const double vu = box_volume(b1) + box_volume(b2) - vi;
  if (vu <= 0.0) return 0.0;
  return std::min(1.0, std::max(0.0, vi / vu));
}

PoseErrors pose_errors(const Pose& pred, const Pose& gt, bool symmetric,
                       const Vec3& symmetry_axis) {
  PoseErrors e;
  e.rot_deg = geometry::rotation_error_deg(
      pred.r, gt.r,
      symmetric ? std::optional<Vec3>(symmetry_axis) : std::nullopt);
  e.trans = (pred.t - gt.t).norm();
  return e;
}

namespace {

std::string iou_metric_name(double thr) {
  return "IoU" + std::to_string(int(std::lround(thr * 100.0)));
}

std::string pose_metric_name(double deg, double trans) {
  return std::to_string(int(std::lround(deg))) + "deg" +
         std::to_string(int(std::lround(trans * 100.0))) + "cm";
}

}  // namespace

MetricsReport compute_map(const std::vector<InstanceRecord>& records,
                          const Thresholds& thresholds,
                          const std::string& run_id, json config_echo) {
  if (records.empty()) throw EmptyRecords("no instances to score");

  MetricsReport rep;
  rep.run_id = run_id;
  rep.config_echo = std::move(config_echo);
  for (double thr : thresholds.iou) rep.metrics.push_back(iou_metric_name(thr));
  for (const auto& [deg, tr] : thresholds.pose) {
    rep.metrics.push_back(pose_metric_name(deg, tr));
  }

  std::map<std::string, int> counts;
  std::map<std::string, std::map<std::string, int>> passes;
  for (const auto& r : records) {
    counts[r.category] += 1;

    double iou = 0.0;
    double rot = 180.0;
    double trans = std::numeric_limits<double>::infinity();
    if (r.pred) {
      iou = box_iou_3d(OrientedBox{*r.pred}, OrientedBox{r.gt});
      const PoseErrors pe =
          pose_errors(*r.pred, r.gt, r.symmetric, r.symmetry_axis);
      rot = pe.rot_deg;
      trans = pe.trans;
    }
    rep.instances.emplace_back(r.id, r.category, iou, rot, trans);

    size_t mi = 0;
    for (double thr : thresholds.iou) {
      if (iou >= thr) passes[rep.metrics[mi]][r.category] += 1;
      ++mi;
    }
    for (const auto& [deg, tr] : thresholds.pose) {
      if (rot <= deg && trans <= tr) passes[rep.metrics[mi]][r.category] += 1;
      ++mi;
    }
  }

  for (const auto& [cat, cnt] : counts) rep.categories.push_back(cat);
  std::sort(rep.categories.begin(), rep.categories.end());

  for (const std::string& metric : rep.metrics) {
    double total = 0.0;
    for (const std::string& cat : rep.categories) {
      const int pass = passes[metric].count(cat) ? passes[metric][cat] : 0;
      const double ap = 100.0 * double(pass) / double(counts[cat]);
      rep.per_category[metric][cat] = ap;
      total += ap;
    }
    rep.mean[metric] = total / double(rep.categories.size());
  }
  return rep;
}

MetricsReport evaluate_umeyama_baseline(
    const std::vector<UmeyamaRecord>& records, const Thresholds& thresholds,
    const std::string& run_id, json config_echo) {
  if (records.empty()) throw EmptyRecords("no instances to score");
  std::vector<InstanceRecord> scored;
  scored.reserve(records.size());
  for (const auto& r : records) {
    InstanceRecord out;
    out.id = r.id;
    out.category = r.category;
    out.gt = r.gt;
    out.symmetric = r.symmetric;
    out.symmetry_axis = r.symmetry_axis;
    try {
      const geometry::SimilarityFit fit =
          geometry::umeyama_fit(geometry::PointSet::from_matrix(r.q_o),
                                geometry::PointSet::from_matrix(r.p_o));
      const Eigen::RowVector3d ext =
          r.q_o.colwise().maxCoeff() - r.q_o.colwise().minCoeff();
      const Vec3 size = fit.scale * ext.transpose();
      if (!(fit.scale > 0.0) || size.minCoeff() <= 0.0) {
        throw DegenerateConfiguration("non-positive similarity size");
      }
      out.pred = Pose(fit.r, fit.t, size);
    } catch (const DegenerateConfiguration&) {
      out.pred.reset();  // scored as failure
    } catch (const InvalidPose&) {
      out.pred.reset();
    }
    scored.push_back(std::move(out));
  }
  return compute_map(scored, thresholds, run_id, std::move(config_echo));
}

bool MetricsReport::operator==(const MetricsReport& other) const {
  return run_id == other.run_id && metrics == other.metrics &&
         categories == other.categories &&
         per_category == other.per_category && mean == other.mean &&
         instances == other.instances &&
         config_echo.dump() == other.config_echo.dump();
}

void write_report(const MetricsReport& report, const std::string& json_path,
                  const std::string& csv_path) {
  json j;
  j["format_version"] = 1;
  j["run_id"] = report.run_id;
  j["metrics"] = report.metrics;
  j["categories"] = report.categories;
  json per_cat;
  for (const std::string& m : report.metrics) {
    json row;
    for (const std::string& c : report.categories) {
      row[c] = report.per_category.at(m).at(c);
    }
    per_cat[m] = row;
  }
  j["per_category"] = per_cat;
  json mean;
  for (const std::string& m : report.metrics) mean[m] = report.mean.at(m);
  j["mean"] = mean;
  json inst = json::array();
  for (const auto& [id, cat, iou, rot, trans] : report.instances) {
    inst.push_back({{"id", id},
                    {"category", cat},
                    {"iou", iou},
                    {"rot_deg", rot},
                    {"trans", std::isfinite(trans) ? json(trans) : json(-1.0)}});
  }
  j["instances"] = inst;
  j["config"] = report.config_echo;

  std::ofstream os(json_path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write report: " + json_path);
  os << j.dump(2) << "\n";
  if (!os) throw IoError("failed writing report: " + json_path);

  write_report_csv(report, csv_path);
}

void write_report_csv(const MetricsReport& report, const std::string& csv_path) {
  std::ofstream cs(csv_path, std::ios::binary | std::ios::trunc);
  if (!cs) throw IoError("cannot write CSV: " + csv_path);
  cs << "run_id,metric,category,value\n";
  char buf[64];
  for (const std::string& m : report.metrics) {
    std::snprintf(buf, sizeof(buf), "%.6f", report.mean.at(m));
    cs << report.run_id << "," << m << ",mean," << buf << "\n";
    for (const std::string& c : report.categories) {
      std::snprintf(buf, sizeof(buf), "%.6f", report.per_category.at(m).at(c));
      cs << report.run_id << "," << m << "," << c << "," << buf << "\n";
    }
  }
  if (!cs) throw IoError("failed writing CSV: " + csv_path);
}

MetricsReport read_report(const std::string& json_path) {
  std::ifstream is(json_path, std::ios::binary);
  if (!is) throw IoError("cannot read report: " + json_path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw IoError(std::string("bad report JSON: ") + e.what());
  }
  MetricsReport rep;
  rep.run_id = j.at("run_id").get<std::string>();
  rep.metrics = j.at("metrics").get<std::vector<std::string>>();
  rep.categories = j.at("categories").get<std::vector<std::string>>();
  for (const std::string& m : rep.metrics) {
    for (const std::string& c : rep.categories) {
      rep.per_category[m][c] = j.at("per_category").at(m).at(c).get<double>();
    }
    rep.mean[m] = j.at("mean").at(m).get<double>();
  }
  for (const auto& ij : j.at("instances")) {
    const double trans_raw = ij.at("trans").get<double>();
    rep.instances.emplace_back(
        ij.at("id").get<std::string>(), ij.at("category").get<std::string>(),
        ij.at("iou").get<double>(), ij.at("rot_deg").get<double>(),
        trans_raw < 0.0 ? std::numeric_limits<double>::infinity() : trans_raw);
  }
  rep.config_echo = j.at("config");
  return rep;
}

}  // namespace dpdn::evalharness
