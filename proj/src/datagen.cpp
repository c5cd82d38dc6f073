#include "dpdn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace dpdn::datagen {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// --- base64 / float32 packing -----------------------------------------------

namespace {

const char* kB64 =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string b64_encode(const std::vector<unsigned char>& data) {
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 2 < data.size()) {
    const uint32_t v = (uint32_t(data[i]) << 16) | (uint32_t(data[i + 1]) << 8) |
                       data[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back(kB64[v & 63]);
    i += 3;
  }
  if (i + 1 == data.size()) {
    const uint32_t v = uint32_t(data[i]) << 16;
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == data.size()) {
    const uint32_t v = (uint32_t(data[i]) << 16) | (uint32_t(data[i + 1]) << 8);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out += "=";
  }
  return out;
}

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::vector<unsigned char> b64_decode(const std::string& s) {
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  uint32_t acc = 0;
  int bits = 0;
  for (char c : s) {
    if (c == '=') break;
    const int v = b64_value(c);
    if (v < 0) throw IoError("invalid base64 payload");
    acc = (acc << 6) | uint32_t(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back((acc >> bits) & 0xff);
    }
  }
  return out;
}

std::string pack_matrix(const MatrixXd& m) {
  std::vector<unsigned char> bytes(size_t(m.rows()) * size_t(m.cols()) * 4);
  size_t at = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const float f = float(m(i, j));
      uint32_t u;
      std::memcpy(&u, &f, 4);
      bytes[at++] = u & 0xff;
      bytes[at++] = (u >> 8) & 0xff;
      bytes[at++] = (u >> 16) & 0xff;
      bytes[at++] = (u >> 24) & 0xff;
    }
  }
  return b64_encode(bytes);
}

MatrixXd unpack_matrix(const std::string& b64, Eigen::Index rows,
                       Eigen::Index cols) {
  const std::vector<unsigned char> bytes = b64_decode(b64);
  if (bytes.size() != size_t(rows) * size_t(cols) * 4) {
    throw IoError("array payload size mismatch");
  }
  MatrixXd m(rows, cols);
  size_t at = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      uint32_t u = uint32_t(bytes[at]) | (uint32_t(bytes[at + 1]) << 8) |
                   (uint32_t(bytes[at + 2]) << 16) |
                   (uint32_t(bytes[at + 3]) << 24);
      at += 4;
      float f;
      std::memcpy(&f, &u, 4);
      m(i, j) = double(f);
    }
  }
  return m;
}

}  // namespace

// --- surface samplers --------------------------------------------------------

std::string family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Box: return "box";
    case ShapeFamily::Cylinder: return "cylinder";
    case ShapeFamily::Ellipsoid: return "ellipsoid";
    case ShapeFamily::Composite: return "composite";
  }
  return "box";
}

ShapeFamily family_from_name(const std::string& s) {
  if (s == "box") return ShapeFamily::Box;
  if (s == "cylinder") return ShapeFamily::Cylinder;
  if (s == "ellipsoid") return ShapeFamily::Ellipsoid;
  if (s == "composite") return ShapeFamily::Composite;
  throw InvalidSpec("unknown shape family: " + s);
}

namespace {

struct SurfaceSample {
  Vec3 p;
  Vec3 n;
};

// Point on the unit box [-0.5, 0.5]^3, faces weighted by area of the scaled
// box.
SurfaceSample sample_box(const Vec3& s, Rng& rng) {
  const double ax = s.y() * s.z(), ay = s.x() * s.z(), az = s.x() * s.y();
  const double total = 2.0 * (ax + ay + az);
  double u = rng.uniform(0.0, total);
  int axis;
  if (u < 2 * ax) {
    axis = 0;
  } else if (u < 2 * ax + 2 * ay) {
    axis = 1;
  } else {
    axis = 2;
  }
  const double side = rng.uniform() < 0.5 ? -0.5 : 0.5;
  Vec3 p(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
         rng.uniform(-0.5, 0.5));
  p(axis) = side;
  Vec3 n = Vec3::Zero();
  n(axis) = side > 0 ? 1.0 : -1.0;
  return {p, n};
}

// Cylinder with axis +y, radius 0.5, height 1, with end caps.
SurfaceSample sample_cylinder(const Vec3& s, Rng& rng) {
  const double r = 0.25 * (s.x() + s.z());  // mean radius after scaling
  const double side_area = 2.0 * M_PI * r * s.y();
  const double cap_area = M_PI * r * r;
  const double u = rng.uniform(0.0, side_area + 2.0 * cap_area);
  const double theta = rng.uniform(0.0, 2.0 * M_PI);
  if (u < side_area) {
    Vec3 p(0.5 * std::cos(theta), rng.uniform(-0.5, 0.5),
           0.5 * std::sin(theta));
    Vec3 n(std::cos(theta), 0.0, std::sin(theta));
    return {p, n};
  }
  const double side = u < side_area + cap_area ? 0.5 : -0.5;
  const double rad = 0.5 * std::sqrt(rng.uniform());
  Vec3 p(rad * std::cos(theta), side, rad * std::sin(theta));
  return {p, Vec3(0.0, side > 0 ? 1.0 : -1.0, 0.0)};
}

// Unit sphere scaled later; density is not exactly area-uniform under
// anisotropic scaling, which is fine for a synthetic benchmark.
SurfaceSample sample_ellipsoid(const Vec3&, Rng& rng) {
  const Vec3 dir = rng.unit_vector();
  return {0.5 * dir, dir};
}

double part_area_estimate(const PartSpec& part) {
  const Vec3& s = part.scale;
  switch (part.family) {
    case ShapeFamily::Box:
      return 2.0 * (s.x() * s.y() + s.y() * s.z() + s.x() * s.z());
    case ShapeFamily::Cylinder: {
      const double r = 0.25 * (s.x() + s.z());
      return 2.0 * M_PI * r * s.y() + 2.0 * M_PI * r * r;
    }
    case ShapeFamily::Ellipsoid: {
      const double r = (s.x() + s.y() + s.z()) / 6.0;
      return 4.0 * M_PI * r * r;
    }
    case ShapeFamily::Composite:
      throw InvalidSpec("composite part inside a composite");
  }
  return 1.0;
}

SurfaceSample sample_part(const PartSpec& part, Rng& rng) {
  SurfaceSample s;
  switch (part.family) {
    case ShapeFamily::Box: s = sample_box(part.scale, rng); break;
    case ShapeFamily::Cylinder: s = sample_cylinder(part.scale, rng); break;
    case ShapeFamily::Ellipsoid: s = sample_ellipsoid(part.scale, rng); break;
    case ShapeFamily::Composite:
      throw InvalidSpec("composite part inside a composite");
  }
  s.p = s.p.cwiseProduct(part.scale) + part.offset;
  Vec3 n = s.n.cwiseQuotient(part.scale);
  const double nn = n.norm();
  s.n = nn > 0 ? Vec3(n / nn) : Vec3::UnitY();
  return s;
}

void normalize_unit_diagonal(MatrixXd& pts) {
  const Eigen::RowVector3d lo = pts.colwise().minCoeff();
  const Eigen::RowVector3d hi = pts.colwise().maxCoeff();
  const Eigen::RowVector3d center = 0.5 * (lo + hi);
  const double diag = (hi - lo).norm();
  if (diag < 1e-12) throw InvalidSpec("degenerate template: zero extent");
  pts.rowwise() -= center;
  pts /= diag;
}

}  // namespace

std::vector<CategorySpec> default_categories() {
  std::vector<CategorySpec> cats(3);

  cats[0].name = "mug";
  cats[0].family = ShapeFamily::Composite;
  cats[0].parts = {
      {ShapeFamily::Cylinder, Vec3(0.8, 0.9, 0.8), Vec3(0.0, 0.0, 0.0)},
      {ShapeFamily::Box, Vec3(0.35, 0.5, 0.12), Vec3(0.55, 0.0, 0.0)},
  };
  cats[0].symmetric = false;

  cats[1].name = "laptop";
  cats[1].family = ShapeFamily::Composite;
  cats[1].parts = {
      {ShapeFamily::Box, Vec3(1.0, 0.1, 0.7), Vec3(0.0, -0.25, 0.0)},
      {ShapeFamily::Box, Vec3(1.0, 0.6, 0.1), Vec3(0.0, 0.05, -0.3)},
  };
  cats[1].symmetric = false;

  cats[2].name = "bottle";
  cats[2].family = ShapeFamily::Composite;
  cats[2].parts = {
      {ShapeFamily::Cylinder, Vec3(0.55, 0.85, 0.55), Vec3(0.0, -0.075, 0.0)},
      {ShapeFamily::Cylinder, Vec3(0.22, 0.35, 0.22), Vec3(0.0, 0.5, 0.0)},
  };
  cats[2].symmetric = true;
  cats[2].symmetry_axis = Vec3::UnitY();

  return cats;
}

Category generate_category(const CategorySpec& spec, int id, int m_points,
                           Rng& rng) {
  if (m_points < 4) throw InvalidSpec("category needs at least 4 points");
  std::vector<PartSpec> parts = spec.parts;
  if (parts.empty()) {
    if (spec.family == ShapeFamily::Composite) {
      throw InvalidSpec("composite category without parts: " + spec.name);
    }
    parts.push_back({spec.family, Vec3::Ones(), Vec3::Zero()});
  }
  std::vector<double> cum;
  double total = 0.0;
  for (const auto& part : parts) {
    total += part_area_estimate(part);
    cum.push_back(total);
  }

  Category cat;
  cat.id = id;
  cat.spec = spec;
  cat.template_pts.resize(m_points, 3);
  cat.template_normals.resize(m_points, 3);
  for (int i = 0; i < m_points; ++i) {
    const double u = rng.uniform(0.0, total);
    size_t pi = 0;
    while (pi + 1 < cum.size() && u >= cum[pi]) ++pi;
    const SurfaceSample s = sample_part(parts[pi], rng);
    cat.template_pts.row(i) = s.p.transpose();
    cat.template_normals.row(i) = s.n.transpose();
  }
  normalize_unit_diagonal(cat.template_pts);
  return cat;
}

Instance synthesize_instance(const Category& cat, Rng& rng,
                             const GapSpec& gap) {
  const double j = cat.spec.deform.scale_jitter;
  const Vec3 scales(rng.uniform(1.0 - j, 1.0 + j) + gap.scale_shift,
                    rng.uniform(1.0 - j, 1.0 + j) + gap.scale_shift,
                    rng.uniform(1.0 - j, 1.0 + j) + gap.scale_shift);
  if (scales.minCoeff() <= 0.05) {
    throw InvalidSpec("instance scale collapsed to ~zero");
  }

  Instance out;
  out.scaled_base = cat.template_pts;
  out.scaled_base.col(0) *= scales.x();
  out.scaled_base.col(1) *= scales.y();
  out.scaled_base.col(2) *= scales.z();

  out.normals = cat.template_normals;
  for (Eigen::Index i = 0; i < out.normals.rows(); ++i) {
    Vec3 n = out.normals.row(i).transpose();
    n = n.cwiseQuotient(scales);
    const double nn = n.norm();
    if (nn > 0) out.normals.row(i) = (n / nn).transpose();
  }

  out.raw_deformed = out.scaled_base;
  const double amp = cat.spec.deform.field_amp + gap.extra_field_amp;
  if (amp > 0.0) {
    const double per_axis = amp / std::sqrt(3.0);
    Vec3 dirs[3];
    double freq[3], phase[3];
    for (int a = 0; a < 3; ++a) {
      dirs[a] = rng.unit_vector();
      freq[a] = cat.spec.deform.field_freq * rng.uniform(0.5, 1.5);
      phase[a] = rng.uniform(0.0, 2.0 * M_PI);
    }
    for (Eigen::Index i = 0; i < out.raw_deformed.rows(); ++i) {
      const Vec3 p = out.scaled_base.row(i).transpose();
      for (int a = 0; a < 3; ++a) {
        out.raw_deformed(i, a) +=
            per_axis * std::sin(freq[a] * dirs[a].dot(p) + phase[a]);
      }
    }
  }

  out.canonical = out.raw_deformed;
  normalize_unit_diagonal(out.canonical);
  return out;
}

ObservationTriplet render_observation(const Category& cat,
                                      const Instance& instance,
                                      const geometry::Pose& pose,
                                      const std::string& domain,
                                      const GapSpec& gap, int n_points,
                                      int attr_dim, int n_categories,
                                      Rng& rng) {
  const Eigen::Index m = instance.canonical.rows();
  if (m < 1) throw DegeneratePose("instance has no points");
  if (!pose.t.allFinite() || !pose.s.allFinite() || pose.s.norm() < 1e-12) {
    throw DegeneratePose("non-finite or collapsed pose");
  }
  if (attr_dim < 3 + n_categories) {
    throw InvalidSpec("attr_dim too small for normal + category embedding");
  }

  const double scale = pose.s.norm();
  const Eigen::Matrix3d rm = pose.r.matrix();
  MatrixXd scene = scale * (instance.canonical * rm.transpose());
  scene.rowwise() += pose.t.transpose();

  // Backface culling against a random view direction.
  const Vec3 view = rng.unit_vector();
  std::vector<Eigen::Index> visible;
  visible.reserve(size_t(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vec3 n = rm * instance.normals.row(i).transpose();
    if (n.dot(view) <= 0.0) visible.push_back(i);
  }
  if (visible.empty()) {
    for (Eigen::Index i = 0; i < m; ++i) visible.push_back(i);
  }

  std::vector<Eigen::Index> sel(static_cast<size_t>(n_points));
  if (Eigen::Index(visible.size()) >= n_points) {
    // partial Fisher-Yates: first n_points of a shuffle
    for (int i = 0; i < n_points; ++i) {
      const size_t k = i + size_t(rng.index(visible.size() - size_t(i)));
      std::swap(visible[size_t(i)], visible[k]);
      sel[size_t(i)] = visible[size_t(i)];
    }
  } else {
    for (int i = 0; i < n_points; ++i) {
      sel[size_t(i)] = visible[size_t(rng.index(visible.size()))];
    }
  }

  ObservationTriplet obs;
  obs.category_id = cat.id;
  obs.domain = domain;
  obs.obs_pts.resize(n_points, 3);
  obs.obs_attrs.resize(n_points, attr_dim);

  GroundTruth gt;
  gt.pose = pose;
  gt.q_v = instance.canonical;
  gt.q_o.resize(n_points, 3);

  const bool real = domain == "real";
  for (int i = 0; i < n_points; ++i) {
    const Eigen::Index src = sel[size_t(i)];
    Vec3 p = scene.row(src).transpose();
    gt.q_o.row(i) = instance.canonical.row(src);
    if (real && gap.sigma_depth > 0.0) {
      p += (rng.normal() * gap.sigma_depth) * view;
    }
    obs.obs_pts.row(i) = p.transpose();

    Eigen::VectorXd a = Eigen::VectorXd::Zero(attr_dim);
    a.head<3>() = instance.normals.row(src).transpose();
    a(3 + cat.id % n_categories) = 1.0;
    for (int c = 3 + n_categories; c < attr_dim; ++c) {
      a(c) = 0.1 * rng.normal();
    }
    if (real && gap.sigma_attr > 0.0) {
      for (int c = 0; c < attr_dim; ++c) a(c) += gap.sigma_attr * rng.normal();
    }
    obs.obs_attrs.row(i) = a.transpose();
  }

  obs.alpha = real ? 0 : 1;
  obs.gt = std::move(gt);
  return obs;
}

// --- dataset serialization ---------------------------------------------------

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(),
              j.at(2).get<double>());
}

json gt_json(const GroundTruth& gt) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r.push_back(gt.pose.r.matrix()(i, k));
  }
  json out;
  out["rotation"] = r;
  out["translation"] = vec3_json(gt.pose.t);
  out["size"] = vec3_json(gt.pose.s);
  out["qv_rows"] = gt.q_v.rows();
  out["qv_b64"] = pack_matrix(gt.q_v);
  out["qo_rows"] = gt.q_o.rows();
  out["qo_b64"] = pack_matrix(gt.q_o);
  return out;
}

GroundTruth gt_from(const json& j) {
  Eigen::Matrix3d rm;
  const auto& r = j.at("rotation");
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) rm(i, k) = r.at(size_t(3 * i + k)).get<double>();
  }
  GroundTruth gt;
  gt.pose = geometry::Pose(geometry::Rotation(rm), vec3_from(j.at("translation")),
                           vec3_from(j.at("size")));
  gt.q_v = unpack_matrix(j.at("qv_b64").get<std::string>(),
                         j.at("qv_rows").get<Eigen::Index>(), 3);
  gt.q_o = unpack_matrix(j.at("qo_b64").get<std::string>(),
                         j.at("qo_rows").get<Eigen::Index>(), 3);
  return gt;
}

json category_json(const Category& cat) {
  json parts = json::array();
  for (const auto& p : cat.spec.parts) {
    parts.push_back({{"family", family_name(p.family)},
                     {"scale", vec3_json(p.scale)},
                     {"offset", vec3_json(p.offset)}});
  }
  json out;
  out["id"] = cat.id;
  out["name"] = cat.spec.name;
  out["family"] = family_name(cat.spec.family);
  out["parts"] = parts;
  out["symmetric"] = cat.spec.symmetric;
  out["symmetry_axis"] = vec3_json(cat.spec.symmetry_axis);
  out["deform"] = {{"scale_jitter", cat.spec.deform.scale_jitter},
                   {"field_amp", cat.spec.deform.field_amp},
                   {"field_freq", cat.spec.deform.field_freq}};
  out["points"] = cat.template_pts.rows();
  out["template_b64"] = pack_matrix(cat.template_pts);
  out["normals_b64"] = pack_matrix(cat.template_normals);
  return out;
}

Category category_from(const json& j) {
  Category cat;
  cat.id = j.at("id").get<int>();
  cat.spec.name = j.at("name").get<std::string>();
  cat.spec.family = family_from_name(j.at("family").get<std::string>());
  for (const auto& p : j.at("parts")) {
    PartSpec part;
    part.family = family_from_name(p.at("family").get<std::string>());
    part.scale = vec3_from(p.at("scale"));
    part.offset = vec3_from(p.at("offset"));
    cat.spec.parts.push_back(part);
  }
  cat.spec.symmetric = j.at("symmetric").get<bool>();
  cat.spec.symmetry_axis = vec3_from(j.at("symmetry_axis"));
  cat.spec.deform.scale_jitter = j.at("deform").at("scale_jitter").get<double>();
  cat.spec.deform.field_amp = j.at("deform").at("field_amp").get<double>();
  cat.spec.deform.field_freq = j.at("deform").at("field_freq").get<double>();
  const auto rows = j.at("points").get<Eigen::Index>();
  cat.template_pts = unpack_matrix(j.at("template_b64").get<std::string>(), rows, 3);
  cat.template_normals =
      unpack_matrix(j.at("normals_b64").get<std::string>(), rows, 3);
  return cat;
}

struct SplitPlan {
  std::string name;
  std::string domain;
  int count;
  int alpha;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw IoError("bad JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

}  // namespace

void make_split(const DatasetSpec& spec, const std::string& out_dir) {
  if (spec.sim_train < 1 || spec.real_train < 1 || spec.real_test < 1) {
    throw InvalidSpec("split sizes must be positive");
  }
  if (spec.categories.empty()) throw InvalidSpec("no categories");

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "records", ec);
  if (ec) throw IoError("cannot create dataset directory: " + out_dir);

  std::vector<Category> categories;
  for (size_t c = 0; c < spec.categories.size(); ++c) {
    Rng rng(derive_seed(spec.seed, "cat:" + spec.categories[c].name));
    categories.push_back(
        generate_category(spec.categories[c], int(c), spec.m_points, rng));
  }

  const SplitPlan plans[] = {
      {"sim_train", "sim", spec.sim_train, 1},
      {"real_train", "real", spec.real_train, 0},
      {"real_test", "real", spec.real_test, 0},
  };

  json records = json::array();
  json labels;
  labels["format_version"] = 1;
  labels["labels"] = json::object();

  for (const auto& plan : plans) {
    for (int i = 0; i < plan.count; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%05d", i);
      const std::string id = plan.name + "_" + buf;
      Rng rng(derive_seed(spec.seed, "rec:" + id));

      const Category& cat = categories[size_t(i) % categories.size()];
      const bool real = plan.domain == "real";
      const GapSpec gap = real ? spec.gap : GapSpec{};

      const Instance inst = synthesize_instance(cat, rng, gap);

      const Vec3 axis = rng.unit_vector();
      const double angle =
          rng.uniform(0.0, spec.pose.rot_max_deg * M_PI / 180.0);
      const geometry::Rotation r = geometry::Rotation::from_axis_angle(axis, angle);
      const Vec3 t(rng.uniform(-spec.pose.t_range, spec.pose.t_range),
                   rng.uniform(-spec.pose.t_range, spec.pose.t_range),
                   rng.uniform(-spec.pose.t_range, spec.pose.t_range));
      const double diag = rng.uniform(spec.pose.diag_min, spec.pose.diag_max);
      const Eigen::RowVector3d ext = inst.canonical.colwise().maxCoeff() -
                                     inst.canonical.colwise().minCoeff();
      const geometry::Pose pose(r, t, diag * ext.transpose());

      ObservationTriplet obs = render_observation(
          cat, inst, pose, plan.domain, gap, spec.n_points, spec.attr_dim,
          int(categories.size()), rng);
      obs.id = id;

      json rec;
      rec["id"] = id;
      rec["category"] = cat.id;
      rec["domain"] = plan.domain;
      rec["split"] = plan.name;
      rec["alpha"] = plan.alpha;
      rec["pts_rows"] = obs.obs_pts.rows();
      rec["pts_b64"] = pack_matrix(obs.obs_pts);
      rec["attrs_cols"] = obs.obs_attrs.cols();
      rec["attrs_b64"] = pack_matrix(obs.obs_attrs);
      if (plan.alpha == 1) {
        rec["gt"] = gt_json(*obs.gt);
      } else {
        labels["labels"][id] = gt_json(*obs.gt);
      }
      const std::string file = "records/" + id + ".json";
      write_text(fs::path(out_dir) / file, rec.dump(2) + "\n");

      records.push_back({{"id", id},
                         {"file", file},
                         {"category", cat.id},
                         {"domain", plan.domain},
                         {"split", plan.name},
                         {"alpha", plan.alpha}});
    }
  }

  json manifest;
  manifest["format_version"] = 1;
  manifest["seed"] = spec.seed;
  manifest["n_points"] = spec.n_points;
  manifest["m_points"] = spec.m_points;
  manifest["attr_dim"] = spec.attr_dim;
  manifest["pose"] = {{"rot_max_deg", spec.pose.rot_max_deg},
                      {"t_range", spec.pose.t_range},
                      {"diag_min", spec.pose.diag_min},
                      {"diag_max", spec.pose.diag_max}};
  manifest["gap"] = {{"scale_shift", spec.gap.scale_shift},
                     {"extra_field_amp", spec.gap.extra_field_amp},
                     {"sigma_depth", spec.gap.sigma_depth},
                     {"sigma_attr", spec.gap.sigma_attr}};
  json cats = json::array();
  for (const auto& c : categories) cats.push_back(category_json(c));
  manifest["categories"] = cats;
  manifest["counts"] = {{"sim_train", spec.sim_train},
                        {"real_train", spec.real_train},
                        {"real_test", spec.real_test}};
  manifest["records"] = records;

  write_text(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
  write_text(fs::path(out_dir) / "real_eval_labels.json",
             labels.dump(2) + "\n");
}

Dataset Dataset::load(const std::string& dir) {
  Dataset ds;
  ds.dir = dir;
  const json manifest = read_json(fs::path(dir) / "manifest.json");
  if (manifest.at("format_version").get<int>() != 1) {
    throw IoError("unsupported dataset format version");
  }
  ds.spec.seed = manifest.at("seed").get<uint64_t>();
  ds.spec.n_points = manifest.at("n_points").get<int>();
  ds.spec.m_points = manifest.at("m_points").get<int>();
  ds.spec.attr_dim = manifest.at("attr_dim").get<int>();
  ds.spec.pose.rot_max_deg = manifest.at("pose").at("rot_max_deg").get<double>();
  ds.spec.pose.t_range = manifest.at("pose").at("t_range").get<double>();
  ds.spec.pose.diag_min = manifest.at("pose").at("diag_min").get<double>();
  ds.spec.pose.diag_max = manifest.at("pose").at("diag_max").get<double>();
  ds.spec.gap.scale_shift = manifest.at("gap").at("scale_shift").get<double>();
  ds.spec.gap.extra_field_amp =
      manifest.at("gap").at("extra_field_amp").get<double>();
  ds.spec.gap.sigma_depth = manifest.at("gap").at("sigma_depth").get<double>();
  ds.spec.gap.sigma_attr = manifest.at("gap").at("sigma_attr").get<double>();

  ds.categories.reserve(manifest.at("categories").size());
  for (const auto& cj : manifest.at("categories")) {
    ds.categories.push_back(category_from(cj));
    ds.spec.categories.push_back(ds.categories.back().spec);
  }
  ds.spec.sim_train = manifest.at("counts").at("sim_train").get<int>();
  ds.spec.real_train = manifest.at("counts").at("real_train").get<int>();
  ds.spec.real_test = manifest.at("counts").at("real_test").get<int>();

  ds.sim_train.reserve(size_t(ds.spec.sim_train));
  ds.real_train.reserve(size_t(ds.spec.real_train));
  ds.real_test.reserve(size_t(ds.spec.real_test));

  for (const auto& rj : manifest.at("records")) {
    const json rec = read_json(fs::path(dir) / rj.at("file").get<std::string>());
    ObservationTriplet obs;
    obs.id = rec.at("id").get<std::string>();
    obs.category_id = rec.at("category").get<int>();
    obs.domain = rec.at("domain").get<std::string>();
    obs.alpha = rec.at("alpha").get<int>();
    obs.obs_pts = unpack_matrix(rec.at("pts_b64").get<std::string>(),
                                rec.at("pts_rows").get<Eigen::Index>(), 3);
    obs.obs_attrs = unpack_matrix(rec.at("attrs_b64").get<std::string>(),
                                  rec.at("pts_rows").get<Eigen::Index>(),
                                  rec.at("attrs_cols").get<Eigen::Index>());
    obs.prior = &ds.categories[size_t(obs.category_id)].template_pts;
    if (rec.contains("gt")) obs.gt = gt_from(rec.at("gt"));

    const std::string split = rec.at("split").get<std::string>();
    if (split == "sim_train") {
      ds.sim_train.push_back(std::move(obs));
    } else if (split == "real_train") {
      ds.real_train.push_back(std::move(obs));
    } else if (split == "real_test") {
      ds.real_test.push_back(std::move(obs));
    } else {
      throw IoError("unknown split tag: " + split);
    }
  }
  return ds;
}

void Dataset::attach_real_labels() {
  if (labels_attached) return;
  const json labels = read_json(fs::path(dir) / "real_eval_labels.json");
  const auto& map = labels.at("labels");
  auto attach = [&](std::vector<ObservationTriplet>& v) {
    for (auto& obs : v) {
      if (!map.contains(obs.id)) {
        throw IoError("missing eval label for record " + obs.id);
      }
      obs.gt = gt_from(map.at(obs.id));
    }
  };
  attach(real_train);
  attach(real_test);
  labels_attached = true;
}

BatchSampler::BatchSampler(std::vector<const ObservationTriplet*> labeled,
                           std::vector<const ObservationTriplet*> unlabeled)
    : labeled_(std::move(labeled)), unlabeled_(std::move(unlabeled)) {
  order_l_.resize(labeled_.size());
  order_u_.resize(unlabeled_.size());
  for (size_t i = 0; i < order_l_.size(); ++i) order_l_[i] = i;
  for (size_t i = 0; i < order_u_.size(); ++i) order_u_[i] = i;
  next_l_ = order_l_.size();  // starts exhausted; callers open an epoch
  next_u_ = order_u_.size();
}

void BatchSampler::new_epoch(Rng& rng) {
  rng.shuffle(order_l_);
  rng.shuffle(order_u_);
  next_l_ = 0;
  next_u_ = 0;
}

std::vector<const ObservationTriplet*> BatchSampler::sample_batch(
    int b, int ratio_labeled, int ratio_unlabeled, Rng&) {
  if (b < 1 || ratio_labeled < 0 || ratio_unlabeled < 0 ||
      ratio_labeled + ratio_unlabeled == 0) {
    throw InvalidSpec("bad batch size or ratio");
  }
  const int want_l = int(std::ceil(
      double(b) * double(ratio_labeled) /
      double(ratio_labeled + ratio_unlabeled)));
  const int want_u = b - want_l;
  if (want_l > 0 && labeled_.empty()) {
    throw InsufficientData("no labeled records available");
  }
  if (want_u > 0 && unlabeled_.empty()) {
    throw InsufficientData("no unlabeled records available");
  }
  if (next_l_ + size_t(want_l) > order_l_.size() ||
      next_u_ + size_t(want_u) > order_u_.size()) {
    throw InsufficientData("epoch exhausted");
  }
  std::vector<const ObservationTriplet*> out;
  out.reserve(size_t(b));
  for (int i = 0; i < want_l; ++i) out.push_back(labeled_[order_l_[next_l_++]]);
  for (int i = 0; i < want_u; ++i) {
    out.push_back(unlabeled_[order_u_[next_u_++]]);
  }
  return out;
}

}  // namespace dpdn::datagen
