#include "dpdn/config.hpp"

#include <fstream>

namespace dpdn::cli {

using json = nlohmann::ordered_json;

RunConfig::RunConfig() {
  dataset.categories = datagen::default_categories();
  model = model::DpdnConfig::defaults();
  model.n_categories = int(dataset.categories.size());
}

void RunConfig::validate() const {
  if (mode != "sim-only" && mode != "supervised" && mode != "self-supervised") {
    throw ConfigError("unknown mode: " + mode);
  }
  for (const std::string& a : ablate) {
    if (a != "deformer" && a != "estimator" && a != "inter" && a != "intra" &&
        a != "parallel") {
      throw ConfigError("unknown ablation switch: " + a);
    }
  }
  if (ablate.count("estimator") && mode == "self-supervised") {
    throw ConfigError("estimator ablation needs pose-free training; "
                      "self-supervised mode requires the pose heads");
  }
  if (model.n_points != dataset.n_points || model.m_points != dataset.m_points ||
      model.attr_dim != dataset.attr_dim) {
    throw ConfigError("model and dataset disagree on N/M/k");
  }
  if (model.n_categories != int(dataset.categories.size())) {
    throw ConfigError("model category count does not match dataset");
  }
  if (optim.batch < 1 || optim.iterations < 0 || !(optim.lr > 0)) {
    throw ConfigError("bad optimizer settings");
  }
  if (optim.ratio_labeled < 0 || optim.ratio_unlabeled < 0 ||
      optim.ratio_labeled + optim.ratio_unlabeled == 0) {
    throw ConfigError("bad labeled:unlabeled ratio");
  }
  if (loss.lambda1 < 0 || loss.lambda2 < 0 || loss.beta1 < 0 ||
      loss.beta2 < 0 || loss.gamma1 < 0 || loss.gamma2 < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

model::DpdnConfig RunConfig::effective_model() const {
  model::DpdnConfig m = model;
  if (ablate.count("deformer")) m.use_deformer = false;
  return m;
}

datagen::DatasetSpec RunConfig::effective_dataset() const {
  datagen::DatasetSpec d = dataset;
  if (d.seed == 0) d.seed = derive_seed(seed, "datagen");
  return d;
}

namespace {

json vec3_json(const geometry::Vec3& v) {
  return json::array({v.x(), v.y(), v.z()});
}

geometry::Vec3 vec3_from(const json& j) {
  return geometry::Vec3(j.at(0).get<double>(), j.at(1).get<double>(),
                        j.at(2).get<double>());
}

json mlp_json(const model::MlpSpec& s) { return json(s.hidden); }

void read_mlp(const json& j, const char* key, model::MlpSpec& out) {
  if (j.contains(key)) out.hidden = j.at(key).get<std::vector<int>>();
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["run_id"] = run_id;
  j["mode"] = mode;
  j["ablate"] = std::vector<std::string>(ablate.begin(), ablate.end());

  json d;
  d["seed"] = dataset.seed;
  d["n_points"] = dataset.n_points;
  d["m_points"] = dataset.m_points;
  d["attr_dim"] = dataset.attr_dim;
  d["sim_train"] = dataset.sim_train;
  d["real_train"] = dataset.real_train;
  d["real_test"] = dataset.real_test;
  d["gap"] = {{"scale_shift", dataset.gap.scale_shift},
              {"extra_field_amp", dataset.gap.extra_field_amp},
              {"sigma_depth", dataset.gap.sigma_depth},
              {"sigma_attr", dataset.gap.sigma_attr}};
  d["pose"] = {{"rot_max_deg", dataset.pose.rot_max_deg},
               {"t_range", dataset.pose.t_range},
               {"diag_min", dataset.pose.diag_min},
               {"diag_max", dataset.pose.diag_max}};
  json cats = json::array();
  for (const auto& c : dataset.categories) {
    json parts = json::array();
    for (const auto& p : c.parts) {
      parts.push_back({{"family", datagen::family_name(p.family)},
                       {"scale", vec3_json(p.scale)},
                       {"offset", vec3_json(p.offset)}});
    }
    cats.push_back({{"name", c.name},
                    {"family", datagen::family_name(c.family)},
                    {"parts", parts},
                    {"symmetric", c.symmetric},
                    {"symmetry_axis", vec3_json(c.symmetry_axis)},
                    {"deform",
                     {{"scale_jitter", c.deform.scale_jitter},
                      {"field_amp", c.deform.field_amp},
                      {"field_freq", c.deform.field_freq}}}});
  }
  d["categories"] = cats;
  j["dataset"] = d;

  json m;
  m["feat_dim"] = model.feat_dim;
  m["coord_embed_dim"] = model.coord_embed_dim;
  m["enc_attr"] = mlp_json(model.enc_attr);
  m["enc_pts"] = mlp_json(model.enc_pts);
  m["deform"] = mlp_json(model.deform);
  m["assign"] = mlp_json(model.assign);
  m["shape"] = mlp_json(model.shape);
  m["coord_embed"] = mlp_json(model.coord_embed);
  m["corr"] = mlp_json(model.corr);
  m["fuse"] = mlp_json(model.fuse);
  m["head"] = mlp_json(model.head);
  j["model"] = m;

  j["loss"] = {{"lambda1", loss.lambda1}, {"lambda2", loss.lambda2},
               {"beta1", loss.beta1},     {"beta2", loss.beta2},
               {"gamma1", loss.gamma1},   {"gamma2", loss.gamma2}};

  j["optim"] = {{"lr", optim.lr},
                {"iterations", optim.iterations},
                {"batch", optim.batch},
                {"ratio_labeled", optim.ratio_labeled},
                {"ratio_unlabeled", optim.ratio_unlabeled},
                {"checkpoint_interval", optim.checkpoint_interval},
                {"adam_beta1", optim.adam_beta1},
                {"adam_beta2", optim.adam_beta2},
                {"adam_eps", optim.adam_eps}};

  json ev;
  ev["iou"] = eval.iou;
  json pose = json::array();
  for (const auto& [deg, tr] : eval.pose) pose.push_back({deg, tr});
  ev["pose"] = pose;
  j["eval"] = ev;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    read_field(j, "seed", c.seed);
    read_field(j, "run_id", c.run_id);
    read_field(j, "mode", c.mode);
    if (j.contains("ablate")) {
      for (const auto& a : j.at("ablate")) {
        c.ablate.insert(a.get<std::string>());
      }
    }

    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      read_field(d, "seed", c.dataset.seed);
      read_field(d, "n_points", c.dataset.n_points);
      read_field(d, "m_points", c.dataset.m_points);
      read_field(d, "attr_dim", c.dataset.attr_dim);
      read_field(d, "sim_train", c.dataset.sim_train);
      read_field(d, "real_train", c.dataset.real_train);
      read_field(d, "real_test", c.dataset.real_test);
      if (d.contains("gap")) {
        const json& g = d.at("gap");
        read_field(g, "scale_shift", c.dataset.gap.scale_shift);
        read_field(g, "extra_field_amp", c.dataset.gap.extra_field_amp);
        read_field(g, "sigma_depth", c.dataset.gap.sigma_depth);
        read_field(g, "sigma_attr", c.dataset.gap.sigma_attr);
      }
      if (d.contains("pose")) {
        const json& p = d.at("pose");
        read_field(p, "rot_max_deg", c.dataset.pose.rot_max_deg);
        read_field(p, "t_range", c.dataset.pose.t_range);
        read_field(p, "diag_min", c.dataset.pose.diag_min);
        read_field(p, "diag_max", c.dataset.pose.diag_max);
      }
      if (d.contains("categories")) {
        c.dataset.categories.clear();
        for (const auto& cj : d.at("categories")) {
          datagen::CategorySpec spec;
          spec.name = cj.at("name").get<std::string>();
          spec.family =
              datagen::family_from_name(cj.at("family").get<std::string>());
          if (cj.contains("parts")) {
            for (const auto& pj : cj.at("parts")) {
              datagen::PartSpec part;
              part.family =
                  datagen::family_from_name(pj.at("family").get<std::string>());
              part.scale = vec3_from(pj.at("scale"));
              part.offset = vec3_from(pj.at("offset"));
              spec.parts.push_back(part);
            }
          }
          read_field(cj, "symmetric", spec.symmetric);
          if (cj.contains("symmetry_axis")) {
            spec.symmetry_axis = vec3_from(cj.at("symmetry_axis"));
          }
          if (cj.contains("deform")) {
            const json& dj = cj.at("deform");
            read_field(dj, "scale_jitter", spec.deform.scale_jitter);
            read_field(dj, "field_amp", spec.deform.field_amp);
            read_field(dj, "field_freq", spec.deform.field_freq);
          }
          c.dataset.categories.push_back(std::move(spec));
        }
      }
    }

    // Mirror the dataset sizes into the model, then apply overrides.
    c.model = model::DpdnConfig::defaults();
    c.model.n_points = c.dataset.n_points;
    c.model.m_points = c.dataset.m_points;
    c.model.attr_dim = c.dataset.attr_dim;
    c.model.n_categories = int(c.dataset.categories.size());
    if (j.contains("model")) {
      const json& m = j.at("model");
      read_field(m, "feat_dim", c.model.feat_dim);
      read_field(m, "coord_embed_dim", c.model.coord_embed_dim);
      // Refresh the encoder defaults that depend on feat_dim.
      c.model.enc_attr.hidden = {c.model.feat_dim, c.model.feat_dim};
      c.model.enc_pts.hidden = {c.model.feat_dim, c.model.feat_dim};
      read_mlp(m, "enc_attr", c.model.enc_attr);
      read_mlp(m, "enc_pts", c.model.enc_pts);
      read_mlp(m, "deform", c.model.deform);
      read_mlp(m, "assign", c.model.assign);
      read_mlp(m, "shape", c.model.shape);
      read_mlp(m, "coord_embed", c.model.coord_embed);
      read_mlp(m, "corr", c.model.corr);
      read_mlp(m, "fuse", c.model.fuse);
      read_mlp(m, "head", c.model.head);
    }

    if (j.contains("loss")) {
      const json& l = j.at("loss");
      read_field(l, "lambda1", c.loss.lambda1);
      read_field(l, "lambda2", c.loss.lambda2);
      read_field(l, "beta1", c.loss.beta1);
      read_field(l, "beta2", c.loss.beta2);
      read_field(l, "gamma1", c.loss.gamma1);
      read_field(l, "gamma2", c.loss.gamma2);
    }
    if (j.contains("optim")) {
      const json& o = j.at("optim");
      read_field(o, "lr", c.optim.lr);
      read_field(o, "iterations", c.optim.iterations);
      read_field(o, "batch", c.optim.batch);
      read_field(o, "ratio_labeled", c.optim.ratio_labeled);
      read_field(o, "ratio_unlabeled", c.optim.ratio_unlabeled);
      read_field(o, "checkpoint_interval", c.optim.checkpoint_interval);
      read_field(o, "adam_beta1", c.optim.adam_beta1);
      read_field(o, "adam_beta2", c.optim.adam_beta2);
      read_field(o, "adam_eps", c.optim.adam_eps);
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      if (e.contains("iou")) c.eval.iou = e.at("iou").get<std::vector<double>>();
      if (e.contains("pose")) {
        c.eval.pose.clear();
        for (const auto& pj : e.at("pose")) {
          c.eval.pose.emplace_back(pj.at(0).get<double>(),
                                   pj.at(1).get<double>());
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw ConfigError("bad config JSON in " + path + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write config: " + path);
  os << to_json().dump(2) << "\n";
}

}  // namespace dpdn::cli
