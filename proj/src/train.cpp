#include "dpdn/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dpdn/objectives.hpp"

namespace dpdn::cli {

namespace fs = std::filesystem;
using geometry::RigidScaleTransform;
using objectives::DualPrediction;
using objectives::LossWeights;
using tensor::Matrix;
using tensor::ParamStore;
using tensor::Tape;
using tensor::Tensor;

namespace {

// Row-form of (1/ds) dR^T (p - dt) over a whole point matrix.
Matrix transform_points(const Matrix& pts, const RigidScaleTransform& g) {
  Matrix out = pts;
  out.rowwise() -= g.dt.transpose();
  out = (out * g.dr.matrix()) / g.ds;
  return out;
}

struct InstanceLossParts {
  double supervised = 0.0;
  double inter = 0.0;
  double intra1 = 0.0;
  double intra2 = 0.0;
};

DualPrediction make_dual(Tape& tape, const ParamStore& store,
                         const model::DpdnConfig& mcfg,
                         const ObservationTriplet& obs,
                         const RigidScaleTransform& g1,
                         const RigidScaleTransform* g2) {
  const model::SharedFeatures shared =
      model::encode_shared(tape, store, mcfg, obs.obs_attrs, *obs.prior);

  DualPrediction dp;
  dp.g1 = g1;
  dp.b1 = model::forward_branch(tape, store, mcfg, shared,
                                transform_points(obs.obs_pts, g1));
  dp.composed1 = tensor::compose_solution(dp.b1.pose_tensors(), g1);
  if (g2 != nullptr) {
    dp.g2 = *g2;
    dp.b2 = model::forward_branch(tape, store, mcfg, shared,
                                  transform_points(obs.obs_pts, *g2));
    dp.composed2 = tensor::compose_solution(dp.b2->pose_tensors(), *g2);
  }
  return dp;
}

// Supervised objective with the pose terms removable (estimator ablation).
Tensor supervised_term(const DualPrediction& dp, const ObservationTriplet& obs,
                       const LossWeights& w, bool with_pose) {
  if (with_pose) return objectives::supervised_loss(dp, obs.gt, w);
  if (!obs.gt) throw MissingLabels("supervised loss on an unlabeled instance");
  Tape& tape = *dp.b1.q_o.tape;
  const Tensor gt_qv = tape.constant(obs.gt->q_v);
  const Tensor gt_qo = tape.constant(obs.gt->q_o);
  Tensor loss = tensor::scale(tensor::chamfer(dp.b1.q_v, gt_qv), w.gamma1);
  loss = tensor::add(
      loss, tensor::scale(tensor::smooth_l1_mean(dp.b1.q_o, gt_qo), w.gamma2));
  if (dp.has_second()) {
    loss = tensor::add(
        loss, tensor::scale(tensor::chamfer(dp.b2->q_v, gt_qv), w.gamma1));
    loss = tensor::add(loss, tensor::scale(
                                 tensor::smooth_l1_mean(dp.b2->q_o, gt_qo),
                                 w.gamma2));
  }
  return loss;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << text;
  if (!os) throw IoError("failed writing " + path);
}

std::string sibling_path(const std::string& base, const std::string& suffix) {
  return base + suffix;
}

std::string replace_extension(const std::string& path,
                              const std::string& suffix,
                              const std::string& new_ext) {
  fs::path p(path);
  const std::string stem = (p.parent_path() / p.stem()).string();
  return stem + suffix + new_ext;
}

}  // namespace

void ensure_dataset(const RunConfig& cfg, const std::string& data_dir) {
  if (fs::exists(fs::path(data_dir) / "manifest.json")) return;
  datagen::make_split(cfg.effective_dataset(), data_dir);
}

TrainOutputs run_training(const RunConfig& cfg, const std::string& data_dir,
                          const std::string& out_ckpt) {
  cfg.validate();
  const model::DpdnConfig mcfg = cfg.effective_model();
  const bool self_supervised = cfg.mode == "self-supervised";
  const bool supervised_real = cfg.mode == "supervised";
  const bool dual_branch = !cfg.ablate.count("parallel");
  const bool with_pose_terms = !cfg.ablate.count("estimator");

  LossWeights w = cfg.loss;
  if (cfg.ablate.count("inter")) w.lambda1 = 0.0;
  if (cfg.ablate.count("intra")) w.lambda2 = 0.0;

  datagen::Dataset ds = datagen::Dataset::load(data_dir);
  if (ds.spec.n_points != mcfg.n_points || ds.spec.m_points != mcfg.m_points ||
      ds.spec.attr_dim != mcfg.attr_dim) {
    throw ConfigError("dataset and model disagree on N/M/k");
  }

  std::vector<const ObservationTriplet*> labeled, unlabeled;
  for (const auto& o : ds.sim_train) labeled.push_back(&o);
  if (supervised_real) {
    // Real annotations are part of the supervised setting; they are the one
    // place the trainer reads the eval-label file.
    ds.attach_real_labels();
    for (auto& o : ds.real_train) {
      o.alpha = 1;
      labeled.push_back(&o);
    }
  } else if (self_supervised) {
    for (const auto& o : ds.real_train) unlabeled.push_back(&o);
  }
  const int ratio_l = self_supervised ? cfg.optim.ratio_labeled : 1;
  const int ratio_u = self_supervised ? cfg.optim.ratio_unlabeled : 0;

  ParamStore store;
  model::init_params(store, mcfg, derive_seed(cfg.seed, "init"));

  Rng train_rng(derive_seed(cfg.seed, "train"));
  datagen::BatchSampler sampler(std::move(labeled), std::move(unlabeled));
  sampler.new_epoch(train_rng);

  std::string log;
  log.reserve(size_t(cfg.optim.iterations) * 64 + 64);
  log += "iter,L_total,L_sup,L_inter,L_intra1,L_intra2\n";

  for (int iter = 1; iter <= cfg.optim.iterations; ++iter) {
    std::vector<const ObservationTriplet*> batch;
    try {
      batch = sampler.sample_batch(cfg.optim.batch, ratio_l, ratio_u, train_rng);
    } catch (const InsufficientData&) {
      sampler.new_epoch(train_rng);
      batch = sampler.sample_batch(cfg.optim.batch, ratio_l, ratio_u, train_rng);
    }

    // Transforms are drawn up front in batch order so the draw sequence does
    // not depend on how instances are processed.
    std::vector<RigidScaleTransform> g1s, g2s;
    for (size_t i = 0; i < batch.size(); ++i) {
      g1s.push_back(geometry::sample_random_transform(train_rng));
      g2s.push_back(geometry::sample_random_transform(train_rng));
    }

    int b1 = 0, b2 = 0;
    for (const auto* obs : batch) (obs->alpha ? b1 : b2) += 1;

    tensor::GradientMap accum;
    for (const auto& [name, e] : store.entries()) {
      accum.grads[name] = Matrix::Zero(e.value.rows(), e.value.cols());
    }

    double total = 0.0, sup_sum = 0.0, inter_sum = 0.0;
    double intra1_sum = 0.0, intra2_sum = 0.0;

    for (size_t i = 0; i < batch.size(); ++i) {
      const ObservationTriplet& obs = *batch[i];
      Tape tape;
      DualPrediction dp = make_dual(tape, store, mcfg, obs, g1s[i],
                                    dual_branch ? &g2s[i] : nullptr);

      Tensor loss;
      double weight;
      if (obs.alpha) {
        loss = supervised_term(dp, obs, w, with_pose_terms);
        weight = 1.0 / double(b1);
        sup_sum += loss.scalar();
      } else {
        const Tensor inter = dp.has_second()
                                 ? objectives::inter_consistency_loss(dp, w)
                                 : tape.constant(Matrix::Zero(1, 1));
        const Tensor intra1 = objectives::intra_consistency_loss(
            dp.composed1, dp.b1.q_o, obs.obs_pts);
        inter_sum += inter.scalar();
        intra1_sum += intra1.scalar();
        Tensor intra = intra1;
        if (dp.has_second()) {
          const Tensor intra2 = objectives::intra_consistency_loss(
              *dp.composed2, dp.b2->q_o, obs.obs_pts);
          intra2_sum += intra2.scalar();
          intra = tensor::add(intra, intra2);
        }
        loss = tensor::add(tensor::scale(inter, w.lambda1),
                           tensor::scale(intra, w.lambda2));
        weight = 1.0 / double(b2);
      }

      const double lv = loss.scalar();
      if (!std::isfinite(lv)) {
        throw NumericalDivergence("non-finite loss at iteration " +
                                  std::to_string(iter) + " on record " +
                                  obs.id);
      }
      total += weight * lv;

      const tensor::GradientMap gm = tensor::backward(tape, loss, store, weight);
      for (auto& [name, g] : accum.grads) {
        g += gm.grads.at(name);
      }
    }

    adam_step(store, accum, cfg.optim.lr, cfg.optim.adam_beta1,
              cfg.optim.adam_beta2, cfg.optim.adam_eps);

    char row[160];
    std::snprintf(row, sizeof(row), "%d,%.9g,%.9g,%.9g,%.9g,%.9g\n", iter,
                  total, b1 ? sup_sum / b1 : 0.0, b2 ? inter_sum / b2 : 0.0,
                  b2 ? intra1_sum / b2 : 0.0, b2 ? intra2_sum / b2 : 0.0);
    log += row;

    if (cfg.optim.checkpoint_interval > 0 &&
        iter % cfg.optim.checkpoint_interval == 0 &&
        iter != cfg.optim.iterations) {
      tensor::save_checkpoint(
          store, sibling_path(out_ckpt, ".iter" + std::to_string(iter)));
    }
  }

  if (!out_ckpt.empty()) {
    const fs::path parent = fs::path(out_ckpt).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
  }
  tensor::save_checkpoint(store, out_ckpt);

  TrainOutputs out;
  out.checkpoint = out_ckpt;
  out.log_csv = sibling_path(out_ckpt, ".log.csv");
  out.config_echo = sibling_path(out_ckpt, ".config.json");
  out.iterations_run = cfg.optim.iterations;
  write_text_file(out.log_csv, log);
  cfg.save(out.config_echo);
  return out;
}

EvalOutputs run_evaluation(const std::string& ckpt_path,
                           const std::string& data_dir, const RunConfig& cfg,
                           const std::string& report_path) {
  cfg.validate();
  const model::DpdnConfig mcfg = cfg.effective_model();

  ParamStore expected;
  model::init_params(expected, mcfg, derive_seed(cfg.seed, "init"));
  ParamStore store = tensor::load_checkpoint(ckpt_path);
  tensor::validate_same_layout(store, expected);

  datagen::Dataset ds = datagen::Dataset::load(data_dir);
  if (ds.spec.n_points != mcfg.n_points || ds.spec.m_points != mcfg.m_points ||
      ds.spec.attr_dim != mcfg.attr_dim) {
    throw CheckpointMismatch("dataset and model disagree on N/M/k");
  }
  ds.attach_real_labels();
  if (ds.real_test.empty()) throw EmptyRecords("real_test split is empty");

  std::vector<evalharness::InstanceRecord> head_records;
  std::vector<evalharness::UmeyamaRecord> ume_records;
  for (const auto& obs : ds.real_test) {
    const datagen::Category& cat = ds.categories[size_t(obs.category_id)];
    evalharness::InstanceRecord rec;
    rec.id = obs.id;
    rec.category = cat.spec.name;
    rec.gt = obs.gt->pose;
    rec.symmetric = cat.spec.symmetric;
    rec.symmetry_axis = cat.spec.symmetry_axis;

    evalharness::UmeyamaRecord ume;
    ume.id = obs.id;
    ume.category = cat.spec.name;
    ume.p_o = obs.obs_pts;
    ume.gt = obs.gt->pose;
    ume.symmetric = cat.spec.symmetric;
    ume.symmetry_axis = cat.spec.symmetry_axis;

    try {
      Tape tape;
      const model::PredictionBundle bundle =
          model::dpdn_forward(tape, store, mcfg, obs);
      ume.q_o = bundle.q_o.value();
      rec.pred = geometry::Pose(bundle.rotation(), bundle.translation(),
                                bundle.size_vec());
    } catch (const DegenerateSixD&) {
      rec.pred.reset();
    } catch (const InvalidPose&) {
      rec.pred.reset();  // non-positive predicted size: scored as failure
    }
    if (ume.q_o.rows() == 0) {
      // Forward failed before producing correspondence; an empty set scores
      // the instance as a failure downstream.
      ume.q_o = Eigen::MatrixXd::Zero(obs.obs_pts.rows(), 3);
    }
    head_records.push_back(std::move(rec));
    ume_records.push_back(std::move(ume));
  }

  nlohmann::ordered_json echo = cfg.to_json();
  echo["checkpoint"] = ckpt_path;
  nlohmann::ordered_json echo_head = echo;
  echo_head["scoring"] = "estimator";
  nlohmann::ordered_json echo_ume = echo;
  echo_ume["scoring"] = "umeyama";

  EvalOutputs out;
  out.head = evalharness::compute_map(head_records, cfg.eval, cfg.run_id,
                                      std::move(echo_head));
  out.umeyama = evalharness::evaluate_umeyama_baseline(
      ume_records, cfg.eval, cfg.run_id, std::move(echo_ume));

  const fs::path rp(report_path);
  const std::string ext = rp.extension() == ".json" ? ".json" : ".json";
  out.head_json = report_path;
  out.head_csv = replace_extension(report_path, "", ".csv");
  out.umeyama_json = replace_extension(report_path, "_umeyama", ext);
  out.umeyama_csv = replace_extension(report_path, "_umeyama", ".csv");

  const fs::path parent = rp.parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  evalharness::write_report(out.head, out.head_json, out.head_csv);
  evalharness::write_report(out.umeyama, out.umeyama_json, out.umeyama_csv);
  return out;
}

}  // namespace dpdn::cli
