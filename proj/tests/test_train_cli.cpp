#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dpdn/train.hpp"

using namespace dpdn;
using namespace dpdn::cli;

namespace fs = std::filesystem;

namespace {

RunConfig tiny_run_config(uint64_t seed = 9001) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.run_id = "tiny";
  cfg.dataset.n_points = 32;
  cfg.dataset.m_points = 32;
  cfg.dataset.attr_dim = 8;
  cfg.dataset.sim_train = 12;
  cfg.dataset.real_train = 8;
  cfg.dataset.real_test = 6;
  cfg.dataset.gap.scale_shift = 0.1;
  cfg.dataset.gap.extra_field_amp = 0.03;
  cfg.dataset.gap.sigma_depth = 0.003;
  cfg.dataset.gap.sigma_attr = 0.1;
  cfg.model.n_points = 32;
  cfg.model.m_points = 32;
  cfg.model.attr_dim = 8;
  cfg.model.feat_dim = 8;
  cfg.model.enc_attr.hidden = {8, 8};
  cfg.model.enc_pts.hidden = {8, 8};
  cfg.model.deform.hidden = {8};
  cfg.model.assign.hidden = {8};
  cfg.model.shape.hidden = {8};
  cfg.model.coord_embed.hidden = {8};
  cfg.model.corr.hidden = {8};
  cfg.model.fuse.hidden = {8};
  cfg.model.head.hidden = {8};
  cfg.optim.lr = 1e-3;
  cfg.optim.iterations = 12;
  cfg.optim.batch = 4;
  cfg.optim.ratio_labeled = 3;
  cfg.optim.ratio_unlabeled = 1;
  cfg.mode = "self-supervised";
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config JSON round trip preserves the run definition") {
  RunConfig cfg = tiny_run_config();
  cfg.ablate = {"inter"};
  cfg.mode = "self-supervised";
  const RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.seed == cfg.seed);
  CHECK(back.mode == cfg.mode);
  CHECK(back.ablate == cfg.ablate);
  CHECK(back.model.feat_dim == cfg.model.feat_dim);
  CHECK(back.model.assign.hidden == cfg.model.assign.hidden);
  CHECK(back.optim.iterations == cfg.optim.iterations);
  CHECK(back.dataset.gap.sigma_depth == cfg.dataset.gap.sigma_depth);
  CHECK(back.loss.lambda1 == cfg.loss.lambda1);
  CHECK(back.eval.pose.size() == cfg.eval.pose.size());
}

TEST_CASE("config validation rejects bad settings") {
  RunConfig cfg = tiny_run_config();
  cfg.mode = "bogus";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_run_config();
  cfg.ablate = {"nonsense"};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_run_config();
  cfg.model.n_points = 64;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_run_config();
  cfg.mode = "self-supervised";
  cfg.ablate = {"estimator"};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("paper-scale defaults are the shipped ones") {
  const RunConfig cfg;
  CHECK(cfg.optim.batch == 24);
  CHECK(cfg.optim.ratio_labeled == 3);
  CHECK(cfg.optim.ratio_unlabeled == 1);
  CHECK(cfg.optim.iterations == 120000);
  CHECK(cfg.model.n_points == 1024);
  CHECK(cfg.model.m_points == 1024);
  CHECK(cfg.model.feat_dim == 128);
  CHECK(cfg.loss.lambda1 == 0.2);
  CHECK(cfg.loss.lambda2 == 0.02);
  CHECK(cfg.loss.beta1 == 5.0);
  CHECK(cfg.loss.beta2 == 1.0);
  CHECK(cfg.loss.gamma1 == 5.0);
  CHECK(cfg.loss.gamma2 == 1.0);
}

TEST_CASE("training runs, logs, checkpoints, and is deterministic") {
  const RunConfig cfg = tiny_run_config();
  TempDir dir("train_cli_test");
  const std::string data = (dir.path / "data").string();
  datagen::make_split(cfg.effective_dataset(), data);

  const std::string ckpt1 = (dir.path / "a.dpdn").string();
  const TrainOutputs out1 = run_training(cfg, data, ckpt1);
  CHECK(fs::exists(out1.checkpoint));
  CHECK(fs::exists(out1.log_csv));
  CHECK(fs::exists(out1.config_echo));

  SUBCASE("log columns are pinned") {
    std::ifstream is(out1.log_csv);
    std::string header;
    std::getline(is, header);
    CHECK(header == "iter,L_total,L_sup,L_inter,L_intra1,L_intra2");
    int rows = 0;
    std::string line;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == cfg.optim.iterations);
  }

  SUBCASE("identical config and data give a byte-identical checkpoint") {
    const std::string ckpt2 = (dir.path / "b.dpdn").string();
    const TrainOutputs out2 = run_training(cfg, data, ckpt2);
    CHECK(slurp(out1.checkpoint) == slurp(out2.checkpoint));
    CHECK(slurp(out1.log_csv) == slurp(out2.log_csv));
  }

  SUBCASE("evaluation emits all six headline metrics, twice identically") {
    const std::string rep1 = (dir.path / "rep1.json").string();
    const EvalOutputs e1 = run_evaluation(ckpt1, data, cfg, rep1);
    const std::vector<std::string> expect = {"IoU50",   "IoU75",   "5deg2cm",
                                             "5deg5cm", "10deg2cm", "10deg5cm"};
    CHECK(e1.head.metrics == expect);
    CHECK(e1.umeyama.metrics == expect);
    CHECK(fs::exists(e1.head_json));
    CHECK(fs::exists(e1.head_csv));
    CHECK(fs::exists(e1.umeyama_json));
    CHECK(fs::exists(e1.umeyama_csv));

    const std::string rep2 = (dir.path / "rep2.json").string();
    const EvalOutputs e2 = run_evaluation(ckpt1, data, cfg, rep2);
    CHECK(slurp(e1.head_json) == slurp(e2.head_json));
    CHECK(slurp(e1.umeyama_json) == slurp(e2.umeyama_json));
  }

  SUBCASE("interval checkpoints are written") {
    RunConfig interval_cfg = cfg;
    interval_cfg.optim.checkpoint_interval = 5;
    const std::string ckpt3 = (dir.path / "c.dpdn").string();
    run_training(interval_cfg, data, ckpt3);
    CHECK(fs::exists(ckpt3 + ".iter5"));
    CHECK(fs::exists(ckpt3 + ".iter10"));
    CHECK(fs::exists(ckpt3));
  }
}

TEST_CASE("self-supervised training never reads the real label file") {
  RunConfig cfg = tiny_run_config(9101);
  TempDir dir("train_cli_nolabels");
  const std::string data = (dir.path / "data").string();
  datagen::make_split(cfg.effective_dataset(), data);
  fs::remove(fs::path(data) / "real_eval_labels.json");

  const std::string ckpt = (dir.path / "a.dpdn").string();
  CHECK_NOTHROW(run_training(cfg, data, ckpt));

  // evaluation without labels is an explicit error, not silent zeros
  const std::string rep = (dir.path / "rep.json").string();
  CHECK_THROWS_AS(run_evaluation(ckpt, data, cfg, rep), IoError);
}

TEST_CASE("sim-only training ignores real records entirely") {
  RunConfig cfg = tiny_run_config(9202);
  cfg.mode = "sim-only";
  TempDir dir("train_cli_simonly");
  const std::string data = (dir.path / "data").string();
  datagen::make_split(cfg.effective_dataset(), data);

  const std::string ckpt1 = (dir.path / "a.dpdn").string();
  run_training(cfg, data, ckpt1);

  // corrupt every real_train record's points; a sim-only run must not notice
  for (int i = 0; i < cfg.dataset.real_train; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", i);
    const fs::path f = fs::path(data) / "records" /
                       ("real_train_" + std::string(buf) + ".json");
    std::string text = slurp(f);
    const size_t at = text.find("\"pts_b64\": \"");
    REQUIRE(at != std::string::npos);
    text[at + 12] = text[at + 12] == 'A' ? 'B' : 'A';
    std::ofstream os(f, std::ios::binary | std::ios::trunc);
    os << text;
  }
  const std::string ckpt2 = (dir.path / "b.dpdn").string();
  run_training(cfg, data, ckpt2);
  CHECK(slurp(ckpt1) == slurp(ckpt2));
}

TEST_CASE("ablation switches run end to end") {
  TempDir dir("train_cli_ablate");
  RunConfig cfg = tiny_run_config(9303);
  const std::string data = (dir.path / "data").string();
  datagen::make_split(cfg.effective_dataset(), data);

  for (const std::string a :
       {"deformer", "inter", "intra", "parallel", "estimator"}) {
    RunConfig run = cfg;
    if (a == "estimator" || a == "parallel") run.mode = "sim-only";
    run.ablate = {a};
    run.run_id = "ablate_" + a;
    const std::string ckpt = (dir.path / ("ck_" + a + ".dpdn")).string();
    CHECK_NOTHROW(run_training(run, data, ckpt));
    // evaluation works for every ablation (pose heads may be untrained but
    // must still produce reports)
    const std::string rep = (dir.path / ("rep_" + a + ".json")).string();
    CHECK_NOTHROW(run_evaluation(ckpt, data, run, rep));
  }
}

TEST_CASE("checkpoint/config mismatch is detected") {
  TempDir dir("train_cli_mismatch");
  RunConfig cfg = tiny_run_config(9404);
  const std::string data = (dir.path / "data").string();
  datagen::make_split(cfg.effective_dataset(), data);
  const std::string ckpt = (dir.path / "a.dpdn").string();
  run_training(cfg, data, ckpt);

  RunConfig wrong = cfg;
  wrong.model.feat_dim = 12;
  wrong.model.enc_attr.hidden = {12, 12};
  wrong.model.enc_pts.hidden = {12, 12};
  const std::string rep = (dir.path / "rep.json").string();
  CHECK_THROWS_AS(run_evaluation(ckpt, data, wrong, rep), CheckpointMismatch);
}

TEST_CASE("end-to-end determinism across the full pipeline") {
  RunConfig cfg = tiny_run_config(9505);
  auto one_pass = [&](const std::string& root) {
    TempDir dir(root);
    const std::string data = (dir.path / "data").string();
    datagen::make_split(cfg.effective_dataset(), data);
    const std::string ckpt = (dir.path / "a.dpdn").string();
    run_training(cfg, data, ckpt);
    const std::string rep = (dir.path / "rep.json").string();
    run_evaluation(ckpt, data, cfg, rep);
    return std::tuple(slurp(fs::path(data) / "manifest.json"), slurp(ckpt),
                      slurp(rep));
  };
  const auto a = one_pass("e2e_det");
  const auto b = one_pass("e2e_det");
  CHECK(std::get<0>(a) == std::get<0>(b));
  CHECK(std::get<1>(a) == std::get<1>(b));
  CHECK(std::get<2>(a) == std::get<2>(b));
}
