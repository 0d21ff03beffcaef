#include <gtest/gtest.h>

#include <filesystem>

#include "rdb/checkpoint.hpp"
#include "rdb/evaluation.hpp"
#include "rdb/synthetic.hpp"
#include "rdb/training.hpp"

namespace rdb {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "rdb-unit" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Agents crossing the unit square on straight lines at constant speed.
Scene linear_scene(std::uint64_t seed, int agents = 12, int frames = 40) {
  Scene s;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int a = 0; a < agents; ++a) {
    const double x0 = 0.2 + 0.3 * u(rng), y0 = 0.2 + 0.3 * u(rng);
    const double vx = 0.012 * (u(rng) - 0.3), vy = 0.012 * (u(rng) - 0.3);
    for (int f = 0; f < frames; ++f) s.dataset.states.push_back({a, f, x0 + vx * f, y0 + vy * f});
  }
  std::sort(s.dataset.states.begin(), s.dataset.states.end(),
            [](const AgentState& a, const AgentState& b) {
              return std::tie(a.frame, a.agent_id) < std::tie(b.frame, b.agent_id);
            });
  s.dataset.name = "linear" + std::to_string(seed);
  s.dataset.frame_count = frames;
  s.dataset.n_max = agents;
  return s;
}

TEST(Evaluation, AdeFdeHandCases) {
  const Trajectory truth{{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
  EXPECT_EQ(ade(truth, truth), 0.0);
  EXPECT_EQ(fde(truth, truth), 0.0);
  const Trajectory offset{{0.1, 0.0}, {0.1, 0.0}, {0.1, 0.0}};
  EXPECT_NEAR(ade(offset, truth), 0.1, 1e-15);
  const Trajectory ramp{{0.0, 0.0}, {0.1, 0.0}, {0.2, 0.0}};
  EXPECT_NEAR(ade(ramp, truth), std::sqrt((0.0 + 0.01 + 0.04) / 3.0), 1e-15);
  EXPECT_NEAR(ade(ramp, truth), 0.129099, 1e-6);
  const Trajectory last{{0.0, 0.0}, {0.0, 0.0}, {0.3, 0.4}};
  EXPECT_NEAR(fde(last, truth), 0.5, 1e-15);
  const Trajectory grow{{0.0, 0.0}, {0.0, 0.1}, {0.0, 0.2}};
  EXPECT_NEAR(fde(grow, truth), 0.2, 1e-15);
  EXPECT_THROW(ade(Trajectory{{0, 0}}, truth), Error);
}

TEST(Evaluation, ConstantVelocityExtrapolates) {
  const auto p = constant_velocity_predict({{0.0, 0.0}, {0.1, 0.0}}, 3);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_NEAR(p[0].x, 0.2, 1e-15);
  EXPECT_NEAR(p[1].x, 0.3, 1e-15);
  EXPECT_NEAR(p[2].x, 0.4, 1e-15);
  const auto still = constant_velocity_predict({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}, 2);
  EXPECT_EQ(still[1].x, 0.5);
  EXPECT_THROW(constant_velocity_predict({{0.0, 0.0}}, 2), Error);
}

TEST(Evaluation, OracleAndConstantVelocityBaselines) {
  const Scene s = linear_scene(1);
  EvalOptions e;
  OraclePredictor oracle;
  const auto r = evaluate(oracle, {&s}, e);
  EXPECT_EQ(r.ade, 0.0);
  EXPECT_EQ(r.fde, 0.0);
  EXPECT_GT(r.trajectories, 0u);
  ConstantVelocityPredictor cv;
  EXPECT_LT(evaluate(cv, {&s}, e).ade, 1e-6);
}

TEST(Evaluation, RandomBaselineMatchesMonteCarlo) {
  // Expected RMSE of a uniform draw against a fixed point, averaged over
  // positions; independent Monte Carlo against the harness.
  const Scene s = linear_scene(2, 40, 300);
  EvalOptions e;
  e.pred_len = 1;
  e.obs_len = 2;
  e.stride = 1;
  RandomUniformPredictor random;
  const auto r = evaluate(random, {&s}, e);
  ASSERT_GE(r.trajectories, 10000u);
  Rng rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double mc = 0.0;
  std::size_t n = 0;
  for (const auto& st : s.dataset.states) {
    const double dx = u(rng) - st.x, dy = u(rng) - st.y;
    mc += std::sqrt(dx * dx + dy * dy);
    ++n;
  }
  EXPECT_NEAR(r.ade, mc / n, 0.01);
}

TEST(Evaluation, ReportCsvHeader) {
  const Scene s = linear_scene(3);
  ConstantVelocityPredictor cv;
  const auto csv = report_csv(evaluate(cv, {&s}, EvalOptions{}, "cv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "dataset,mode,obs_len,pred_len,ade,fde,n_trajectories");
}

TrainConfig quick_b(int epochs, int batch_frames = 8) {
  TrainConfig t = predictor_train_defaults();
  t.epochs = epochs;
  t.batch_frames = batch_frames;
  t.seed = 4;
  return t;
}

TEST(Training, PositionsOnlyPredictorLearnsConstantVelocity) {
  std::vector<Scene> scenes{linear_scene(10), linear_scene(11), linear_scene(12)};
  std::vector<EncodedScene> enc;
  for (const auto& s : scenes) enc.push_back(encode_scene(nullptr, s, s.dataset.n_max, 0));
  std::vector<const TrajectoryDataset*> ds;
  std::vector<const EncodedScene*> es;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    ds.push_back(&scenes[i].dataset);
    es.push_back(&enc[i]);
  }
  PredictorConfig pc;
  pc.inputs = InputConfig::kS;
  pc.hidden = 64;
  const auto trained = train_predictor(ds, es, nullptr, pc, 12, quick_b(60, 2));
  auto bundle = std::make_shared<ModelBundle>();
  bundle->predictor = trained.model;
  RdbPredictor model(bundle, 0.0, ContextMode::kClosedLoop);
  const Scene test = linear_scene(13);
  EvalOptions e;
  e.obs_len = 4;
  e.pred_len = 8;
  EXPECT_LT(evaluate(model, {&test}, e).ade, 0.02);
}

TEST(Training, SameSeedSameHistory) {
  std::vector<Scene> scenes{linear_scene(20)};
  const auto enc = encode_scene(nullptr, scenes[0], scenes[0].dataset.n_max, 0);
  PredictorConfig pc;
  pc.inputs = InputConfig::kS;
  pc.hidden = 8;
  const auto a = train_predictor({&scenes[0].dataset}, {&enc}, nullptr, pc, 8, quick_b(2));
  const auto b = train_predictor({&scenes[0].dataset}, {&enc}, nullptr, pc, 8, quick_b(2));
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(std::vector<double>(a.model.parameters().begin(), a.model.parameters().end()),
            std::vector<double>(b.model.parameters().begin(), b.model.parameters().end()));
}

std::vector<Scene> small_suite(const fs::path& dir) {
  std::vector<Scene> scenes;
  for (int i = 0; i < 3; ++i) {
    GearTaskConfig g;
    g.seed = 40 + i;
    g.episodes = 1;
    g.laps = 1;
    g.image_size = 64;
    g.direction = i < 2 ? Direction::kClockwise : Direction::kAnticlockwise;
    const auto m = write_generated_scene(dir / ("env" + std::to_string(i)), gen_gear_task(g));
    scenes.push_back(load_scene(m));
  }
  return scenes;
}

PipelineConfig tiny_pipeline() {
  PipelineConfig p;
  p.encoder.channels = {4, 8, 8};
  p.encoder.latent_dim = 4;
  p.dynamics.hidden = 8;
  p.dynamics.components = 2;
  p.predictor.hidden = 8;
  p.train_r.max_steps = 5;
  p.train_d.max_steps = 5;
  p.train_b.max_steps = 5;
  p.train_len = 8;
  p.holdout = 2;
  return p;
}

TEST(Pipeline, LeaveOneOutSplit) {
  PipelineConfig p;
  p.holdout = 4;
  const auto split = pipeline_split(5, p);
  EXPECT_EQ(split.encoder_scenes, std::vector<int>{4});
  EXPECT_EQ(split.train_scenes, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(split.test_scene, 4);
  p.holdout = -1;
  EXPECT_EQ(pipeline_split(1, p).train_scenes, std::vector<int>{0});
}

TEST(Pipeline, EachEnvironmentGetsItsOwnEncoder) {
  const fs::path dir = scratch("pipeline-per-env");
  const auto scenes = small_suite(dir / "data");
  const auto cfg = tiny_pipeline();
  const auto r = train_pipeline(scenes, cfg, Stage::kR, dir / "run");
  EXPECT_EQ(r.scene_encoders.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "run" / "r_env0.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "run" / "r_env1.ckpt"));
  EXPECT_FALSE(fs::exists(dir / "run" / "r_env2.ckpt"));
  EXPECT_NE(file_sha256(dir / "run" / "r_env0.ckpt"), file_sha256(dir / "run" / "r.ckpt"));
  // D loads the training-scene encoders from the run directory.
  fs::remove(dir / "run" / "r_env1.ckpt");
  try {
    train_pipeline(scenes, cfg, Stage::kD, dir / "run");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDependency);
  }
}

TEST(Pipeline, StagesDependOnUpstreamCheckpoints) {
  const fs::path dir = scratch("pipeline-deps");
  const auto scenes = small_suite(dir / "data");
  try {
    train_pipeline(scenes, tiny_pipeline(), Stage::kB, dir / "run");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDependency);
  }
  PipelineConfig s = tiny_pipeline();
  s.predictor.inputs = InputConfig::kS;
  EXPECT_NO_THROW(train_pipeline(scenes, s, Stage::kB, dir / "run-s"));
}

TEST(Pipeline, DeterministicResumableAndIsolated) {
  const fs::path dir = scratch("pipeline-run");
  const auto scenes = small_suite(dir / "data");
  const auto cfg = tiny_pipeline();
  train_pipeline(scenes, cfg, Stage::kAll, dir / "a");
  train_pipeline(scenes, cfg, Stage::kAll, dir / "b");
  for (const char* f : {"r.ckpt", "r_env0.ckpt", "d.ckpt", "b.ckpt", "history.csv"}) {
    EXPECT_EQ(read_file_bytes(dir / "a" / f), read_file_bytes(dir / "b" / f)) << f;
  }
  const auto r_hash = file_sha256(dir / "a" / "r.ckpt");
  const auto d_hash = file_sha256(dir / "a" / "d.ckpt");
  // Retraining B alone leaves R and D untouched, and a finished run resumes.
  train_pipeline(scenes, cfg, Stage::kB, dir / "a");
  EXPECT_EQ(file_sha256(dir / "a" / "r.ckpt"), r_hash);
  EXPECT_EQ(file_sha256(dir / "a" / "d.ckpt"), d_hash);
  EXPECT_EQ(read_file_bytes(dir / "a" / "b.ckpt"), read_file_bytes(dir / "b" / "b.ckpt"));
}

TEST(Checkpoint, RoundTripAndErrors) {
  PredictorConfig pc;
  pc.hidden = 8;
  pc.latent_dim = 3;
  pc.summary_dim = 5;
  const LocalPredictor b(pc, 9);
  const auto bytes = serialize_checkpoint(make_checkpoint(b, 9));
  const auto back = load_predictor(deserialize_checkpoint(bytes));
  EXPECT_EQ(std::vector<double>(back.parameters().begin(), back.parameters().end()),
            std::vector<double>(b.parameters().begin(), b.parameters().end()));
  EXPECT_EQ(back.config().summary_dim, 5);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    deserialize_checkpoint(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
  }
  try {
    load_encoder(deserialize_checkpoint(bytes));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCompatibility);
  }
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  EXPECT_THROW(deserialize_checkpoint(cut), Error);
}

TEST(Checkpoint, GitStyleBlobHash) {
  const fs::path dir = scratch("hash");
  write_text_atomic(dir / "hello.txt", "hello\n");
  // `git hash-object` of "hello\n", computed independently.
  const std::string blob = std::string("blob 6") + '\0' + "hello\n";
  EXPECT_EQ(content_hash(dir / "hello.txt"), sha256_hex(blob));
  EXPECT_EQ(sha256_hex(std::string("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Compatibility, MismatchedBundleRejected) {
  auto bundle = std::make_shared<ModelBundle>();
  PredictorConfig pc;
  pc.latent_dim = 8;
  pc.summary_dim = 16;
  pc.hidden = 8;
  bundle->predictor = LocalPredictor(pc, 1);
  EncoderConfig ec;
  ec.channels = {4};
  ec.latent_dim = 6;
  bundle->encoder = SpatialEncoder(ec, 1);
  try {
    check_compatible(*bundle);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCompatibility);
  }
}

}  // namespace
}  // namespace rdb
