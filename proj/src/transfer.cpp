#include "rdb/transfer.hpp"

#include "rdb/checkpoint.hpp"
#include "rdb/config_json.hpp"
#include "rdb/error.hpp"

namespace rdb {

namespace {

struct ModeName {
  TransferMode mode;
  const char* name;
};

constexpr ModeName kModeNames[] = {
    {TransferMode::kRandom, "random"},
    {TransferMode::kTargetS, "b-targ-s"},
    {TransferMode::kTargetFull, "targ-full"},
    {TransferMode::kSourceS, "b-src-s"},
    {TransferMode::kSourceFull, "src-full"},
    {TransferMode::kUntrainedD, "untrained-d"},
    {TransferMode::kUnsupervisedD, "unsup-rd"},
    {TransferMode::kWeakD, "weak-d"},
};

}  // namespace

std::string to_string(TransferMode mode) {
  for (const auto& m : kModeNames) {
    if (m.mode == mode) return m.name;
  }
  return "random";
}

TransferMode parse_transfer_mode(const std::string& text) {
  for (const auto& m : kModeNames) {
    if (text == m.name) return m.mode;
  }
  std::string names;
  for (const auto& m : kModeNames) names += std::string(names.empty() ? "" : ", ") + m.name;
  fail(ErrorCode::kConfig, "unknown transfer mode '" + text + "' (expected one of " + names + ")");
}

std::vector<TransferMode> all_transfer_modes() {
  std::vector<TransferMode> out;
  for (const auto& m : kModeNames) out.push_back(m.mode);
  return out;
}

bool uses_source_predictor(TransferMode mode) {
  return mode == TransferMode::kSourceS || mode == TransferMode::kSourceFull ||
         mode == TransferMode::kUntrainedD || mode == TransferMode::kUnsupervisedD ||
         mode == TransferMode::kWeakD;
}

namespace {

std::filesystem::path source_file(const TransferConfig& cfg, const char* name) {
  const auto p = cfg.source_run / name;
  require(std::filesystem::exists(p), ErrorCode::kDependency,
          "transfer mode " + to_string(cfg.mode) + " needs " + p.string());
  return p;
}

std::vector<const Scene*> test_scenes(const std::vector<Scene>& target, const PipelineSplit& split) {
  std::vector<const Scene*> out;
  if (split.test_scene >= 0) {
    out.push_back(&target[split.test_scene]);
  } else {
    for (const auto& s : target) out.push_back(&s);
  }
  return out;
}

}  // namespace

TransferResult run_transfer(const TransferConfig& cfg, const std::vector<Scene>& target,
                            const std::optional<std::filesystem::path>& target_run) {
  require(!target.empty(), ErrorCode::kInvalidArgument, "transfer needs target datasets");
  const PipelineSplit split = pipeline_split(static_cast<int>(target.size()), cfg.target);
  const auto tests = test_scenes(target, split);
  TransferResult result;
  const std::string label = to_string(cfg.mode);

  if (cfg.mode == TransferMode::kRandom) {
    RandomUniformPredictor random;
    result.report = evaluate(random, tests, cfg.eval, label);
    return result;
  }

  auto bundle = std::make_shared<ModelBundle>();
  std::filesystem::path b_path;
  if (uses_source_predictor(cfg.mode)) {
    if (cfg.mode == TransferMode::kSourceS) {
      const auto candidate = cfg.source_run / "b_s.ckpt";
      b_path = std::filesystem::exists(candidate) ? candidate : source_file(cfg, "b.ckpt");
    } else {
      b_path = source_file(cfg, "b.ckpt");
    }
    result.b_hash_before = file_sha256(b_path);
    bundle->predictor = load_predictor(read_checkpoint(b_path));
    if (cfg.mode == TransferMode::kSourceS) {
      require(bundle->predictor->config().inputs == InputConfig::kS, ErrorCode::kDependency,
              "transfer mode b-src-s needs a positions-only B (b_s.ckpt)");
    }
  }

  switch (cfg.mode) {
    case TransferMode::kTargetS: {
      PipelineConfig p = cfg.target;
      p.predictor.inputs = InputConfig::kS;
      p.baseline_s = false;
      auto trained = train_pipeline(target, p, Stage::kB, target_run);
      bundle->predictor = std::move(trained.predictor);
      break;
    }
    case TransferMode::kTargetFull: {
      PipelineConfig p = cfg.target;
      p.baseline_s = false;
      auto trained = train_pipeline(target, p, Stage::kAll, target_run);
      bundle->encoder = std::move(trained.encoder);
      bundle->dynamics = std::move(trained.dynamics);
      bundle->predictor = std::move(trained.predictor);
      break;
    }
    case TransferMode::kSourceS:
      break;
    case TransferMode::kSourceFull: {
      bundle->encoder = load_encoder(read_checkpoint(source_file(cfg, "r.ckpt")));
      if (uses_summary(bundle->predictor->config().inputs) ||
          std::filesystem::exists(cfg.source_run / "d.ckpt")) {
        bundle->dynamics = load_dynamics(read_checkpoint(source_file(cfg, "d.ckpt")));
      }
      break;
    }
    case TransferMode::kUntrainedD:
    case TransferMode::kUnsupervisedD:
    case TransferMode::kWeakD: {
      // Target R and D mirror the source architecture so the frozen B sees
      // inputs of the widths it was trained on.
      const Checkpoint r_src = read_checkpoint(source_file(cfg, "r.ckpt"));
      const Checkpoint d_src = read_checkpoint(source_file(cfg, "d.ckpt"));
      PipelineConfig p = cfg.target;
      p.encoder = r_src.config.get<EncoderConfig>();
      const DynamicsConfig d_arch = d_src.config.get<DynamicsConfig>();
      p.dynamics.hidden = d_arch.hidden;
      p.dynamics.components = d_arch.components;
      p.dynamics.conditioning = cfg.mode == TransferMode::kWeakD ? ConditioningMode::kPositions
                                : cfg.mode == TransferMode::kUnsupervisedD
                                    ? ConditioningMode::kNoise
                                    : ConditioningMode::kZeros;
      auto r = train_pipeline(target, p, Stage::kR, target_run);
      bundle->encoder = r.encoder;
      if (cfg.mode == TransferMode::kUntrainedD) {
        const DynamicsConfig dc = resolved_dynamics(p, target, split);
        bundle->dynamics = GlobalDynamics(dc, derive_seed(p.seed, {0x55}));
      } else {
        auto d = train_pipeline(target, p, Stage::kD, target_run, &r);
        bundle->dynamics = std::move(d.dynamics);
      }
      break;
    }
    case TransferMode::kRandom:
      break;
  }

  RdbPredictor predictor(bundle, cfg.tau, cfg.context, derive_seed(cfg.eval.seed, {0x7E}));
  result.report = evaluate(predictor, tests, cfg.eval, label);
  if (!b_path.empty()) result.b_hash_after = file_sha256(b_path);
  return result;
}

}  // namespace rdb
