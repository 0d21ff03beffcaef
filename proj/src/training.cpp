#include "rdb/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "rdb/checkpoint.hpp"
#include "rdb/config_json.hpp"
#include "rdb/error.hpp"
#include "rdb/parallel.hpp"

namespace rdb {

using nlohmann::json;
using nn::Matrix;
using nn::Vector;

void TrainConfig::validate() const {
  require(adam.learning_rate > 0.0, ErrorCode::kConfig, "learning rate must be > 0");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0,
          ErrorCode::kConfig, "adam betas must lie in [0, 1)");
  require(adam.epsilon > 0.0, ErrorCode::kConfig, "adam epsilon must be > 0");
  require(adam.final_lr_fraction > 0.0 && adam.final_lr_fraction <= 1.0, ErrorCode::kConfig,
          "final_lr_fraction must lie in (0, 1]");
  require(epochs >= 1, ErrorCode::kConfig, "epochs must be >= 1");
  require(max_steps >= 0, ErrorCode::kConfig, "max_steps must be >= 0");
  require(batch_size >= 1, ErrorCode::kConfig, "batch_size must be >= 1");
  require(sequence_length >= 2, ErrorCode::kConfig, "sequence_length must be >= 2");
  require(sequence_stride >= 1 && window_stride >= 1, ErrorCode::kConfig,
          "strides must be >= 1");
  require(batch_frames >= 1, ErrorCode::kConfig, "batch_frames must be >= 1");
}

EncodedScene encode_scene(const SpatialEncoder* encoder, const Scene& scene, int n_max,
                          std::uint64_t noise_seed) {
  EncodedScene out;
  out.name = scene.dataset.name;
  out.first_frame = scene.dataset.first_frame;
  out.noise_seed = noise_seed;
  out.states = build_world_states(scene.dataset, n_max).states;
  if (encoder != nullptr) {
    require(scene.has_images(), ErrorCode::kDependency,
            "scene " + scene.dataset.name + " has no images to encode");
    out.latents.resize(scene.frames.size());
    parallel_for(scene.frames.size(),
                 [&](std::size_t i) { out.latents[i] = encoder->encode(scene.frames[i]); });
  }
  return out;
}

Vector scene_conditioning(ConditioningMode mode, const EncodedScene& scene, int t, int n_max) {
  switch (mode) {
    case ConditioningMode::kPositions: return positions_vector(scene.states.at(t));
    case ConditioningMode::kNoise:
      return noise_conditioning(n_max, scene.noise_seed, scene.first_frame + t);
    case ConditioningMode::kZeros: return Vector::Zero(2 * n_max);
  }
  return Vector::Zero(2 * n_max);
}

namespace {

int total_steps(int steps_per_epoch, const TrainConfig& train) {
  long total = static_cast<long>(steps_per_epoch) * train.epochs;
  if (train.max_steps > 0) total = std::min<long>(total, train.max_steps);
  return static_cast<int>(total);
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

void check_loss(double loss, const char* stage, int step) {
  if (!std::isfinite(loss)) {
    fail(ErrorCode::kNumeric,
         std::string("stage ") + stage + " diverged at step " + std::to_string(step));
  }
}

}  // namespace

EncoderTraining train_encoder(const std::vector<const ImageFrame*>& images,
                              const EncoderConfig& cfg, const MmdConfig& mmd,
                              const TrainConfig& train) {
  train.validate();
  mmd.validate();
  require(!images.empty(), ErrorCode::kInvalidArgument, "stage R needs images");
  EncoderTraining out{SpatialEncoder(cfg, derive_seed(train.seed, {1})), {}};
  nn::Adam adam(out.model.parameter_count(), train.adam);
  Rng rng(derive_seed(train.seed, {2}));
  const std::size_t batch = std::min<std::size_t>(train.batch_size, images.size());
  const int per_epoch = static_cast<int>((images.size() + batch - 1) / batch);
  const int total = total_steps(per_epoch, train);
  std::vector<double> grad;
  int step = 0;
  for (int epoch = 0; step < total; ++epoch) {
    auto order = iota(images.size());
    shuffle(order, rng);
    for (std::size_t at = 0; at < order.size() && step < total; at += batch, ++step) {
      std::vector<const ImageFrame*> b;
      for (std::size_t k = at; k < std::min(order.size(), at + batch); ++k) {
        b.push_back(images[order[k]]);
      }
      const double loss = out.model.r_loss(b, mmd, derive_seed(train.seed, {3, static_cast<std::uint64_t>(step)}), &grad);
      check_loss(loss, "R", step);
      adam.anneal(static_cast<double>(step) / total);
      adam.step(out.model.parameters(), grad);
      out.history.push_back(loss);
    }
  }
  return out;
}

DynamicsTraining train_dynamics(const std::vector<const EncodedScene*>& scenes,
                                const DynamicsConfig& cfg, const TrainConfig& train) {
  train.validate();
  cfg.validate();
  struct Sample {
    std::size_t scene;
    int start;
  };
  std::vector<Sample> samples;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    require(!scenes[s]->latents.empty(), ErrorCode::kDependency,
            "stage D needs latents from an R checkpoint");
    const int frames = scenes[s]->frame_count();
    for (int start = 0; start + train.sequence_length <= frames; start += train.sequence_stride) {
      samples.push_back({s, start});
    }
  }
  require(!samples.empty(), ErrorCode::kInvalidArgument,
          "stage D has no sequences of length " + std::to_string(train.sequence_length));

  DynamicsTraining out{GlobalDynamics(cfg, derive_seed(train.seed, {1})), {}};
  nn::Adam adam(out.model.parameter_count(), train.adam);
  Rng rng(derive_seed(train.seed, {2}));
  const std::size_t batch = std::min<std::size_t>(train.batch_size, samples.size());
  const int per_epoch = static_cast<int>((samples.size() + batch - 1) / batch);
  const int total = total_steps(per_epoch, train);
  const int len = train.sequence_length;
  std::vector<double> grad;
  int step = 0;
  for (int epoch = 0; step < total; ++epoch) {
    auto order = iota(samples.size());
    shuffle(order, rng);
    for (std::size_t at = 0; at < order.size() && step < total; at += batch, ++step) {
      const std::size_t end = std::min(order.size(), at + batch);
      const auto b = static_cast<Eigen::Index>(end - at);
      SequenceBatch seq;
      seq.latents.assign(len, Matrix(cfg.latent_dim, b));
      seq.conditioning.assign(len - 1, Matrix(cfg.conditioning_dim(), b));
      for (std::size_t k = at; k < end; ++k) {
        const Sample& s = samples[order[k]];
        const EncodedScene& sc = *scenes[s.scene];
        const auto col = static_cast<Eigen::Index>(k - at);
        for (int t = 0; t < len; ++t) {
          require(sc.latents[s.start + t].size() == cfg.latent_dim, ErrorCode::kDimension,
                  "latent width does not match dynamics config");
          seq.latents[t].col(col) = sc.latents[s.start + t].values;
          if (t + 1 < len) {
            seq.conditioning[t].col(col) =
                scene_conditioning(cfg.conditioning, sc, s.start + t, cfg.n_max);
          }
        }
      }
      double loss = out.model.sequence_loss(seq, &grad);
      const double scale = 1.0 / (static_cast<double>(b) * (len - 1));
      loss *= scale;
      for (double& g : grad) g *= scale;
      check_loss(loss, "D", step);
      adam.anneal(static_cast<double>(step) / total);
      adam.step(out.model.parameters(), grad);
      out.history.push_back(loss);
    }
  }
  return out;
}

std::vector<WindowContext> window_contexts(std::span<const TrajectoryWindow> windows,
                                           const EncodedScene& scene,
                                           const GlobalDynamics* dynamics,
                                           InputConfig inputs) {
  std::vector<WindowContext> out;
  if (inputs == InputConfig::kS) return out;
  require(!scene.latents.empty(), ErrorCode::kDependency,
          "input config " + to_string(inputs) + " needs latents from an R checkpoint");
  const bool need_h = uses_summary(inputs);
  require(!need_h || dynamics != nullptr, ErrorCode::kDependency,
          "input config " + to_string(inputs) + " needs a D checkpoint");
  out.resize(windows.size());
  std::map<int, std::vector<std::size_t>> by_len;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const TrajectoryWindow& w = windows[i];
    const int off = w.first_frame - scene.first_frame;
    require(off >= 0 && off + w.length() <= scene.frame_count(), ErrorCode::kAlignment,
            "window frames fall outside the encoded scene");
    out[i].first_frame = w.first_frame;
    out[i].frames.resize(w.length() - 1);
    for (int t = 0; t + 1 < w.length(); ++t) {
      out[i].frames[t].latent = scene.latents[off + t].values;
    }
    by_len[w.length() - 1].push_back(i);
  }
  if (!need_h) return out;
  const DynamicsConfig& dc = dynamics->config();
  for (const auto& [steps, members] : by_len) {
    const auto b = static_cast<Eigen::Index>(members.size());
    std::vector<Matrix> lat(steps, Matrix(dc.latent_dim, b));
    std::vector<Matrix> cond(steps, Matrix(dc.conditioning_dim(), b));
    for (std::size_t j = 0; j < members.size(); ++j) {
      const int off = windows[members[j]].first_frame - scene.first_frame;
      for (int t = 0; t < steps; ++t) {
        lat[t].col(static_cast<Eigen::Index>(j)) = scene.latents[off + t].values;
        cond[t].col(static_cast<Eigen::Index>(j)) =
            scene_conditioning(dc.conditioning, scene, off + t, dc.n_max);
      }
    }
    const auto hs = dynamics->summaries(lat, cond);
    for (std::size_t j = 0; j < members.size(); ++j) {
      for (int t = 0; t < steps; ++t) {
        out[members[j]].frames[t].summary = hs[t].col(static_cast<Eigen::Index>(j));
      }
    }
  }
  return out;
}

PredictorTraining train_predictor(const std::vector<const TrajectoryDataset*>& datasets,
                                  const std::vector<const EncodedScene*>& encoded,
                                  const GlobalDynamics* dynamics, const PredictorConfig& cfg,
                                  int train_len, const TrainConfig& train) {
  train.validate();
  cfg.validate();
  require(train_len >= 2, ErrorCode::kConfig, "B train_len must be >= 2");
  require(datasets.size() == encoded.size(), ErrorCode::kInvalidArgument,
          "stage B needs one encoded scene per dataset");
  if (uses_summary(cfg.inputs)) {
    require(dynamics != nullptr, ErrorCode::kDependency,
            "stage B with inputs " + to_string(cfg.inputs) + " needs a D checkpoint");
    require(dynamics->config().hidden == cfg.summary_dim, ErrorCode::kCompatibility,
            "B summary_dim does not match D hidden size");
  }

  struct Batch {
    std::size_t dataset;
    std::vector<TrajectoryWindow> windows;
    std::vector<WindowContext> contexts;
  };
  std::vector<Batch> batches;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const auto windows = window_split(*datasets[d], train_len, 1, train.window_stride);
    std::map<int, Batch> blocks;
    for (const auto& w : windows) {
      auto& b = blocks[(w.first_frame - datasets[d]->first_frame) / train.batch_frames];
      b.dataset = d;
      b.windows.push_back(w);
    }
    for (auto& [block, b] : blocks) {
      b.contexts = window_contexts(b.windows, *encoded[d], dynamics, cfg.inputs);
      batches.push_back(std::move(b));
    }
  }
  require(!batches.empty(), ErrorCode::kInvalidArgument,
          "stage B has no training windows of length " + std::to_string(train_len));

  PredictorTraining out{LocalPredictor(cfg, derive_seed(train.seed, {1})), {}};
  nn::Adam adam(out.model.parameter_count(), train.adam);
  Rng rng(derive_seed(train.seed, {2}));
  const int total = total_steps(static_cast<int>(batches.size()), train);
  std::vector<double> grad;
  int step = 0;
  for (int epoch = 0; step < total; ++epoch) {
    auto order = iota(batches.size());
    shuffle(order, rng);
    for (std::size_t k = 0; k < order.size() && step < total; ++k, ++step) {
      const Batch& b = batches[order[k]];
      double loss = out.model.b_loss(b.windows, b.contexts, &grad);
      const double scale = 1.0 / (static_cast<double>(b.windows.size()) * (train_len - 1));
      loss *= scale;
      for (double& g : grad) g *= scale;
      check_loss(loss, "B", step);
      adam.anneal(static_cast<double>(step) / total);
      adam.step(out.model.parameters(), grad);
      out.history.push_back(loss);
    }
  }
  return out;
}

double finite_difference_check(const LossFunction& loss, std::vector<double> params,
                               int slice, double eps, std::uint64_t seed) {
  require(eps > 0.0, ErrorCode::kInvalidArgument, "finite-difference step must be > 0");
  require(slice >= 1 && !params.empty(), ErrorCode::kInvalidArgument,
          "finite-difference check needs a nonempty slice");
  std::vector<double> grad;
  loss(params, &grad);
  require(grad.size() == params.size(), ErrorCode::kDimension,
          "loss evaluator returned a gradient of the wrong size");
  Rng rng(seed);
  auto idx = iota(params.size());
  const std::size_t n = std::min<std::size_t>(slice, idx.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = idx[i];
    const double p = params[k];
    params[k] = p + eps;
    const double up = loss(params, nullptr);
    params[k] = p - eps;
    const double down = loss(params, nullptr);
    params[k] = p;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(grad[k]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(grad[k] - numeric) / denom);
  }
  return worst;
}

// --- Pipeline --------------------------------------------------------------

std::string to_string(EncoderData data) {
  switch (data) {
    case EncoderData::kPerEnvironment: return "per-environment";
    case EncoderData::kHoldout: return "holdout";
    case EncoderData::kPooled: return "pooled";
  }
  return "per-environment";
}

EncoderData parse_encoder_data(const std::string& text) {
  if (text == "per-environment") return EncoderData::kPerEnvironment;
  if (text == "holdout") return EncoderData::kHoldout;
  if (text == "pooled") return EncoderData::kPooled;
  fail(ErrorCode::kConfig, "unknown encoder_data '" + text + "' (expected per-environment, holdout or pooled)");
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kR: return "r";
    case Stage::kD: return "d";
    case Stage::kB: return "b";
    case Stage::kAll: return "all";
  }
  return "all";
}

Stage parse_stage(const std::string& text) {
  if (text == "r") return Stage::kR;
  if (text == "d") return Stage::kD;
  if (text == "b") return Stage::kB;
  if (text == "all") return Stage::kAll;
  fail(ErrorCode::kConfig, "unknown stage '" + text + "' (expected r, d, b or all)");
}

void PipelineConfig::validate() const {
  encoder.validate();
  mmd.validate();
  train_r.validate();
  train_d.validate();
  train_b.validate();
  require(dynamics.hidden >= 1 && dynamics.components >= 1, ErrorCode::kConfig,
          "dynamics hidden and components must be >= 1");
  require(predictor.hidden >= 1, ErrorCode::kConfig, "predictor hidden must be >= 1");
  require(train_len >= 2, ErrorCode::kConfig, "train_len must be >= 2");
  require(holdout >= -1, ErrorCode::kConfig, "holdout must be -1 or a dataset index");
}

PipelineSplit pipeline_split(int scene_count, const PipelineConfig& cfg) {
  require(scene_count >= 1, ErrorCode::kInvalidArgument, "training needs at least one dataset");
  PipelineSplit split;
  std::vector<int> all(scene_count);
  for (int i = 0; i < scene_count; ++i) all[i] = i;
  if (cfg.holdout < 0) {
    split.encoder_scenes = all;
    split.train_scenes = all;
    return split;
  }
  const auto loo = leave_one_out_split(all, cfg.holdout);
  split.train_scenes = loo.train;
  split.test_scene = loo.test;
  split.encoder_scenes = cfg.encoder_data == EncoderData::kPooled ? all : std::vector<int>{loo.test};
  return split;
}

DynamicsConfig resolved_dynamics(const PipelineConfig& cfg, const std::vector<Scene>& scenes,
                                 const PipelineSplit& split) {
  (void)split;
  DynamicsConfig d = cfg.dynamics;
  d.latent_dim = cfg.encoder.latent_dim;
  d.n_max = 1;
  for (const auto& s : scenes) d.n_max = std::max(d.n_max, s.dataset.n_max);
  return d;
}

PredictorConfig resolved_predictor(const PipelineConfig& cfg, const DynamicsConfig& dyn) {
  PredictorConfig p = cfg.predictor;
  p.latent_dim = dyn.latent_dim;
  p.summary_dim = dyn.hidden;
  return p;
}

namespace {

struct HistoryRow {
  std::string stage;
  int step;
  double loss;
};

std::vector<HistoryRow> read_history(const std::filesystem::path& path) {
  std::vector<HistoryRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::istringstream s(line);
    HistoryRow r;
    std::string step, loss;
    if (std::getline(s, r.stage, ',') && std::getline(s, step, ',') && std::getline(s, loss)) {
      r.step = std::stoi(step);
      r.loss = std::stod(loss);
      rows.push_back(r);
    }
  }
  return rows;
}

void write_history(const std::filesystem::path& path, const std::vector<HistoryRow>& rows) {
  std::ostringstream s;
  s << "stage,step,loss\n";
  s.precision(17);
  for (const auto& r : rows) s << r.stage << ',' << r.step << ',' << r.loss << '\n';
  write_text_atomic(path, s.str());
}

json data_identity(const std::vector<Scene>& scenes, const std::vector<int>& indices) {
  json j = json::array();
  for (int i : indices) {
    const auto& d = scenes[i].dataset;
    j.push_back({{"name", d.name}, {"frames", d.frame_count}, {"states", d.states.size()},
                 {"first_frame", d.first_frame}});
  }
  return j;
}

std::optional<Checkpoint> reusable(const std::optional<std::filesystem::path>& run_dir,
                                   const char* file, const json& settings) {
  if (!run_dir) return std::nullopt;
  const auto path = *run_dir / file;
  if (!std::filesystem::exists(path)) return std::nullopt;
  Checkpoint c = read_checkpoint(path);
  if (c.metadata.value("settings", json()) != settings) return std::nullopt;
  return c;
}

Checkpoint upstream(const std::optional<std::filesystem::path>& run_dir, const char* file,
                    const char* stage) {
  require(run_dir.has_value() && std::filesystem::exists(*run_dir / file),
          ErrorCode::kDependency,
          std::string("stage ") + stage + " needs " + file + " in the run directory");
  return read_checkpoint(*run_dir / file);
}

}  // namespace

PipelineResult train_pipeline(const std::vector<Scene>& scenes, const PipelineConfig& cfg,
                              Stage stage, const std::optional<std::filesystem::path>& run_dir,
                              const PipelineResult* upstream_models) {
  cfg.validate();
  const PipelineSplit split = pipeline_split(static_cast<int>(scenes.size()), cfg);
  const DynamicsConfig dyn_cfg = resolved_dynamics(cfg, scenes, split);
  const PredictorConfig pred_cfg = resolved_predictor(cfg, dyn_cfg);
  PipelineResult result;
  std::vector<HistoryRow> history;
  if (run_dir) {
    std::filesystem::create_directories(*run_dir);
    history = read_history(*run_dir / "history.csv");
  }
  auto record = [&](const std::string& name, const LossHistory& h) {
    std::erase_if(history, [&](const HistoryRow& r) { return r.stage == name; });
    for (std::size_t i = 0; i < h.size(); ++i) {
      history.push_back({name, static_cast<int>(i), h[i]});
    }
  };
  auto stage_seed = [&](std::uint64_t id, const TrainConfig& t) {
    TrainConfig out = t;
    out.seed = derive_seed(cfg.seed, {id, t.seed});
    return out;
  };

  const bool do_r = stage == Stage::kR || stage == Stage::kAll;
  const bool do_d = stage == Stage::kD || stage == Stage::kAll;
  const bool do_b = stage == Stage::kB || stage == Stage::kAll;

  // R
  auto r_settings = [&](const std::vector<int>& data) {
    return json{{"encoder", cfg.encoder}, {"mmd", cfg.mmd},
                {"train", json{{"adam", cfg.train_r.adam},
                               {"batch_size", cfg.train_r.batch_size},
                               {"epochs", cfg.train_r.epochs},
                               {"max_steps", cfg.train_r.max_steps},
                               {"seed", cfg.train_r.seed}}},
                {"seed", cfg.seed},
                {"data", data_identity(scenes, data)}};
  };
  auto fit_r = [&](const std::vector<int>& data, const std::string& file, std::uint64_t id,
                   LossHistory* hist) {
    const json settings = r_settings(data);
    if (auto c = reusable(run_dir, file.c_str(), settings)) return load_encoder(*c);
    std::vector<const ImageFrame*> images;
    for (int i : data) {
      require(scenes[i].has_images(), ErrorCode::kDependency,
              "stage R needs images for dataset " + scenes[i].dataset.name);
      for (const auto& f : scenes[i].frames) images.push_back(&f);
    }
    TrainConfig t = stage_seed(1, cfg.train_r);
    if (id != 0) t.seed = derive_seed(t.seed, {id});
    auto trained = train_encoder(images, cfg.encoder, cfg.mmd, t);
    if (hist != nullptr) {
      *hist = std::move(trained.history);
      record("r", *hist);
    }
    if (run_dir) {
      Checkpoint c = make_checkpoint(trained.model, cfg.seed);
      c.metadata["settings"] = settings;
      write_checkpoint(*run_dir / file, c);
    }
    return std::move(trained.model);
  };
  // Per-environment mode: every training scene is encoded by its own R.
  const bool per_env =
      cfg.encoder_data == EncoderData::kPerEnvironment && split.test_scene >= 0;
  auto env_file = [](int i) { return "r_env" + std::to_string(i) + ".ckpt"; };

  if (do_r) {
    result.encoder = fit_r(split.encoder_scenes, "r.ckpt", 0, &result.history_r);
    if (per_env) {
      for (int i : split.train_scenes) {
        result.scene_encoders.emplace(
            i, fit_r({i}, env_file(i), static_cast<std::uint64_t>(i) + 1, nullptr));
      }
    }
  }
  const bool need_encoder = do_d || (do_b && pred_cfg.inputs != InputConfig::kS);
  if (!result.encoder && need_encoder && upstream_models != nullptr &&
      upstream_models->encoder) {
    result.encoder = upstream_models->encoder;
    result.scene_encoders = upstream_models->scene_encoders;
  }
  if (!result.encoder && need_encoder) {
    result.encoder = load_encoder(upstream(run_dir, "r.ckpt", do_d ? "D" : "B"));
  }
  if (per_env && need_encoder) {
    for (int i : split.train_scenes) {
      if (!result.scene_encoders.count(i)) {
        result.scene_encoders.emplace(
            i, load_encoder(upstream(run_dir, env_file(i).c_str(), do_d ? "D" : "B")));
      }
    }
  }
  auto encoder_for = [&](int i) -> const SpatialEncoder* {
    if (auto it = result.scene_encoders.find(i); it != result.scene_encoders.end()) {
      return &it->second;
    }
    return result.encoder ? &*result.encoder : nullptr;
  };

  std::vector<EncodedScene> encoded(scenes.size());
  if (do_d || do_b) {
    for (int i : split.train_scenes) {
      encoded[i] = encode_scene(encoder_for(i), scenes[i],
                                dyn_cfg.n_max, derive_seed(cfg.seed, {0x4E, static_cast<std::uint64_t>(i)}));
    }
  }
  std::vector<const EncodedScene*> train_encoded;
  std::vector<const TrajectoryDataset*> train_datasets;
  for (int i : split.train_scenes) {
    train_encoded.push_back(&encoded[i]);
    train_datasets.push_back(&scenes[i].dataset);
  }
  std::string r_hash;
  if (result.encoder) {
    r_hash = sha256_hex(serialize_checkpoint(make_checkpoint(*result.encoder, 0)));
    for (const auto& [i, e] : result.scene_encoders) {
      r_hash = sha256_hex(r_hash + sha256_hex(serialize_checkpoint(make_checkpoint(e, 0))));
    }
  }

  // D
  const json d_settings = {{"dynamics", dyn_cfg},
                           {"train", json{{"adam", cfg.train_d.adam},
                                          {"batch_size", cfg.train_d.batch_size},
                                          {"epochs", cfg.train_d.epochs},
                                          {"max_steps", cfg.train_d.max_steps},
                                          {"seed", cfg.train_d.seed},
                                          {"sequence_length", cfg.train_d.sequence_length},
                                          {"sequence_stride", cfg.train_d.sequence_stride}}},
                           {"seed", cfg.seed},
                           {"encoder", r_hash},
                           {"data", data_identity(scenes, split.train_scenes)}};
  if (do_d) {
    if (auto c = reusable(run_dir, "d.ckpt", d_settings)) {
      result.dynamics = load_dynamics(*c);
    } else {
      auto trained = train_dynamics(train_encoded, dyn_cfg, stage_seed(2, cfg.train_d));
      result.dynamics = std::move(trained.model);
      result.history_d = std::move(trained.history);
      record("d", result.history_d);
      if (run_dir) {
        Checkpoint c = make_checkpoint(*result.dynamics, cfg.seed);
        c.metadata["settings"] = d_settings;
        write_checkpoint(*run_dir / "d.ckpt", c);
      }
    }
  }

  // B
  if (do_b) {
    if (!result.dynamics && uses_summary(pred_cfg.inputs) && upstream_models != nullptr &&
        upstream_models->dynamics) {
      result.dynamics = upstream_models->dynamics;
    }
    if (!result.dynamics && uses_summary(pred_cfg.inputs)) {
      result.dynamics = load_dynamics(upstream(run_dir, "d.ckpt", "B"));
    }
    const std::string d_hash =
        result.dynamics ? sha256_hex(serialize_checkpoint(make_checkpoint(*result.dynamics, 0)))
                        : std::string();
    auto b_settings = [&](const PredictorConfig& p) {
      return json{{"predictor", p},
                  {"train", json{{"adam", cfg.train_b.adam},
                                 {"epochs", cfg.train_b.epochs},
                                 {"max_steps", cfg.train_b.max_steps},
                                 {"seed", cfg.train_b.seed},
                                 {"batch_frames", cfg.train_b.batch_frames},
                                 {"window_stride", cfg.train_b.window_stride}}},
                  {"train_len", cfg.train_len},
                  {"seed", cfg.seed},
                  {"encoder", p.inputs == InputConfig::kS ? std::string() : r_hash},
                  {"dynamics", uses_summary(p.inputs) ? d_hash : std::string()},
                  {"data", data_identity(scenes, split.train_scenes)}};
    };
    auto train_b = [&](const PredictorConfig& p, std::uint64_t id, const char* file,
                       const char* name, LossHistory& hist) {
      const json settings = b_settings(p);
      if (auto c = reusable(run_dir, file, settings)) return load_predictor(*c);
      auto trained = train_predictor(train_datasets, train_encoded,
                                     result.dynamics ? &*result.dynamics : nullptr, p,
                                     cfg.train_len, stage_seed(id, cfg.train_b));
      hist = std::move(trained.history);
      record(name, hist);
      if (run_dir) {
        Checkpoint c = make_checkpoint(trained.model, cfg.seed);
        c.metadata["settings"] = settings;
        write_checkpoint(*run_dir / file, c);
      }
      return std::move(trained.model);
    };
    result.predictor = train_b(pred_cfg, 3, "b.ckpt", "b", result.history_b);
    if (cfg.baseline_s) {
      PredictorConfig s = pred_cfg;
      s.inputs = InputConfig::kS;
      result.baseline = train_b(s, 4, "b_s.ckpt", "b_s", result.history_baseline);
    }
  }
  if (run_dir) write_history(*run_dir / "history.csv", history);
  return result;
}

}  // namespace rdb
