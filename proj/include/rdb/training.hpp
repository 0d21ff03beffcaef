#ifndef RDB_TRAINING_HPP_
#define RDB_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rdb/global_dynamics.hpp"
#include "rdb/local_predictor.hpp"
#include "rdb/nn.hpp"
#include "rdb/scene_data.hpp"
#include "rdb/spatial_encoder.hpp"

namespace rdb {

struct TrainConfig {
  nn::AdamConfig adam;
  int batch_size = 16;     // images (R) or sequences (D); B batches by frame block
  int epochs = 1;
  int max_steps = 0;       // 0: no cap beyond epochs
  std::uint64_t seed = 1;
  int sequence_length = 16;  // D training sequences, in frames
  int sequence_stride = 4;
  int batch_frames = 8;    // B: windows starting in the same block of frames share a batch
  int window_stride = 1;   // B: stride between training windows

  void validate() const;
};

using LossHistory = std::vector<double>;

// Latents and world states of every frame of one scene.
struct EncodedScene {
  std::string name;
  int first_frame = 0;
  std::vector<LatentVector> latents;  // empty when no encoder was used
  std::vector<WorldState> states;
  std::uint64_t noise_seed = 0;

  int frame_count() const { return static_cast<int>(states.size()); }
};

EncodedScene encode_scene(const SpatialEncoder* encoder, const Scene& scene, int n_max,
                          std::uint64_t noise_seed);

// Conditioning input for frame index t (0-based) of an encoded scene.
nn::Vector scene_conditioning(ConditioningMode mode, const EncodedScene& scene, int t,
                              int n_max);

struct EncoderTraining {
  SpatialEncoder model;
  LossHistory history;
};
EncoderTraining train_encoder(const std::vector<const ImageFrame*>& images,
                              const EncoderConfig& cfg, const MmdConfig& mmd,
                              const TrainConfig& train);

struct DynamicsTraining {
  GlobalDynamics model;
  LossHistory history;
};
DynamicsTraining train_dynamics(const std::vector<const EncodedScene*>& scenes,
                                const DynamicsConfig& cfg, const TrainConfig& train);

// Per-window contexts (latents and teacher-forced D summaries starting from
// a zero state at the window's first frame).
std::vector<WindowContext> window_contexts(std::span<const TrajectoryWindow> windows,
                                           const EncodedScene& scene,
                                           const GlobalDynamics* dynamics,
                                           InputConfig inputs);

struct PredictorTraining {
  LocalPredictor model;
  LossHistory history;
};
// encoded[i] must describe datasets[i].
PredictorTraining train_predictor(const std::vector<const TrajectoryDataset*>& datasets,
                                  const std::vector<const EncodedScene*>& encoded,
                                  const GlobalDynamics* dynamics,
                                  const PredictorConfig& cfg, int train_len,
                                  const TrainConfig& train);

// Analytic gradient check: central differences with step eps over a seeded
// random slice of `slice` parameters. Relative error per entry is
// |a - n| / max(|a|, |n|, 1e-8); returns the worst entry.
using LossFunction = std::function<double(std::span<const double>, std::vector<double>*)>;
double finite_difference_check(const LossFunction& loss, std::vector<double> params,
                               int slice, double eps, std::uint64_t seed);

// Images R learns from in leave-one-out mode. kPerEnvironment: one R per
// environment, r.ckpt being the held-out one's. kHoldout: the held-out R
// encodes every environment. kPooled: one R on all environments.
enum class EncoderData { kPerEnvironment, kHoldout, kPooled };

std::string to_string(EncoderData data);
EncoderData parse_encoder_data(const std::string& text);

// B trains on a likelihood whose gradient norm grows as sigma shrinks; clipping
// stalls it, a decaying rate settles it.
inline TrainConfig predictor_train_defaults() {
  TrainConfig t;
  t.adam.learning_rate = 3e-3;
  t.adam.clip_norm = 0.0;
  t.adam.final_lr_fraction = 0.01;
  return t;
}

struct PipelineConfig {
  EncoderConfig encoder;
  MmdConfig mmd;
  DynamicsConfig dynamics;   // latent_dim and n_max are derived from the data
  PredictorConfig predictor; // latent_dim and summary_dim are derived
  TrainConfig train_r;
  TrainConfig train_d;
  TrainConfig train_b = predictor_train_defaults();
  int train_len = 16;        // B training window length
  int holdout = -1;          // -1: single-environment mode, no holdout
  EncoderData encoder_data = EncoderData::kPerEnvironment;
  bool baseline_s = false;   // also train a positions-only B
  std::uint64_t seed = 1;

  void validate() const;
};

struct PipelineResult {
  std::optional<SpatialEncoder> encoder;
  std::map<int, SpatialEncoder> scene_encoders;  // per-environment R of training scenes
  std::optional<GlobalDynamics> dynamics;
  std::optional<LocalPredictor> predictor;
  std::optional<LocalPredictor> baseline;
  LossHistory history_r, history_d, history_b, history_baseline;
};

enum class Stage { kR, kD, kB, kAll };
std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

// Trains R -> D -> B (or one stage). With a run directory, each stage writes
// its checkpoint there and a stage whose checkpoint already exists with the
// same settings is loaded instead of retrained. Single stages take upstream
// modules from `upstream` when given, else from the run directory.
PipelineResult train_pipeline(const std::vector<Scene>& scenes, const PipelineConfig& cfg,
                              Stage stage = Stage::kAll,
                              const std::optional<std::filesystem::path>& run_dir = {},
                              const PipelineResult* upstream = nullptr);

// Split of scene indices used by the pipeline.
struct PipelineSplit {
  std::vector<int> encoder_scenes;
  std::vector<int> train_scenes;
  int test_scene = -1;
};
PipelineSplit pipeline_split(int scene_count, const PipelineConfig& cfg);

// Resolved configs for a set of scenes (derived dims filled in).
DynamicsConfig resolved_dynamics(const PipelineConfig& cfg, const std::vector<Scene>& scenes,
                                 const PipelineSplit& split);
PredictorConfig resolved_predictor(const PipelineConfig& cfg, const DynamicsConfig& dyn);

}  // namespace rdb

#endif  // RDB_TRAINING_HPP_
