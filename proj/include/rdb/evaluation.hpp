#ifndef RDB_EVALUATION_HPP_
#define RDB_EVALUATION_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rdb/global_dynamics.hpp"
#include "rdb/local_predictor.hpp"
#include "rdb/scene_data.hpp"
#include "rdb/spatial_encoder.hpp"
#include "rdb/svg.hpp"
#include "rdb/training.hpp"

namespace rdb {

// Per-trajectory RMSE of predicted against true positions.
double ade(const Trajectory& predicted, const Trajectory& truth);
// Mean Euclidean distance over steps (common alternative ADE definition).
double ade_mean_distance(const Trajectory& predicted, const Trajectory& truth);
// Euclidean distance at the final step.
double fde(const Trajectory& predicted, const Trajectory& truth);

// Extrapolates the mean velocity of the observation window.
Trajectory constant_velocity_predict(const Trajectory& observed, int pred_len);

Trajectory positions(const std::vector<AgentState>& states);

class TrajectoryPredictor {
 public:
  virtual ~TrajectoryPredictor() = default;
  virtual std::string name() const = 0;
  // Called once per scene before any of its windows are predicted.
  virtual void prepare(const Scene& scene, std::size_t scene_index) {
    (void)scene;
    (void)scene_index;
  }
  // Must be safe to call concurrently for different windows of the prepared
  // scene.
  virtual Trajectory predict(const TrajectoryWindow& window, int pred_len,
                             PredictionMode mode, Rng& rng) const = 0;
};

// Returns the ground truth; used to check the harness.
class OraclePredictor : public TrajectoryPredictor {
 public:
  std::string name() const override { return "oracle"; }
  Trajectory predict(const TrajectoryWindow& window, int pred_len, PredictionMode mode,
                     Rng& rng) const override;
};

class ConstantVelocityPredictor : public TrajectoryPredictor {
 public:
  std::string name() const override { return "constant-velocity"; }
  Trajectory predict(const TrajectoryWindow& window, int pred_len, PredictionMode mode,
                     Rng& rng) const override;
};

// i.i.d. uniform positions on the unit square.
class RandomUniformPredictor : public TrajectoryPredictor {
 public:
  std::string name() const override { return "random"; }
  Trajectory predict(const TrajectoryWindow& window, int pred_len, PredictionMode mode,
                     Rng& rng) const override;
};

enum class ContextMode { kClosedLoop, kFreeze };

std::string to_string(ContextMode mode);
ContextMode parse_context_mode(const std::string& text);

struct ModelBundle {
  std::optional<SpatialEncoder> encoder;
  std::optional<GlobalDynamics> dynamics;
  std::optional<LocalPredictor> predictor;
};

// Throws kCompatibility unless the bundle's latent and summary widths line
// up with what its predictor was trained against.
void check_compatible(const ModelBundle& bundle);

// B rolled out per agent with contexts from R and D.
class RdbPredictor : public TrajectoryPredictor {
 public:
  RdbPredictor(std::shared_ptr<const ModelBundle> bundle, double tau, ContextMode context,
               std::uint64_t noise_seed = 0);

  std::string name() const override { return "rdb"; }
  void prepare(const Scene& scene, std::size_t scene_index) override;
  Trajectory predict(const TrajectoryWindow& window, int pred_len, PredictionMode mode,
                     Rng& rng) const override;

 private:
  std::shared_ptr<const ModelBundle> bundle_;
  double tau_;
  ContextMode context_;
  std::uint64_t noise_seed_;
  EncodedScene scene_;
  int n_max_ = 1;
};

struct EvalOptions {
  int obs_len = 4;
  int pred_len = 8;
  int stride = 1;        // between window starts
  int max_windows = 0;   // per dataset; 0 = all, else evenly subsampled
  PredictionMode mode = PredictionMode::kMean;
  int best_of = 0;       // > 0: best of N sampled rollouts per window
  std::uint64_t seed = 0;
  int plot_windows = 0;  // trajectories kept for plotting per dataset

  void validate() const;
};

struct DatasetMetrics {
  std::string dataset;
  double ade = 0.0;
  double fde = 0.0;
  double ade_mean_distance = 0.0;
  std::size_t trajectories = 0;
  std::vector<TrajectoryPlot> plots;
};

struct MetricReport {
  std::string mode;
  int obs_len = 0;
  int pred_len = 0;
  double ade = 0.0;  // mean over all trajectories
  double fde = 0.0;
  double ade_mean_distance = 0.0;
  std::size_t trajectories = 0;
  std::vector<DatasetMetrics> datasets;
};

MetricReport evaluate(TrajectoryPredictor& predictor, const std::vector<const Scene*>& scenes,
                      const EvalOptions& options, const std::string& mode_label = "");

// CSV with header dataset,mode,obs_len,pred_len,ade,fde,n_trajectories; one
// row per dataset then an "all" row. with_mean_distance appends an
// ade_mean_distance column.
std::string report_csv(const MetricReport& report, bool with_mean_distance = false);

}  // namespace rdb

#endif  // RDB_EVALUATION_HPP_
