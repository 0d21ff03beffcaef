#ifndef RDB_LOCAL_PREDICTOR_HPP_
#define RDB_LOCAL_PREDICTOR_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rdb/nn.hpp"
#include "rdb/random.hpp"
#include "rdb/scene_data.hpp"

namespace rdb {

// Which of (position, latent, summary) feed the per-agent predictor.
enum class InputConfig { kS, kSL, kSH, kSLH };

std::string to_string(InputConfig inputs);
InputConfig parse_input_config(const std::string& text);  // s, sl, sh, slh
bool uses_latent(InputConfig inputs);
bool uses_summary(InputConfig inputs);

struct PredictorConfig {
  InputConfig inputs = InputConfig::kSLH;
  int latent_dim = 64;
  int summary_dim = 256;
  int hidden = 64;

  void validate() const;
  int input_dim() const;
};

inline constexpr double kRhoLimit = 0.999;

struct BivariateGaussian {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double rho = 0.0;

  void validate() const;
};

// log(2 pi) + log sx + log sy + 0.5 log(1 - rho^2) + Z / (2 (1 - rho^2)).
double bivariate_nll(const BivariateGaussian& g, Point target);

// Mean plus the Cholesky factor of the covariance applied to two standard
// normals.
Point sample_position(const BivariateGaussian& g, Rng& rng);

// Besides the LSTM state, B remembers the last position it was fed so each
// step can also see the displacement since the previous one.
struct PredictorState {
  nn::Vector h;
  nn::Vector c;
  Point last;
  bool has_last = false;

  static PredictorState zero(int hidden);
};

// Scene context at one frame. Members the InputConfig does not use may be
// left empty.
struct FrameContext {
  nn::Vector latent;
  nn::Vector summary;
};

// frames[i] is the context of frame first_frame + i.
struct WindowContext {
  int first_frame = 0;
  std::vector<FrameContext> frames;
};

class LocalPredictor {
 public:
  LocalPredictor(const PredictorConfig& cfg, std::uint64_t seed);
  LocalPredictor(const PredictorConfig& cfg, std::vector<double> params);

  const PredictorConfig& config() const { return cfg_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  struct StepOutput {
    PredictorState state;
    BivariateGaussian gaussian;
  };
  // The predicted mean is the input position plus a learned displacement.
  StepOutput predict_step(const PredictorState& prev, Point position,
                          const FrameContext& context) const;

  // Sum over windows and steps of the NLL of the next true position.
  // contexts may be empty when the InputConfig is S; otherwise contexts[i]
  // must start at windows[i].first_frame and cover all but the last frame.
  double b_loss(std::span<const TrajectoryWindow> windows,
                std::span<const WindowContext> contexts,
                std::vector<double>* grad = nullptr) const;

 private:
  void build_layout();
  void check_context(const FrameContext& context) const;
  nn::Matrix assemble_input(std::span<const TrajectoryWindow> windows,
                            std::span<const WindowContext> contexts,
                            const std::vector<std::size_t>& members, int t) const;
  double group_loss(std::span<const TrajectoryWindow> windows,
                    std::span<const WindowContext> contexts,
                    const std::vector<std::size_t>& members, double* grad) const;

  PredictorConfig cfg_;
  nn::ParamLayout layout_;
  nn::LstmCell cell_;
  nn::Dense head_;
  std::vector<double> params_;
};

// Supplies (latent, summary) while an agent is rolled out.
class ContextProvider {
 public:
  virtual ~ContextProvider() = default;
  // Context of observed step i.
  virtual FrameContext observed(int i) = 0;
  // Context of predicted step k >= 1 (frame obs_end + k), given the agent's
  // predicted position at that frame.
  virtual FrameContext predicted(int k, Point agent_position) = 0;
};

enum class PredictionMode { kMean, kSample };

std::string to_string(PredictionMode mode);
PredictionMode parse_prediction_mode(const std::string& text);

struct AgentRollout {
  Trajectory positions;
  std::vector<BivariateGaussian> gaussians;
};

// Warms up on the observed positions, then feeds back its own prediction
// (mean or a draw) for pred_len steps. context may be null for InputConfig S.
AgentRollout rollout_agent(const LocalPredictor& model, const Trajectory& observed,
                           ContextProvider* context, int pred_len,
                           PredictionMode mode, Rng& rng);

}  // namespace rdb

#endif  // RDB_LOCAL_PREDICTOR_HPP_
