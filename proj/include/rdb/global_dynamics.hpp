#ifndef RDB_GLOBAL_DYNAMICS_HPP_
#define RDB_GLOBAL_DYNAMICS_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rdb/nn.hpp"
#include "rdb/random.hpp"
#include "rdb/scene_data.hpp"
#include "rdb/spatial_encoder.hpp"

namespace rdb {

// What D is conditioned on besides the latent: agent positions, a seeded
// noise stream of the same width, or zeros.
enum class ConditioningMode { kPositions, kNoise, kZeros };

std::string to_string(ConditioningMode mode);
ConditioningMode parse_conditioning_mode(const std::string& text);

inline constexpr double kSigmaFloor = 1e-6;

struct DynamicsConfig {
  int latent_dim = 64;
  int n_max = 1;
  int hidden = 256;
  int components = 5;
  ConditioningMode conditioning = ConditioningMode::kPositions;

  void validate() const;
  int conditioning_dim() const { return 2 * n_max; }
  int input_dim() const { return latent_dim + conditioning_dim(); }
  int head_dim() const { return components * (1 + 2 * latent_dim); }
};

// Recurrent state of D; h is the summary handed to B.
struct DynamicsState {
  nn::Vector h;
  nn::Vector c;

  static DynamicsState zero(int hidden);
};

// Diagonal Gaussian mixture over the next latent. means/sigmas are
// dim x components.
struct MixtureParams {
  nn::Vector logits;
  nn::Matrix means;
  nn::Matrix sigmas;

  int components() const { return static_cast<int>(logits.size()); }
  int dim() const { return static_cast<int>(means.rows()); }
  nn::Vector weights() const;  // softmax(logits)
  void validate() const;
};

// -log sum_k w_k N(target; mu_k, diag(sigma_k^2)), evaluated with
// log-sum-exp.
double mixture_nll(const MixtureParams& mix, const nn::Vector& target);

// Component k ~ softmax(logits / tau), then N(mu_k, tau * sigma_k^2).
// tau = 0 returns the mean of the largest-logit component (lowest index on
// ties). tau must lie in [0, 1].
LatentVector sample_next_latent(const MixtureParams& mix, double tau, Rng& rng);

// Training/evaluation batch of equal-length sequences; one column per
// sequence. latents has T+1 entries (L x B), conditioning T entries (C x B).
struct SequenceBatch {
  std::vector<nn::Matrix> latents;
  std::vector<nn::Matrix> conditioning;
};

class GlobalDynamics {
 public:
  GlobalDynamics(const DynamicsConfig& cfg, std::uint64_t seed);
  GlobalDynamics(const DynamicsConfig& cfg, std::vector<double> params);

  const DynamicsConfig& config() const { return cfg_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  struct StepOutput {
    DynamicsState state;
    MixtureParams mixture;
  };
  StepOutput step(const DynamicsState& prev, const LatentVector& latent,
                  const nn::Vector& conditioning) const;

  // Sum over steps of the mixture NLL of latents[t+1] given the prefix.
  double d_loss(std::span<const LatentVector> latents,
                std::span<const nn::Vector> conditioning,
                std::vector<double>* grad = nullptr) const;

  // Sum of d_loss over all columns of the batch.
  double sequence_loss(const SequenceBatch& batch, std::vector<double>* grad) const;

  // Summaries h_1..h_T obtained by running the recurrence from h_0 = 0 over
  // the batch (one L+C input per step). Returned as T matrices H x B.
  std::vector<nn::Matrix> summaries(const std::vector<nn::Matrix>& latents,
                                    const std::vector<nn::Matrix>& conditioning) const;

 private:
  void build_layout();
  MixtureParams mixture_from_head(const nn::Matrix& head, Eigen::Index col) const;

  DynamicsConfig cfg_;
  nn::ParamLayout layout_;
  nn::LstmCell cell_;
  nn::Dense head_;
  std::vector<double> params_;
};

struct RolloutStep {
  nn::Vector h;
  LatentVector latent;
};

// Closed-loop rollout: at step t the current latent and conditioning(t)
// drive one recurrent update, then the next latent is sampled at tau and fed
// back. Returns the summary after each update with the sampled latent.
std::vector<RolloutStep> rollout_latents(
    const GlobalDynamics& model, DynamicsState state, const LatentVector& start,
    const std::function<nn::Vector(int)>& conditioning, int steps, double tau,
    Rng& rng);

// Positions of a WorldState flattened to 2 * n_max values (free slots zero).
nn::Vector positions_vector(const WorldState& state);
// Standard-normal vector of width 2 * n_max for (seed, frame).
nn::Vector noise_conditioning(int n_max, std::uint64_t seed, std::int64_t frame);
// Conditioning input for one frame under the given mode.
nn::Vector conditioning_for(ConditioningMode mode, const WorldState& state,
                            std::uint64_t noise_seed);

}  // namespace rdb

#endif  // RDB_GLOBAL_DYNAMICS_HPP_
