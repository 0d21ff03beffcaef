#include "rdb/global_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rdb/error.hpp"

namespace rdb {

using nn::Matrix;
using nn::Vector;

namespace {

const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

double log_sum_exp(const Vector& a) {
  const double m = a.maxCoeff();
  return m + std::log((a.array() - m).exp().sum());
}

}  // namespace

std::string to_string(ConditioningMode mode) {
  switch (mode) {
    case ConditioningMode::kPositions: return "positions";
    case ConditioningMode::kNoise: return "noise";
    case ConditioningMode::kZeros: return "zeros";
  }
  return "positions";
}

ConditioningMode parse_conditioning_mode(const std::string& text) {
  if (text == "positions") return ConditioningMode::kPositions;
  if (text == "noise") return ConditioningMode::kNoise;
  if (text == "zeros") return ConditioningMode::kZeros;
  fail(ErrorCode::kConfig, "unknown conditioning mode '" + text +
                               "' (expected positions, noise or zeros)");
}

void DynamicsConfig::validate() const {
  require(latent_dim >= 1, ErrorCode::kConfig, "dynamics latent_dim must be >= 1");
  require(n_max >= 1, ErrorCode::kConfig, "dynamics n_max must be >= 1");
  require(hidden >= 1, ErrorCode::kConfig, "dynamics hidden must be >= 1");
  require(components >= 1, ErrorCode::kConfig, "dynamics components must be >= 1");
}

DynamicsState DynamicsState::zero(int hidden) {
  return {Vector::Zero(hidden), Vector::Zero(hidden)};
}

Vector MixtureParams::weights() const {
  const double lse = log_sum_exp(logits);
  return (logits.array() - lse).exp().matrix();
}

void MixtureParams::validate() const {
  require(logits.size() >= 1, ErrorCode::kInvalidArgument, "mixture needs >= 1 component");
  require(means.cols() == logits.size() && sigmas.cols() == logits.size() &&
              sigmas.rows() == means.rows(),
          ErrorCode::kDimension, "mixture parameter shapes disagree");
  require(logits.allFinite() && means.allFinite() && sigmas.allFinite(),
          ErrorCode::kNumeric, "mixture parameters not finite");
  require(sigmas.minCoeff() >= kSigmaFloor, ErrorCode::kNumeric,
          "mixture sigma below floor");
}

namespace {

// Per-component log of w_k N(target; mu_k, sigma_k).
Vector component_log_terms(const MixtureParams& mix, const Vector& target) {
  const Vector log_w = mix.logits.array() - log_sum_exp(mix.logits);
  Vector a(mix.components());
  for (int k = 0; k < mix.components(); ++k) {
    double s = log_w[k];
    for (int d = 0; d < mix.dim(); ++d) {
      const double z = (target[d] - mix.means(d, k)) / mix.sigmas(d, k);
      s -= 0.5 * kLogTwoPi + std::log(mix.sigmas(d, k)) + 0.5 * z * z;
    }
    a[k] = s;
  }
  return a;
}

}  // namespace

double mixture_nll(const MixtureParams& mix, const Vector& target) {
  mix.validate();
  require(target.size() == mix.dim(), ErrorCode::kDimension,
          "target dimension does not match mixture");
  return -log_sum_exp(component_log_terms(mix, target));
}

LatentVector sample_next_latent(const MixtureParams& mix, double tau, Rng& rng) {
  mix.validate();
  require(tau >= 0.0 && tau <= 1.0, ErrorCode::kInvalidArgument,
          "temperature must lie in [0, 1]");
  if (tau == 0.0) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < mix.logits.size(); ++k) {
      if (mix.logits[k] > mix.logits[best]) best = k;
    }
    return LatentVector(mix.means.col(best));
  }
  const Vector scaled = mix.logits / std::max(tau, 1e-8);
  const Vector probs = (scaled.array() - log_sum_exp(scaled)).exp();
  const double u = uniform01(rng);
  Eigen::Index k = 0;
  double acc = probs[0];
  while (k + 1 < probs.size() && u >= acc) acc += probs[++k];
  const double scale = std::sqrt(tau);
  Vector out(mix.dim());
  for (int d = 0; d < mix.dim(); ++d) {
    out[d] = mix.means(d, k) + scale * mix.sigmas(d, k) * standard_normal(rng);
  }
  return LatentVector(std::move(out));
}

// --- Model -----------------------------------------------------------------

void GlobalDynamics::build_layout() {
  cfg_.validate();
  cell_ = nn::LstmCell::make(layout_, "d.lstm", cfg_.input_dim(), cfg_.hidden);
  head_ = nn::Dense::make(layout_, "d.head", cfg_.hidden, cfg_.head_dim());
}

GlobalDynamics::GlobalDynamics(const DynamicsConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  build_layout();
  params_.assign(layout_.size(), 0.0);
  Rng rng(derive_seed(seed, {0x44}));
  cell_.init(params_, rng);
  head_.init(params_, rng, 1.0);
}

GlobalDynamics::GlobalDynamics(const DynamicsConfig& cfg, std::vector<double> params)
    : cfg_(cfg) {
  build_layout();
  require(params.size() == layout_.size(), ErrorCode::kDimension,
          "dynamics parameter count " + std::to_string(params.size()) +
              " does not match architecture (" + std::to_string(layout_.size()) + ")");
  require(nn::all_finite(params), ErrorCode::kNumeric, "dynamics parameters not finite");
  params_ = std::move(params);
}

MixtureParams GlobalDynamics::mixture_from_head(const Matrix& head, Eigen::Index col) const {
  const int k = cfg_.components;
  const int l = cfg_.latent_dim;
  MixtureParams mix;
  mix.logits = head.block(0, col, k, 1);
  mix.means.resize(l, k);
  mix.sigmas.resize(l, k);
  for (int j = 0; j < k; ++j) {
    for (int d = 0; d < l; ++d) {
      mix.means(d, j) = head(k + j * l + d, col);
      mix.sigmas(d, j) = std::max(std::exp(head(k + k * l + j * l + d, col)), kSigmaFloor);
    }
  }
  return mix;
}

GlobalDynamics::StepOutput GlobalDynamics::step(const DynamicsState& prev,
                                                const LatentVector& latent,
                                                const Vector& conditioning) const {
  require(prev.h.size() == cfg_.hidden && prev.c.size() == cfg_.hidden,
          ErrorCode::kDimension, "dynamics state has wrong width");
  require(latent.size() == cfg_.latent_dim, ErrorCode::kDimension,
          "latent width " + std::to_string(latent.size()) + " != " +
              std::to_string(cfg_.latent_dim));
  require(conditioning.size() == cfg_.conditioning_dim(), ErrorCode::kDimension,
          "conditioning width " + std::to_string(conditioning.size()) + " != " +
              std::to_string(cfg_.conditioning_dim()));
  Matrix x(cfg_.input_dim(), 1);
  x << latent.values, conditioning;
  Matrix h, c;
  cell_.forward(params_.data(), x, prev.h, prev.c, h, c, nullptr);
  require(h.allFinite() && c.allFinite(), ErrorCode::kNumeric,
          "non-finite dynamics state");
  const Matrix head = head_.forward(params_.data(), h);
  StepOutput out{{h.col(0), c.col(0)}, mixture_from_head(head, 0)};
  require(out.mixture.logits.allFinite() && out.mixture.means.allFinite(),
          ErrorCode::kNumeric, "non-finite mixture output");
  return out;
}

double GlobalDynamics::sequence_loss(const SequenceBatch& batch,
                                     std::vector<double>* grad) const {
  const std::size_t steps = batch.conditioning.size();
  require(steps >= 1 && batch.latents.size() == steps + 1, ErrorCode::kInvalidArgument,
          "d_loss needs T+1 >= 2 latents and T conditioning vectors");
  const Eigen::Index b = batch.latents[0].cols();
  for (const auto& m : batch.latents) {
    require(m.rows() == cfg_.latent_dim && m.cols() == b, ErrorCode::kDimension,
            "latent batch shape mismatch");
  }
  for (const auto& m : batch.conditioning) {
    require(m.rows() == cfg_.conditioning_dim() && m.cols() == b, ErrorCode::kDimension,
            "conditioning batch shape mismatch");
  }
  const double* p = params_.data();
  const int k = cfg_.components;
  const int l = cfg_.latent_dim;

  std::vector<nn::LstmCell::Cache> caches(grad != nullptr ? steps : 0);
  std::vector<Matrix> hs(steps);
  std::vector<Matrix> dheads(grad != nullptr ? steps : 0);
  Matrix h = Matrix::Zero(cfg_.hidden, b);
  Matrix c = Matrix::Zero(cfg_.hidden, b);
  double loss = 0.0;
  Vector a(k);
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix x(cfg_.input_dim(), b);
    x.topRows(l) = batch.latents[t];
    x.bottomRows(cfg_.conditioning_dim()) = batch.conditioning[t];
    Matrix h_new, c_new;
    cell_.forward(p, x, h, c, h_new, c_new, grad != nullptr ? &caches[t] : nullptr);
    h = std::move(h_new);
    c = std::move(c_new);
    if (!h.allFinite()) fail(ErrorCode::kNumeric, "non-finite dynamics state at step " + std::to_string(t));
    hs[t] = h;
    const Matrix head = head_.forward(p, h);
    Matrix dhead;
    if (grad != nullptr) dhead = Matrix::Zero(head.rows(), b);
    const Matrix& target = batch.latents[t + 1];
    for (Eigen::Index col = 0; col < b; ++col) {
      const Vector logits = head.block(0, col, k, 1);
      const double lse_w = log_sum_exp(logits);
      for (int j = 0; j < k; ++j) {
        double s = logits[j] - lse_w;
        for (int d = 0; d < l; ++d) {
          const double raw = head(k + k * l + j * l + d, col);
          const double sigma = std::max(std::exp(raw), kSigmaFloor);
          const double z = (target(d, col) - head(k + j * l + d, col)) / sigma;
          s -= 0.5 * kLogTwoPi + std::log(sigma) + 0.5 * z * z;
        }
        a[j] = s;
      }
      const double lse = log_sum_exp(a);
      loss -= lse;
      if (grad == nullptr) continue;
      const Vector resp = (a.array() - lse).exp();
      const Vector w = (logits.array() - lse_w).exp();
      for (int j = 0; j < k; ++j) {
        dhead(j, col) = w[j] - resp[j];
        for (int d = 0; d < l; ++d) {
          const double raw = head(k + k * l + j * l + d, col);
          const double e = std::exp(raw);
          const double sigma = std::max(e, kSigmaFloor);
          const double z = (target(d, col) - head(k + j * l + d, col)) / sigma;
          dhead(k + j * l + d, col) = -resp[j] * z / sigma;
          dhead(k + k * l + j * l + d, col) = e > kSigmaFloor ? resp[j] * (1.0 - z * z) : 0.0;
        }
      }
    }
    if (grad != nullptr) dheads[t] = std::move(dhead);
  }
  if (!std::isfinite(loss)) fail(ErrorCode::kNumeric, "d_loss is not finite");
  if (grad == nullptr) return loss;

  grad->assign(params_.size(), 0.0);
  double* g = grad->data();
  Matrix dh_next = Matrix::Zero(cfg_.hidden, b);
  Matrix dc_next = Matrix::Zero(cfg_.hidden, b);
  for (std::size_t t = steps; t-- > 0;) {
    Matrix dh = head_.backward(p, hs[t], dheads[t], g) + dh_next;
    Matrix dh_prev, dc_prev;
    cell_.backward(p, caches[t], dh, dc_next, g, nullptr, dh_prev, dc_prev);
    dh_next = std::move(dh_prev);
    dc_next = std::move(dc_prev);
  }
  return loss;
}

double GlobalDynamics::d_loss(std::span<const LatentVector> latents,
                              std::span<const Vector> conditioning,
                              std::vector<double>* grad) const {
  require(latents.size() >= 2, ErrorCode::kInvalidArgument,
          "d_loss needs a sequence of length >= 2");
  require(conditioning.size() + 1 == latents.size(), ErrorCode::kAlignment,
          "d_loss needs one conditioning vector per transition");
  SequenceBatch batch;
  for (const auto& lv : latents) batch.latents.push_back(lv.values);
  for (const auto& cv : conditioning) batch.conditioning.push_back(cv);
  return sequence_loss(batch, grad);
}

std::vector<Matrix> GlobalDynamics::summaries(const std::vector<Matrix>& latents,
                                              const std::vector<Matrix>& conditioning) const {
  require(latents.size() == conditioning.size(), ErrorCode::kAlignment,
          "summaries need one conditioning input per latent");
  std::vector<Matrix> out;
  if (latents.empty()) return out;
  const Eigen::Index b = latents[0].cols();
  Matrix h = Matrix::Zero(cfg_.hidden, b);
  Matrix c = Matrix::Zero(cfg_.hidden, b);
  for (std::size_t t = 0; t < latents.size(); ++t) {
    require(latents[t].rows() == cfg_.latent_dim && conditioning[t].rows() == cfg_.conditioning_dim(),
            ErrorCode::kDimension, "summary input shape mismatch");
    Matrix x(cfg_.input_dim(), b);
    x.topRows(cfg_.latent_dim) = latents[t];
    x.bottomRows(cfg_.conditioning_dim()) = conditioning[t];
    Matrix h_new, c_new;
    cell_.forward(params_.data(), x, h, c, h_new, c_new, nullptr);
    h = std::move(h_new);
    c = std::move(c_new);
    if (!h.allFinite()) fail(ErrorCode::kNumeric, "non-finite dynamics state at step " + std::to_string(t));
    out.push_back(h);
  }
  return out;
}

std::vector<RolloutStep> rollout_latents(const GlobalDynamics& model, DynamicsState state,
                                         const LatentVector& start,
                                         const std::function<Vector(int)>& conditioning,
                                         int steps, double tau, Rng& rng) {
  require(steps >= 1, ErrorCode::kInvalidArgument, "rollout needs steps >= 1");
  std::vector<RolloutStep> out;
  out.reserve(steps);
  LatentVector current = start;
  for (int t = 0; t < steps; ++t) {
    auto step = model.step(state, current, conditioning(t));
    state = std::move(step.state);
    current = sample_next_latent(step.mixture, tau, rng);
    out.push_back({state.h, current});
  }
  return out;
}

Vector positions_vector(const WorldState& state) {
  Vector v(state.positions.size());
  for (std::size_t i = 0; i < state.positions.size(); ++i) v[i] = state.positions[i];
  return v;
}

Vector noise_conditioning(int n_max, std::uint64_t seed, std::int64_t frame) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(frame)}));
  Vector v(2 * n_max);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = standard_normal(rng);
  return v;
}

Vector conditioning_for(ConditioningMode mode, const WorldState& state,
                        std::uint64_t noise_seed) {
  switch (mode) {
    case ConditioningMode::kPositions: return positions_vector(state);
    case ConditioningMode::kNoise: return noise_conditioning(state.n_max(), noise_seed, state.frame);
    case ConditioningMode::kZeros: return Vector::Zero(2 * state.n_max());
  }
  return positions_vector(state);
}

}  // namespace rdb
