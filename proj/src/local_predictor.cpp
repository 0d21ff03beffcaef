#include "rdb/local_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "rdb/error.hpp"

namespace rdb {

using nn::Matrix;
using nn::Vector;

namespace {

const double kLogTwoPi = std::log(2.0 * std::numbers::pi);
constexpr double kSigmaMin = 1e-6;
// Per-frame displacements are ~1e-2 in normalised units; this brings them
// to the scale of the position inputs.
constexpr double kDisplacementScale = 10.0;

}  // namespace

std::string to_string(InputConfig inputs) {
  switch (inputs) {
    case InputConfig::kS: return "s";
    case InputConfig::kSL: return "sl";
    case InputConfig::kSH: return "sh";
    case InputConfig::kSLH: return "slh";
  }
  return "s";
}

InputConfig parse_input_config(const std::string& text) {
  if (text == "s") return InputConfig::kS;
  if (text == "sl") return InputConfig::kSL;
  if (text == "sh") return InputConfig::kSH;
  if (text == "slh") return InputConfig::kSLH;
  fail(ErrorCode::kConfig, "unknown input config '" + text + "' (expected s, sl, sh or slh)");
}

bool uses_latent(InputConfig inputs) {
  return inputs == InputConfig::kSL || inputs == InputConfig::kSLH;
}

bool uses_summary(InputConfig inputs) {
  return inputs == InputConfig::kSH || inputs == InputConfig::kSLH;
}

void PredictorConfig::validate() const {
  require(hidden >= 1, ErrorCode::kConfig, "predictor hidden must be >= 1");
  require(!uses_latent(inputs) || latent_dim >= 1, ErrorCode::kConfig,
          "predictor latent_dim must be >= 1");
  require(!uses_summary(inputs) || summary_dim >= 1, ErrorCode::kConfig,
          "predictor summary_dim must be >= 1");
}

int PredictorConfig::input_dim() const {
  return 4 + (uses_latent(inputs) ? latent_dim : 0) + (uses_summary(inputs) ? summary_dim : 0);
}

void BivariateGaussian::validate() const {
  require(std::isfinite(mu_x) && std::isfinite(mu_y) && std::isfinite(sigma_x) &&
              std::isfinite(sigma_y) && std::isfinite(rho),
          ErrorCode::kNumeric, "bivariate gaussian not finite");
  require(sigma_x >= kSigmaMin && sigma_y >= kSigmaMin, ErrorCode::kNumeric,
          "bivariate sigma below floor");
  require(std::abs(rho) <= kRhoLimit, ErrorCode::kNumeric, "bivariate |rho| > 0.999");
}

double bivariate_nll(const BivariateGaussian& g, Point target) {
  g.validate();
  const double zx = (target.x - g.mu_x) / g.sigma_x;
  const double zy = (target.y - g.mu_y) / g.sigma_y;
  const double q = 1.0 - g.rho * g.rho;
  const double z = zx * zx + zy * zy - 2.0 * g.rho * zx * zy;
  return kLogTwoPi + std::log(g.sigma_x) + std::log(g.sigma_y) + 0.5 * std::log(q) +
         z / (2.0 * q);
}

Point sample_position(const BivariateGaussian& g, Rng& rng) {
  g.validate();
  const double n1 = standard_normal(rng);
  const double n2 = standard_normal(rng);
  return {g.mu_x + g.sigma_x * n1,
          g.mu_y + g.sigma_y * (g.rho * n1 + std::sqrt(1.0 - g.rho * g.rho) * n2)};
}

PredictorState PredictorState::zero(int hidden) {
  return {Vector::Zero(hidden), Vector::Zero(hidden), {}, false};
}

namespace {

struct HeadValues {
  BivariateGaussian g;
  bool sx_floored, sy_floored, rho_clamped;
};

HeadValues decode_head(const Matrix& head, Eigen::Index col, double x, double y) {
  HeadValues v{};
  const double ex = std::exp(head(2, col));
  const double ey = std::exp(head(3, col));
  const double r = std::tanh(head(4, col));
  v.g.mu_x = x + head(0, col);
  v.g.mu_y = y + head(1, col);
  v.g.sigma_x = std::max(ex, kSigmaMin);
  v.g.sigma_y = std::max(ey, kSigmaMin);
  v.g.rho = std::clamp(r, -kRhoLimit, kRhoLimit);
  v.sx_floored = ex < kSigmaMin;
  v.sy_floored = ey < kSigmaMin;
  v.rho_clamped = std::abs(r) > kRhoLimit;
  return v;
}

}  // namespace

void LocalPredictor::build_layout() {
  cfg_.validate();
  cell_ = nn::LstmCell::make(layout_, "b.lstm", cfg_.input_dim(), cfg_.hidden);
  head_ = nn::Dense::make(layout_, "b.head", cfg_.hidden, 5);
}

LocalPredictor::LocalPredictor(const PredictorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  build_layout();
  params_.assign(layout_.size(), 0.0);
  Rng rng(derive_seed(seed, {0x42}));
  cell_.init(params_, rng);
  head_.init(params_, rng, 0.1);
}

LocalPredictor::LocalPredictor(const PredictorConfig& cfg, std::vector<double> params)
    : cfg_(cfg) {
  build_layout();
  require(params.size() == layout_.size(), ErrorCode::kDimension,
          "predictor parameter count " + std::to_string(params.size()) +
              " does not match architecture (" + std::to_string(layout_.size()) + ")");
  require(nn::all_finite(params), ErrorCode::kNumeric, "predictor parameters not finite");
  params_ = std::move(params);
}

void LocalPredictor::check_context(const FrameContext& context) const {
  if (uses_latent(cfg_.inputs)) {
    require(context.latent.size() == cfg_.latent_dim, ErrorCode::kDimension,
            "context latent width " + std::to_string(context.latent.size()) + " != " +
                std::to_string(cfg_.latent_dim));
  }
  if (uses_summary(cfg_.inputs)) {
    require(context.summary.size() == cfg_.summary_dim, ErrorCode::kDimension,
            "context summary width " + std::to_string(context.summary.size()) + " != " +
                std::to_string(cfg_.summary_dim));
  }
}

LocalPredictor::StepOutput LocalPredictor::predict_step(const PredictorState& prev,
                                                        Point position,
                                                        const FrameContext& context) const {
  require(prev.h.size() == cfg_.hidden && prev.c.size() == cfg_.hidden,
          ErrorCode::kDimension, "predictor state has wrong width");
  check_context(context);
  Matrix x(cfg_.input_dim(), 1);
  x(0, 0) = position.x;
  x(1, 0) = position.y;
  x(2, 0) = prev.has_last ? kDisplacementScale * (position.x - prev.last.x) : 0.0;
  x(3, 0) = prev.has_last ? kDisplacementScale * (position.y - prev.last.y) : 0.0;
  Eigen::Index row = 4;
  if (uses_latent(cfg_.inputs)) {
    x.block(row, 0, cfg_.latent_dim, 1) = context.latent;
    row += cfg_.latent_dim;
  }
  if (uses_summary(cfg_.inputs)) x.block(row, 0, cfg_.summary_dim, 1) = context.summary;
  Matrix h, c;
  cell_.forward(params_.data(), x, prev.h, prev.c, h, c, nullptr);
  const Matrix head = head_.forward(params_.data(), h);
  require(head.allFinite() && h.allFinite(), ErrorCode::kNumeric,
          "non-finite predictor output");
  StepOutput out{{h.col(0), c.col(0), position, true},
                 decode_head(head, 0, position.x, position.y).g};
  return out;
}

Matrix LocalPredictor::assemble_input(std::span<const TrajectoryWindow> windows,
                                      std::span<const WindowContext> contexts,
                                      const std::vector<std::size_t>& members, int t) const {
  Matrix x(cfg_.input_dim(), static_cast<Eigen::Index>(members.size()));
  for (std::size_t j = 0; j < members.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const AgentState& s = windows[members[j]].at(t);
    x(0, col) = s.x;
    x(1, col) = s.y;
    if (t > 0) {
      const AgentState& before = windows[members[j]].at(t - 1);
      x(2, col) = kDisplacementScale * (s.x - before.x);
      x(3, col) = kDisplacementScale * (s.y - before.y);
    } else {
      x(2, col) = 0.0;
      x(3, col) = 0.0;
    }
    Eigen::Index row = 4;
    if (uses_latent(cfg_.inputs)) {
      x.block(row, col, cfg_.latent_dim, 1) = contexts[members[j]].frames[t].latent;
      row += cfg_.latent_dim;
    }
    if (uses_summary(cfg_.inputs)) {
      x.block(row, col, cfg_.summary_dim, 1) = contexts[members[j]].frames[t].summary;
    }
  }
  return x;
}

double LocalPredictor::group_loss(std::span<const TrajectoryWindow> windows,
                                  std::span<const WindowContext> contexts,
                                  const std::vector<std::size_t>& members,
                                  double* grad) const {
  const int len = windows[members[0]].length();
  const int steps = len - 1;
  const auto b = static_cast<Eigen::Index>(members.size());
  const double* p = params_.data();
  std::vector<nn::LstmCell::Cache> caches(grad != nullptr ? steps : 0);
  std::vector<Matrix> hs(steps), dheads(steps);
  Matrix h = Matrix::Zero(cfg_.hidden, b);
  Matrix c = Matrix::Zero(cfg_.hidden, b);
  double loss = 0.0;
  for (int t = 0; t < steps; ++t) {
    const Matrix x = assemble_input(windows, contexts, members, t);
    Matrix h_new, c_new;
    cell_.forward(p, x, h, c, h_new, c_new, grad != nullptr ? &caches[t] : nullptr);
    h = std::move(h_new);
    c = std::move(c_new);
    hs[t] = h;
    const Matrix head = head_.forward(p, h);
    Matrix dhead = Matrix::Zero(5, b);
    for (Eigen::Index col = 0; col < b; ++col) {
      const TrajectoryWindow& w = windows[members[col]];
      const AgentState& cur = w.at(t);
      const AgentState& next = w.at(t + 1);
      const HeadValues v = decode_head(head, col, cur.x, cur.y);
      const BivariateGaussian& g = v.g;
      const double zx = (next.x - g.mu_x) / g.sigma_x;
      const double zy = (next.y - g.mu_y) / g.sigma_y;
      const double q = 1.0 - g.rho * g.rho;
      const double z = zx * zx + zy * zy - 2.0 * g.rho * zx * zy;
      loss += kLogTwoPi + std::log(g.sigma_x) + std::log(g.sigma_y) + 0.5 * std::log(q) +
              z / (2.0 * q);
      if (grad == nullptr) continue;
      dhead(0, col) = -(zx - g.rho * zy) / (q * g.sigma_x);
      dhead(1, col) = -(zy - g.rho * zx) / (q * g.sigma_y);
      dhead(2, col) = v.sx_floored ? 0.0 : 1.0 - zx * (zx - g.rho * zy) / q;
      dhead(3, col) = v.sy_floored ? 0.0 : 1.0 - zy * (zy - g.rho * zx) / q;
      const double drho = -g.rho / q - zx * zy / q + g.rho * z / (q * q);
      const double r = std::tanh(head(4, col));
      dhead(4, col) = v.rho_clamped ? 0.0 : drho * (1.0 - r * r);
    }
    dheads[t] = std::move(dhead);
  }
  if (!std::isfinite(loss)) fail(ErrorCode::kNumeric, "b_loss is not finite");
  if (grad == nullptr) return loss;
  Matrix dh_next = Matrix::Zero(cfg_.hidden, b);
  Matrix dc_next = Matrix::Zero(cfg_.hidden, b);
  for (int t = steps; t-- > 0;) {
    Matrix dh = head_.backward(p, hs[t], dheads[t], grad) + dh_next;
    Matrix dh_prev, dc_prev;
    cell_.backward(p, caches[t], dh, dc_next, grad, nullptr, dh_prev, dc_prev);
    dh_next = std::move(dh_prev);
    dc_next = std::move(dc_prev);
  }
  return loss;
}

double LocalPredictor::b_loss(std::span<const TrajectoryWindow> windows,
                              std::span<const WindowContext> contexts,
                              std::vector<double>* grad) const {
  require(!windows.empty(), ErrorCode::kInvalidArgument, "b_loss needs windows");
  const bool needs_context = cfg_.inputs != InputConfig::kS;
  if (needs_context) {
    require(contexts.size() == windows.size(), ErrorCode::kAlignment,
            "b_loss needs one context per window");
  }
  // Windows of equal length share a batch.
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const TrajectoryWindow& w = windows[i];
    require(w.length() >= 2, ErrorCode::kInvalidArgument,
            "b_loss windows need at least two frames");
    if (needs_context) {
      const WindowContext& ctx = contexts[i];
      require(ctx.first_frame == w.first_frame &&
                  static_cast<int>(ctx.frames.size()) >= w.length() - 1,
              ErrorCode::kAlignment,
              "context for window of agent " + std::to_string(w.agent_id) +
                  " at frame " + std::to_string(w.first_frame) + " is misaligned");
      for (int t = 0; t + 1 < w.length(); ++t) check_context(ctx.frames[t]);
    }
    groups[w.length()].push_back(i);
  }
  if (grad != nullptr) grad->assign(params_.size(), 0.0);
  double loss = 0.0;
  for (const auto& [len, members] : groups) {
    loss += group_loss(windows, contexts, members, grad != nullptr ? grad->data() : nullptr);
  }
  return loss;
}

std::string to_string(PredictionMode mode) {
  return mode == PredictionMode::kMean ? "mean" : "sample";
}

PredictionMode parse_prediction_mode(const std::string& text) {
  if (text == "mean") return PredictionMode::kMean;
  if (text == "sample") return PredictionMode::kSample;
  fail(ErrorCode::kConfig, "unknown prediction mode '" + text + "' (expected mean or sample)");
}

AgentRollout rollout_agent(const LocalPredictor& model, const Trajectory& observed,
                           ContextProvider* context, int pred_len, PredictionMode mode,
                           Rng& rng) {
  require(!observed.empty(), ErrorCode::kInvalidArgument, "rollout needs observations");
  require(pred_len >= 1, ErrorCode::kInvalidArgument, "pred_len must be >= 1");
  const bool needs_context = model.config().inputs != InputConfig::kS;
  require(!needs_context || context != nullptr, ErrorCode::kDependency,
          "input config " + to_string(model.config().inputs) + " needs a context provider");
  PredictorState state = PredictorState::zero(model.config().hidden);
  const FrameContext empty;
  LocalPredictor::StepOutput out;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const FrameContext ctx = needs_context ? context->observed(static_cast<int>(i)) : empty;
    out = model.predict_step(state, observed[i], ctx);
    state = out.state;
  }
  AgentRollout rollout;
  auto emit = [&](const BivariateGaussian& g) {
    const Point p = mode == PredictionMode::kMean ? Point{g.mu_x, g.mu_y}
                                                  : sample_position(g, rng);
    rollout.positions.push_back(p);
    rollout.gaussians.push_back(g);
    return p;
  };
  Point p = emit(out.gaussian);
  for (int k = 1; k < pred_len; ++k) {
    const FrameContext ctx = needs_context ? context->predicted(k, p) : empty;
    out = model.predict_step(state, p, ctx);
    state = out.state;
    p = emit(out.gaussian);
  }
  return rollout;
}

}  // namespace rdb
