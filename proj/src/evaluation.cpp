#include "rdb/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "rdb/error.hpp"
#include "rdb/parallel.hpp"

namespace rdb {

using nn::Vector;

namespace {

void check_lengths(const Trajectory& a, const Trajectory& b) {
  require(!a.empty(), ErrorCode::kInvalidArgument, "trajectories must be nonempty");
  require(a.size() == b.size(), ErrorCode::kDimension,
          "trajectory lengths differ (" + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()) + ")");
}

}  // namespace

double ade(const Trajectory& predicted, const Trajectory& truth) {
  check_lengths(predicted, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double dx = predicted[i].x - truth[i].x;
    const double dy = predicted[i].y - truth[i].y;
    s += dx * dx + dy * dy;
  }
  return std::sqrt(s / static_cast<double>(truth.size()));
}

double ade_mean_distance(const Trajectory& predicted, const Trajectory& truth) {
  check_lengths(predicted, truth);
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double dx = predicted[i].x - truth[i].x;
    const double dy = predicted[i].y - truth[i].y;
    s += std::sqrt(dx * dx + dy * dy);
  }
  return s / static_cast<double>(truth.size());
}

double fde(const Trajectory& predicted, const Trajectory& truth) {
  check_lengths(predicted, truth);
  const double dx = predicted.back().x - truth.back().x;
  const double dy = predicted.back().y - truth.back().y;
  return std::sqrt(dx * dx + dy * dy);
}

Trajectory constant_velocity_predict(const Trajectory& observed, int pred_len) {
  require(observed.size() >= 2, ErrorCode::kInvalidArgument,
          "constant velocity needs at least two observed positions");
  require(pred_len >= 1, ErrorCode::kInvalidArgument, "pred_len must be >= 1");
  const double n = static_cast<double>(observed.size() - 1);
  const double vx = (observed.back().x - observed.front().x) / n;
  const double vy = (observed.back().y - observed.front().y) / n;
  Trajectory out;
  for (int k = 1; k <= pred_len; ++k) {
    out.push_back({observed.back().x + k * vx, observed.back().y + k * vy});
  }
  return out;
}

Trajectory positions(const std::vector<AgentState>& states) {
  Trajectory t;
  t.reserve(states.size());
  for (const auto& s : states) t.push_back({s.x, s.y});
  return t;
}

Trajectory OraclePredictor::predict(const TrajectoryWindow& window, int pred_len,
                                    PredictionMode, Rng&) const {
  Trajectory t = positions(window.pred);
  t.resize(static_cast<std::size_t>(pred_len), t.empty() ? Point{} : t.back());
  return t;
}

Trajectory ConstantVelocityPredictor::predict(const TrajectoryWindow& window, int pred_len,
                                              PredictionMode, Rng&) const {
  return constant_velocity_predict(positions(window.obs), pred_len);
}

Trajectory RandomUniformPredictor::predict(const TrajectoryWindow&, int pred_len,
                                           PredictionMode, Rng& rng) const {
  Trajectory t;
  for (int k = 0; k < pred_len; ++k) {
    const double x = uniform01(rng);
    t.push_back({x, uniform01(rng)});
  }
  return t;
}

std::string to_string(ContextMode mode) {
  return mode == ContextMode::kClosedLoop ? "closed-loop" : "freeze";
}

ContextMode parse_context_mode(const std::string& text) {
  if (text == "closed-loop") return ContextMode::kClosedLoop;
  if (text == "freeze") return ContextMode::kFreeze;
  fail(ErrorCode::kConfig, "unknown context mode '" + text + "' (expected closed-loop or freeze)");
}

void check_compatible(const ModelBundle& bundle) {
  require(bundle.predictor.has_value(), ErrorCode::kDependency, "bundle has no B checkpoint");
  const PredictorConfig& p = bundle.predictor->config();
  if (uses_latent(p.inputs) || uses_summary(p.inputs)) {
    require(bundle.encoder.has_value(), ErrorCode::kDependency,
            "B with inputs " + to_string(p.inputs) + " needs an R checkpoint");
  }
  if (uses_latent(p.inputs)) {
    require(bundle.encoder->config().latent_dim == p.latent_dim, ErrorCode::kCompatibility,
            "R latent width " + std::to_string(bundle.encoder->config().latent_dim) +
                " does not match B (" + std::to_string(p.latent_dim) + ")");
  }
  if (uses_summary(p.inputs)) {
    require(bundle.dynamics.has_value(), ErrorCode::kDependency,
            "B with inputs " + to_string(p.inputs) + " needs a D checkpoint");
    require(bundle.dynamics->config().hidden == p.summary_dim, ErrorCode::kCompatibility,
            "D summary width " + std::to_string(bundle.dynamics->config().hidden) +
                " does not match B (" + std::to_string(p.summary_dim) + ")");
  }
  if (bundle.dynamics && bundle.encoder) {
    require(bundle.dynamics->config().latent_dim == bundle.encoder->config().latent_dim,
            ErrorCode::kCompatibility, "D latent width does not match R");
  }
}

RdbPredictor::RdbPredictor(std::shared_ptr<const ModelBundle> bundle, double tau,
                           ContextMode context, std::uint64_t noise_seed)
    : bundle_(std::move(bundle)), tau_(tau), context_(context), noise_seed_(noise_seed) {
  require(bundle_ != nullptr, ErrorCode::kInvalidArgument, "null model bundle");
  require(tau >= 0.0 && tau <= 1.0, ErrorCode::kConfig, "tau must lie in [0, 1]");
  check_compatible(*bundle_);
  if (bundle_->dynamics) n_max_ = bundle_->dynamics->config().n_max;
}

void RdbPredictor::prepare(const Scene& scene, std::size_t scene_index) {
  const InputConfig inputs = bundle_->predictor->config().inputs;
  const SpatialEncoder* enc =
      inputs != InputConfig::kS && bundle_->encoder ? &*bundle_->encoder : nullptr;
  scene_ = encode_scene(enc, scene, n_max_,
                        derive_seed(noise_seed_, {static_cast<std::uint64_t>(scene_index)}));
}

namespace {

// Rolls D alongside the agent: teacher-forced over the observation window,
// then closed-loop at tau with the agent's prediction written into its slot.
class SceneContextProvider : public ContextProvider {
 public:
  SceneContextProvider(const EncodedScene& scene, const GlobalDynamics* dynamics,
                       const TrajectoryWindow& window, InputConfig inputs, double tau,
                       ContextMode mode, Rng& rng)
      : scene_(scene), dynamics_(dynamics), window_(window), inputs_(inputs), tau_(tau),
        mode_(mode), rng_(rng) {
    offset_ = window.first_frame - scene.first_frame;
    if (dynamics_ != nullptr) state_ = DynamicsState::zero(dynamics_->config().hidden);
  }

  FrameContext observed(int i) override {
    const int t = offset_ + i;
    require(t >= 0 && t < scene_.frame_count(), ErrorCode::kAlignment,
            "observed frame outside the encoded scene");
    FrameContext ctx;
    ctx.latent = scene_.latents.at(t).values;
    if (dynamics_ != nullptr) {
      const DynamicsConfig& dc = dynamics_->config();
      auto out = dynamics_->step(state_, scene_.latents[t],
                                 scene_conditioning(dc.conditioning, scene_, t, dc.n_max));
      state_ = std::move(out.state);
      mixture_ = std::move(out.mixture);
      ctx.summary = state_.h;
    }
    last_ = ctx;
    last_t_ = t;
    return ctx;
  }

  FrameContext predicted(int k, Point agent) override {
    if (mode_ == ContextMode::kFreeze || dynamics_ == nullptr) return last_;
    const DynamicsConfig& dc = dynamics_->config();
    const LatentVector next = sample_next_latent(mixture_, tau_, rng_);
    Vector cond;
    switch (dc.conditioning) {
      case ConditioningMode::kPositions: {
        WorldState held = scene_.states.at(last_t_);
        const int slot = held.slot_of(window_.agent_id);
        if (slot >= 0) {
          held.positions[2 * slot] = agent.x;
          held.positions[2 * slot + 1] = agent.y;
        }
        cond = positions_vector(held);
        break;
      }
      case ConditioningMode::kNoise:
        cond = noise_conditioning(dc.n_max, scene_.noise_seed, scene_.first_frame + last_t_ + k);
        break;
      case ConditioningMode::kZeros:
        cond = Vector::Zero(dc.conditioning_dim());
        break;
    }
    auto out = dynamics_->step(state_, next, cond);
    state_ = std::move(out.state);
    mixture_ = std::move(out.mixture);
    FrameContext ctx;
    if (uses_latent(inputs_)) ctx.latent = next.values;
    if (uses_summary(inputs_)) ctx.summary = state_.h;
    return ctx;
  }

 private:
  const EncodedScene& scene_;
  const GlobalDynamics* dynamics_;
  const TrajectoryWindow& window_;
  InputConfig inputs_;
  double tau_;
  ContextMode mode_;
  Rng& rng_;
  int offset_ = 0;
  int last_t_ = 0;
  DynamicsState state_;
  MixtureParams mixture_;
  FrameContext last_;
};

}  // namespace

Trajectory RdbPredictor::predict(const TrajectoryWindow& window, int pred_len,
                                 PredictionMode mode, Rng& rng) const {
  const LocalPredictor& b = *bundle_->predictor;
  const InputConfig inputs = b.config().inputs;
  const Trajectory obs = positions(window.obs);
  if (inputs == InputConfig::kS) {
    return rollout_agent(b, obs, nullptr, pred_len, mode, rng).positions;
  }
  SceneContextProvider provider(scene_, bundle_->dynamics ? &*bundle_->dynamics : nullptr,
                                window, inputs, tau_, context_, rng);
  return rollout_agent(b, obs, &provider, pred_len, mode, rng).positions;
}

void EvalOptions::validate() const {
  require(obs_len >= 1 && pred_len >= 1, ErrorCode::kConfig, "obs_len and pred_len must be >= 1");
  require(stride >= 1, ErrorCode::kConfig, "window stride must be >= 1");
  require(max_windows >= 0 && best_of >= 0 && plot_windows >= 0, ErrorCode::kConfig,
          "max_windows, best_of and plot_windows must be >= 0");
}

MetricReport evaluate(TrajectoryPredictor& predictor, const std::vector<const Scene*>& scenes,
                      const EvalOptions& options, const std::string& mode_label) {
  options.validate();
  MetricReport report;
  report.mode = mode_label.empty() ? predictor.name() : mode_label;
  report.obs_len = options.obs_len;
  report.pred_len = options.pred_len;
  double sum_ade = 0.0, sum_fde = 0.0, sum_md = 0.0;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const Scene& scene = *scenes[si];
    auto windows = window_split(scene.dataset, options.obs_len + options.pred_len,
                                options.obs_len, options.stride);
    if (options.max_windows > 0 && static_cast<int>(windows.size()) > options.max_windows) {
      std::vector<TrajectoryWindow> kept;
      const std::size_t n = windows.size();
      for (int i = 0; i < options.max_windows; ++i) {
        kept.push_back(windows[static_cast<std::size_t>(i) * n / options.max_windows]);
      }
      windows = std::move(kept);
    }
    predictor.prepare(scene, si);
    std::vector<Trajectory> preds(windows.size());
    parallel_for(windows.size(), [&](std::size_t wi) {
      Rng rng(derive_seed(options.seed, {si, wi}));
      const TrajectoryWindow& w = windows[wi];
      if (options.best_of > 0) {
        const Trajectory truth = positions(w.pred);
        double best = 0.0;
        for (int k = 0; k < options.best_of; ++k) {
          Trajectory t = predictor.predict(w, options.pred_len, PredictionMode::kSample, rng);
          const double e = ade(t, truth);
          if (k == 0 || e < best) {
            best = e;
            preds[wi] = std::move(t);
          }
        }
      } else {
        preds[wi] = predictor.predict(w, options.pred_len, options.mode, rng);
      }
    });
    DatasetMetrics dm;
    dm.dataset = scene.dataset.name;
    dm.trajectories = windows.size();
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
      const Trajectory truth = positions(windows[wi].pred);
      const double a = ade(preds[wi], truth);
      const double f = fde(preds[wi], truth);
      const double m = ade_mean_distance(preds[wi], truth);
      dm.ade += a;
      dm.fde += f;
      dm.ade_mean_distance += m;
      sum_ade += a;
      sum_fde += f;
      sum_md += m;
      if (static_cast<int>(dm.plots.size()) < options.plot_windows) {
        dm.plots.push_back({positions(windows[wi].obs), truth, {preds[wi]}});
      }
    }
    if (dm.trajectories > 0) {
      const double n = static_cast<double>(dm.trajectories);
      dm.ade /= n;
      dm.fde /= n;
      dm.ade_mean_distance /= n;
    }
    report.trajectories += dm.trajectories;
    report.datasets.push_back(std::move(dm));
  }
  if (report.trajectories > 0) {
    const double n = static_cast<double>(report.trajectories);
    report.ade = sum_ade / n;
    report.fde = sum_fde / n;
    report.ade_mean_distance = sum_md / n;
  }
  return report;
}

std::string report_csv(const MetricReport& report, bool with_mean_distance) {
  std::ostringstream s;
  s << "dataset,mode,obs_len,pred_len,ade,fde,n_trajectories";
  if (with_mean_distance) s << ",ade_mean_distance";
  s << '\n';
  auto row = [&](const std::string& name, double a, double f, double m, std::size_t n) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.9f,%.9f", a, f);
    s << name << ',' << report.mode << ',' << report.obs_len << ',' << report.pred_len << ','
      << buf << ',' << n;
    if (with_mean_distance) {
      std::snprintf(buf, sizeof buf, "%.9f", m);
      s << ',' << buf;
    }
    s << '\n';
  };
  for (const auto& d : report.datasets) {
    row(d.dataset, d.ade, d.fde, d.ade_mean_distance, d.trajectories);
  }
  row("all", report.ade, report.fde, report.ade_mean_distance, report.trajectories);
  return s.str();
}

}  // namespace rdb
