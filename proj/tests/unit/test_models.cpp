#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "rdb/global_dynamics.hpp"
#include "rdb/local_predictor.hpp"
#include "rdb/spatial_encoder.hpp"
#include "rdb/training.hpp"

namespace rdb {
namespace {

nn::Vector gaussian(Rng& rng, int n, double mean = 0.0) {
  std::normal_distribution<double> d(mean, 1.0);
  nn::Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

// Scalar-loop V-statistic with a fixed bandwidth.
double mmd_oracle(const std::vector<nn::Vector>& a, const std::vector<nn::Vector>& b, double h) {
  auto k = [h](const nn::Vector& x, const nn::Vector& y) {
    double s = 0.0;
    for (int i = 0; i < x.size(); ++i) s += (x(i) - y(i)) * (x(i) - y(i));
    return std::exp(-s / (2.0 * h * h));
  };
  auto mean_k = [&](const std::vector<nn::Vector>& p, const std::vector<nn::Vector>& q) {
    double s = 0.0;
    for (const auto& x : p) {
      for (const auto& y : q) s += k(x, y);
    }
    return s / (p.size() * q.size());
  };
  return mean_k(a, a) + mean_k(b, b) - 2.0 * mean_k(a, b);
}

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.channels = {4, 8};
  c.latent_dim = 6;
  return c;
}

TEST(Mmd, IdenticalAndSinglePointSamplesCancel) {
  Rng rng(1);
  std::vector<nn::Vector> a;
  for (int i = 0; i < 10; ++i) a.push_back(gaussian(rng, 3));
  MmdConfig cfg;
  EXPECT_EQ(mmd_squared(a, a, cfg), 0.0);
  std::vector<nn::Vector> one{a[0]};
  EXPECT_EQ(mmd_squared(one, one, cfg), 0.0);
}

TEST(Mmd, SymmetricAndSeparatesShiftedSamples) {
  Rng rng(2);
  std::vector<nn::Vector> p, q, r;
  for (int i = 0; i < 500; ++i) {
    p.push_back(gaussian(rng, 2));
    q.push_back(gaussian(rng, 2));
    r.push_back(gaussian(rng, 2, 3.0));
  }
  MmdConfig fixed;
  fixed.bandwidth_mode = BandwidthMode::kFixed;
  fixed.bandwidth = 1.0;
  const double same = mmd_squared(p, q, fixed);
  const double shifted = mmd_squared(p, r, fixed);
  EXPECT_NEAR(same, mmd_oracle(p, q, 1.0), 1e-10);
  EXPECT_NEAR(shifted, mmd_oracle(p, r, 1.0), 1e-10);
  EXPECT_GT(shifted, same);
  MmdConfig median;
  EXPECT_NEAR(mmd_squared(p, r, median), mmd_squared(r, p, median), 1e-12);
}

TEST(Mmd, DimensionMismatchThrows) {
  Rng rng(3);
  std::vector<nn::Vector> a{gaussian(rng, 2)}, b{gaussian(rng, 3)};
  EXPECT_THROW(mmd_squared(a, b, MmdConfig{}), Error);
}

TEST(Encoder, ShapesRangeAndDeterminism) {
  SpatialEncoder enc(tiny_encoder(), 4);
  ImageFrame img;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = (i % 7) / 7.0f;
  const LatentVector a = enc.encode(img);
  const LatentVector b = enc.encode(img);
  ASSERT_EQ(a.size(), 6);
  EXPECT_TRUE(a.values.allFinite());
  EXPECT_EQ(a.values, b.values);
  const ImageFrame out = enc.decode(LatentVector(nn::Vector::Zero(6)));
  for (float v : out.pixels) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Encoder, BadLatentsThrow) {
  SpatialEncoder enc(tiny_encoder(), 4);
  EXPECT_THROW(enc.decode(LatentVector(nn::Vector::Zero(5))), Error);
  nn::Vector bad = nn::Vector::Zero(6);
  bad(2) = std::nan("");
  try {
    enc.decode(LatentVector(bad));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
  }
}

TEST(Encoder, ZeroWeightLossIsReconstructionMse) {
  SpatialEncoder enc(tiny_encoder(), 5);
  ImageFrame a, b;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    a.pixels[i] = (i % 5) / 5.0f;
    b.pixels[i] = (i % 3) / 3.0f;
  }
  std::vector<const ImageFrame*> batch{&a, &b};
  MmdConfig cfg;
  cfg.weight = 0.0;
  const double loss = enc.r_loss(batch, cfg, 1);
  EXPECT_NEAR(loss, 0.5 * (enc.reconstruction_error(a) + enc.reconstruction_error(b)), 1e-12);
  cfg.weight = 10.0;
  EXPECT_GE(enc.r_loss(batch, cfg, 1), loss);
}

TEST(Encoder, TrainingSeparatesBlackAndWhite) {
  ImageFrame black, white;
  std::fill(white.pixels.begin(), white.pixels.end(), 1.0f);
  std::vector<const ImageFrame*> images{&black, &white};
  TrainConfig t;
  t.batch_size = 2;
  t.epochs = 200;
  t.max_steps = 200;
  const auto trained = train_encoder(images, tiny_encoder(), MmdConfig{}, t);
  const double sep = (trained.model.encode(black).values - trained.model.encode(white).values).norm();
  EXPECT_GT(sep, 0.0);
}

TEST(Encoder, LossDecreasesOnSmallDataset) {
  std::vector<ImageFrame> frames(8);
  for (int k = 0; k < 8; ++k) {
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        const bool on = std::abs(x - 8 * k - 4) < 5 && std::abs(y - 32) < 5;
        for (int c = 0; c < 3; ++c) frames[k].at(y, x, c) = on ? 0.9f : 0.1f;
      }
    }
  }
  std::vector<const ImageFrame*> images;
  for (const auto& f : frames) images.push_back(&f);
  TrainConfig t;
  t.batch_size = 8;
  t.epochs = 500;
  t.max_steps = 500;
  const auto trained = train_encoder(images, tiny_encoder(), MmdConfig{}, t);
  const auto& h = trained.history;
  ASSERT_EQ(h.size(), 500u);
  EXPECT_LT(h.back(), 0.25 * h.front());
}

DynamicsConfig small_dynamics(int latent, int k) {
  DynamicsConfig c;
  c.latent_dim = latent;
  c.components = k;
  c.n_max = 2;
  c.hidden = 8;
  return c;
}

TEST(Dynamics, UnitGaussianNllIsClosedForm) {
  MixtureParams m;
  m.logits = nn::Vector::Zero(1);
  m.means = nn::Matrix(2, 1);
  m.means << 0.3, -0.2;
  m.sigmas = nn::Matrix::Ones(2, 1);
  nn::Vector target(2);
  target << 0.3, -0.2;
  EXPECT_NEAR(mixture_nll(m, target), std::log(2.0 * std::numbers::pi), 1e-12);
  m.sigmas *= 10.0;
  EXPECT_NEAR(mixture_nll(m, target), std::log(2.0 * std::numbers::pi) + 2.0 * std::log(10.0),
              1e-12);
}

TEST(Dynamics, StepInvariantsUnderRandomParameters) {
  Rng rng(6);
  for (int draw = 0; draw < 100; ++draw) {
    GlobalDynamics d(small_dynamics(3, 4), 1000 + draw);
    const auto out = d.step(DynamicsState::zero(8), LatentVector(gaussian(rng, 3)),
                            gaussian(rng, 4));
    EXPECT_NEAR(out.mixture.weights().sum(), 1.0, 1e-9);
    EXPECT_GE(out.mixture.sigmas.minCoeff(), kSigmaFloor);
  }
}

TEST(Dynamics, StepIsDeterministic) {
  GlobalDynamics d(small_dynamics(3, 2), 7);
  Rng rng(7);
  const LatentVector l(gaussian(rng, 3));
  const nn::Vector c = gaussian(rng, 4);
  const auto a = d.step(DynamicsState::zero(8), l, c);
  const auto b = d.step(DynamicsState::zero(8), l, c);
  EXPECT_EQ(a.state.h, b.state.h);
  EXPECT_EQ(a.mixture.means, b.mixture.means);
}

TEST(Dynamics, LossFiniteAtSigmaFloor) {
  MixtureParams m;
  m.logits = nn::Vector::Zero(2);
  m.means = nn::Matrix::Zero(3, 2);
  m.sigmas = nn::Matrix::Constant(3, 2, kSigmaFloor);
  nn::Vector target = nn::Vector::Constant(3, 10.0);
  EXPECT_TRUE(std::isfinite(mixture_nll(m, target)));
}

TEST(Dynamics, SingleComponentSampleVarianceMatchesSigma) {
  MixtureParams m;
  m.logits = nn::Vector::Zero(1);
  m.means = nn::Matrix::Zero(2, 1);
  m.sigmas = nn::Matrix(2, 1);
  m.sigmas << 0.5, 2.0;
  Rng rng(8);
  nn::Vector sum = nn::Vector::Zero(2), sq = nn::Vector::Zero(2);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const nn::Vector z = sample_next_latent(m, 1.0, rng).values;
    sum += z;
    sq += z.cwiseProduct(z);
  }
  const nn::Vector var = sq / n - (sum / n).cwiseProduct(sum / n);
  EXPECT_NEAR(var(0), 0.25, 0.05 * 0.25);
  EXPECT_NEAR(var(1), 4.0, 0.05 * 4.0);
}

TEST(Dynamics, ArgmaxIgnoresLogitScaleAndTies) {
  MixtureParams m;
  m.logits = nn::Vector(3);
  m.logits << 0.5, 2.0, 2.0;
  m.means = nn::Matrix(1, 3);
  m.means << 1.0, 2.0, 3.0;
  m.sigmas = nn::Matrix::Ones(1, 3);
  Rng rng(1);
  EXPECT_EQ(sample_next_latent(m, 0.0, rng).values(0), 2.0);
  m.logits *= 7.5;
  EXPECT_EQ(sample_next_latent(m, 0.0, rng).values(0), 2.0);
}

TEST(Dynamics, RolloutOfOneStepMatchesStepAndSample) {
  GlobalDynamics d(small_dynamics(3, 2), 9);
  Rng rng(9);
  const LatentVector start(gaussian(rng, 3));
  const nn::Vector cond = gaussian(rng, 4);
  Rng r1(5), r2(5);
  const auto roll = rollout_latents(d, DynamicsState::zero(8), start,
                                    [&](int) { return cond; }, 1, 0.5, r1);
  const auto out = d.step(DynamicsState::zero(8), start, cond);
  const auto z = sample_next_latent(out.mixture, 0.5, r2);
  ASSERT_EQ(roll.size(), 1u);
  EXPECT_EQ(roll[0].h, out.state.h);
  EXPECT_EQ(roll[0].latent.values, z.values);
}

TEST(Dynamics, NoiseConditioningIgnoresPositions) {
  WorldState a, b;
  a.positions = {0.1, 0.2, 0.0, 0.0};
  a.mask = {true, false};
  a.slot_agents = {1, -1};
  a.frame = 3;
  b = a;
  b.positions = {0.9, 0.7, 0.4, 0.4};
  b.mask = {true, true};
  EXPECT_EQ(conditioning_for(ConditioningMode::kNoise, a, 11),
            conditioning_for(ConditioningMode::kNoise, b, 11));
  EXPECT_EQ(conditioning_for(ConditioningMode::kZeros, b, 11), nn::Vector::Zero(4));
}

TEST(Bivariate, ClosedFormNll) {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(bivariate_nll({0.4, 0.6, 1.0, 1.0, 0.0}, {0.4, 0.6}), log2pi, 1e-12);
  EXPECT_NEAR(bivariate_nll({0.4, 0.6, 1.0, 1.0, 0.5}, {0.4, 0.6}),
              log2pi + 0.5 * std::log(0.75), 1e-12);
  EXPECT_NEAR(bivariate_nll({0.4, 0.6, 1.0, 1.0, 0.5}, {0.4, 0.6}), 1.694036, 1e-6);
}

TEST(Bivariate, SwapSymmetry) {
  const BivariateGaussian g{0.2, 0.7, 0.3, 0.05, -0.4};
  const BivariateGaussian s{0.7, 0.2, 0.05, 0.3, -0.4};
  EXPECT_NEAR(bivariate_nll(g, {0.25, 0.66}), bivariate_nll(s, {0.66, 0.25}), 1e-12);
}

TEST(Bivariate, SamplingMoments) {
  Rng rng(12);
  auto moments = [&](double rho) {
    const BivariateGaussian g{0.0, 0.0, 1.0, 2.0, rho};
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const Point p = sample_position(g, rng);
      sx += p.x;
      sy += p.y;
      sxx += p.x * p.x;
      syy += p.y * p.y;
      sxy += p.x * p.y;
    }
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double vx = sxx / n - (sx / n) * (sx / n);
    const double vy = syy / n - (sy / n) * (sy / n);
    return std::pair{cov / std::sqrt(vx * vy), cov / (1.0 * 2.0)};
  };
  EXPECT_NEAR(moments(0.8).first, 0.8, 0.03);
  EXPECT_NEAR(moments(0.0).second, 0.0, 0.02);
  const BivariateGaussian tight{0.3, 0.4, 1e-6, 1e-6, 0.0};
  const Point p = sample_position(tight, rng);
  EXPECT_NEAR(p.x, 0.3, 1e-4);
  EXPECT_NEAR(p.y, 0.4, 1e-4);
}

PredictorConfig small_predictor(InputConfig inputs) {
  PredictorConfig c;
  c.inputs = inputs;
  c.latent_dim = 3;
  c.summary_dim = 4;
  c.hidden = 8;
  return c;
}

TEST(Predictor, OutputsValidUnderRandomParameters) {
  Rng rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int draw = 0; draw < 1000; ++draw) {
    LocalPredictor b(small_predictor(InputConfig::kSLH), 5000 + draw);
    auto ps = b.parameters();
    std::normal_distribution<double> n(0.0, 2.0);
    for (auto& p : ps) p = n(rng);
    const auto out = b.predict_step(PredictorState::zero(8), {u(rng), u(rng)},
                                    {gaussian(rng, 3), gaussian(rng, 4)});
    EXPECT_NO_THROW(out.gaussian.validate());
    EXPECT_LE(std::abs(out.gaussian.rho), kRhoLimit);
    EXPECT_GE(out.gaussian.sigma_x, 1e-6);
  }
}

TEST(Predictor, PositionsOnlyIgnoresContext) {
  LocalPredictor b(small_predictor(InputConfig::kS), 14);
  Rng rng(14);
  const auto a = b.predict_step(PredictorState::zero(8), {0.3, 0.3},
                                {gaussian(rng, 3), gaussian(rng, 4)});
  const auto c = b.predict_step(PredictorState::zero(8), {0.3, 0.3},
                                {gaussian(rng, 3), gaussian(rng, 4)});
  EXPECT_EQ(a.gaussian.mu_x, c.gaussian.mu_x);
  EXPECT_EQ(a.gaussian.rho, c.gaussian.rho);
  EXPECT_EQ(a.state.h, c.state.h);
}

TrajectoryWindow line_window(int agent, int first, int len, double x0, double vx) {
  TrajectoryWindow w;
  w.agent_id = agent;
  w.first_frame = first;
  w.last_frame = first + len - 1;
  for (int i = 0; i < len; ++i) {
    AgentState s{agent, first + i, x0 + vx * i, 0.5 + 0.3 * vx * i};
    (i < len / 2 ? w.obs : w.pred).push_back(s);
  }
  return w;
}

TEST(Predictor, BatchLossEqualsSumOfSingles) {
  LocalPredictor b(small_predictor(InputConfig::kSLH), 15);
  Rng rng(15);
  std::vector<TrajectoryWindow> windows;
  std::vector<WindowContext> contexts;
  for (int i = 0; i < 4; ++i) {
    windows.push_back(line_window(i, i, 5 + (i % 2), 0.1 * i, 0.01));
    WindowContext c{windows.back().first_frame, {}};
    for (int t = 0; t < 6; ++t) c.frames.push_back({gaussian(rng, 3), gaussian(rng, 4)});
    contexts.push_back(c);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    sum += b.b_loss(std::span(&windows[i], 1), std::span(&contexts[i], 1));
  }
  EXPECT_NEAR(b.b_loss(windows, contexts), sum, 1e-9);
}

TEST(Predictor, MisalignedContextThrows) {
  LocalPredictor b(small_predictor(InputConfig::kSL), 16);
  std::vector<TrajectoryWindow> windows{line_window(1, 3, 6, 0.2, 0.01)};
  std::vector<WindowContext> contexts{{2, {}}};
  try {
    b.b_loss(windows, contexts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAlignment);
  }
}

TEST(Predictor, CapacityIsSmallBesideRAndD) {
  PredictorConfig pc;
  DynamicsConfig dc;
  dc.n_max = 8;
  const LocalPredictor b(pc, 1);
  const GlobalDynamics d(dc, 1);
  const SpatialEncoder r(EncoderConfig{}, 1);
  EXPECT_LT(b.parameter_count(), 0.05 * (r.parameter_count() + d.parameter_count()));
}

TEST(Predictor, RolloutMeanModeIsDeterministic) {
  LocalPredictor b(small_predictor(InputConfig::kS), 17);
  const Trajectory obs{{0.1, 0.1}, {0.12, 0.11}, {0.14, 0.12}};
  Rng r1(1), r2(2);
  const auto a = rollout_agent(b, obs, nullptr, 5, PredictionMode::kMean, r1);
  const auto c = rollout_agent(b, obs, nullptr, 5, PredictionMode::kMean, r2);
  ASSERT_EQ(a.positions.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(a.positions[i].x, c.positions[i].x);
    EXPECT_EQ(a.positions[i].x, a.gaussians[i].mu_x);
  }
}

TEST(FiniteDifference, QuadraticIsExact) {
  const LossFunction quad = [](std::span<const double> p, std::vector<double>* g) {
    double s = 0.0;
    if (g) g->assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      s += p[i] * p[i];
      if (g) (*g)[i] = 2.0 * p[i];
    }
    return s;
  };
  std::vector<double> params{0.3, -1.2, 2.5, 0.01, 4.0};
  EXPECT_LT(finite_difference_check(quad, params, 5, 1e-4, 1), 1e-8);
}

}  // namespace
}  // namespace rdb
