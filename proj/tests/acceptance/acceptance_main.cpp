// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. `--only 1,3` restricts the run.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "rdb/checkpoint.hpp"
#include "rdb/commands.hpp"
#include "rdb/evaluation.hpp"
#include "rdb/synthetic.hpp"
#include "rdb/training.hpp"
#include "rdb/transfer.hpp"

namespace fs = std::filesystem;
using namespace rdb;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path work_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "rdb-acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

// Independent oracles --------------------------------------------------------

double gaussian_nll_oracle(double dx, double dy, double sx, double sy, double rho) {
  const double zx = dx / sx;
  const double zy = dy / sy;
  const double q = (zx * zx - 2.0 * rho * zx * zy + zy * zy) / (1.0 - rho * rho);
  const double density =
      std::exp(-0.5 * q) / (2.0 * std::numbers::pi * sx * sy * std::sqrt(1.0 - rho * rho));
  return -std::log(density);
}

double mixture_nll_oracle(const MixtureParams& mix, const nn::Vector& x) {
  double z = 0.0;
  for (int k = 0; k < mix.components(); ++k) z += std::exp(mix.logits(k));
  double density = 0.0;
  for (int k = 0; k < mix.components(); ++k) {
    double p = std::exp(mix.logits(k)) / z;
    for (int d = 0; d < mix.dim(); ++d) {
      const double s = mix.sigmas(d, k);
      const double u = (x(d) - mix.means(d, k)) / s;
      p *= std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * s);
    }
    density += p;
  }
  return -std::log(density);
}

nn::Vector random_vector(Rng& rng, int n, double scale = 1.0) {
  nn::Vector v(n);
  std::normal_distribution<double> normal(0.0, scale);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

ImageFrame random_frame(Rng& rng) {
  ImageFrame f;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& p : f.pixels) p = static_cast<float>(u(rng));
  return f;
}

TrajectoryWindow random_window(Rng& rng, int agent, int first, int obs, int pred) {
  TrajectoryWindow w;
  w.agent_id = agent;
  w.first_frame = first;
  w.last_frame = first + obs + pred - 1;
  std::uniform_real_distribution<double> u(0.2, 0.8);
  double x = u(rng), y = u(rng);
  for (int i = 0; i < obs + pred; ++i) {
    x += 0.02 * (u(rng) - 0.5);
    y += 0.02 * (u(rng) - 0.5);
    AgentState s{agent, first + i, x, y};
    (i < obs ? w.obs : w.pred).push_back(s);
  }
  return w;
}

// Criteria -------------------------------------------------------------------

Outcome numeric_oracles() {
  const auto t0 = Clock::now();
  Rng rng(11);
  std::vector<nn::Vector> a;
  for (int i = 0; i < 16; ++i) a.push_back(random_vector(rng, 8));
  MmdConfig mmd;
  const double self = mmd_squared(a, a, mmd);

  const double log2pi = std::log(2.0 * std::numbers::pi);
  const double nll0 = bivariate_nll({0.3, 0.7, 1.0, 1.0, 0.0}, {0.3, 0.7});
  const double nll5 = bivariate_nll({0.3, 0.7, 1.0, 1.0, 0.5}, {0.3, 0.7});
  const double want5 = log2pi + 0.5 * std::log(0.75);

  // One transition of a small D: d_loss against the direct density of the
  // mixture that step() reports for the same input.
  DynamicsConfig dc;
  dc.latent_dim = 3;
  dc.components = 4;
  dc.n_max = 2;
  dc.hidden = 8;
  double worst_lse = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    GlobalDynamics d(dc, 100 + trial);
    std::vector<LatentVector> lat{LatentVector(random_vector(rng, 3)),
                                  LatentVector(random_vector(rng, 3))};
    std::vector<nn::Vector> cond{random_vector(rng, 4, 0.3)};
    const auto out = d.step(DynamicsState::zero(dc.hidden), lat[0], cond[0]);
    const double direct = mixture_nll_oracle(out.mixture, lat[1].values);
    const double lse = d.d_loss(lat, cond);
    worst_lse = std::max(worst_lse, std::abs(direct - lse));
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = self == 0.0 && std::abs(nll0 - log2pi) <= 1e-9 && std::abs(nll5 - want5) <= 1e-9 &&
           worst_lse <= 1e-9 && secs < 1.0;
  std::ostringstream s;
  s << "mmd(A,A)=" << self << " nll_err=" << std::abs(nll0 - log2pi) << "/"
    << std::abs(nll5 - want5) << " lse_err=" << worst_lse << " time=" << fmt("%.3fs", secs);
  o.detail = s.str();
  return o;
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  constexpr double kEps = 1e-4;
  constexpr int kSlice = 10;
  Rng rng(21);

  EncoderConfig ec;
  ec.channels = {4, 8};
  ec.latent_dim = 4;
  SpatialEncoder enc(ec, 5);
  std::vector<ImageFrame> frames;
  for (int i = 0; i < 3; ++i) frames.push_back(random_frame(rng));
  std::vector<const ImageFrame*> batch;
  for (const auto& f : frames) batch.push_back(&f);
  MmdConfig mmd;
  const double r_err = finite_difference_check(
      [&](std::span<const double> p, std::vector<double>* g) {
        SpatialEncoder m(ec, std::vector<double>(p.begin(), p.end()));
        return m.r_loss(batch, mmd, 77, g);
      },
      std::vector<double>(enc.parameters().begin(), enc.parameters().end()), kSlice, kEps, 1);

  DynamicsConfig dc;
  dc.latent_dim = 3;
  dc.n_max = 2;
  dc.hidden = 6;
  dc.components = 3;
  GlobalDynamics dyn(dc, 6);
  std::vector<LatentVector> lat;
  std::vector<nn::Vector> cond;
  for (int t = 0; t < 5; ++t) lat.emplace_back(random_vector(rng, 3));
  for (int t = 0; t < 4; ++t) cond.push_back(random_vector(rng, 4, 0.3));
  const double d_err = finite_difference_check(
      [&](std::span<const double> p, std::vector<double>* g) {
        GlobalDynamics m(dc, std::vector<double>(p.begin(), p.end()));
        return m.d_loss(lat, cond, g);
      },
      std::vector<double>(dyn.parameters().begin(), dyn.parameters().end()), kSlice, kEps, 2);

  PredictorConfig pc;
  pc.inputs = InputConfig::kSLH;
  pc.latent_dim = 3;
  pc.summary_dim = 5;
  pc.hidden = 6;
  LocalPredictor b(pc, 7);
  std::vector<TrajectoryWindow> windows;
  std::vector<WindowContext> contexts;
  for (int i = 0; i < 3; ++i) {
    windows.push_back(random_window(rng, i + 1, 2 * i, 3, 3));
    WindowContext ctx;
    ctx.first_frame = windows.back().first_frame;
    for (int t = 0; t < 6; ++t) {
      ctx.frames.push_back({random_vector(rng, 3), random_vector(rng, 5, 0.5)});
    }
    contexts.push_back(ctx);
  }
  const double b_err = finite_difference_check(
      [&](std::span<const double> p, std::vector<double>* g) {
        LocalPredictor m(pc, std::vector<double>(p.begin(), p.end()));
        return m.b_loss(windows, contexts, g);
      },
      std::vector<double>(b.parameters().begin(), b.parameters().end()), kSlice, kEps, 3);

  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = r_err < 1e-3 && d_err < 1e-3 && b_err < 1e-3 && secs < 60.0;
  std::ostringstream s;
  s << "max rel err r=" << r_err << " d=" << d_err << " b=" << b_err
    << " time=" << fmt("%.2fs", secs);
  o.detail = s.str();
  return o;
}

Outcome temperature() {
  Rng init(31);
  MixtureParams mix;
  const int k = 4, l = 3;
  mix.logits = random_vector(init, k);
  mix.means = nn::Matrix(l, k);
  mix.sigmas = nn::Matrix(l, k);
  for (int c = 0; c < k; ++c) {
    mix.means.col(c) = random_vector(init, l, 2.0);
    for (int d = 0; d < l; ++d) mix.sigmas(d, c) = 0.2 + 0.5 * (c + d) / (k + l);
  }
  std::vector<double> variances;
  for (double tau : {0.1, 0.5, 1.0}) {
    Rng rng(derive_seed(32, {static_cast<std::uint64_t>(tau * 10)}));
    nn::Vector sum = nn::Vector::Zero(l), sq = nn::Vector::Zero(l);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const nn::Vector z = sample_next_latent(mix, tau, rng).values;
      sum += z;
      sq += z.cwiseProduct(z);
    }
    const nn::Vector mean = sum / n;
    variances.push_back((sq / n - mean.cwiseProduct(mean)).sum());
  }
  Eigen::Index best = 0;
  mix.logits.maxCoeff(&best);
  Rng rng(33);
  const nn::Vector z0 = sample_next_latent(mix, 0.0, rng).values;
  const bool exact = z0 == nn::Vector(mix.means.col(best));
  Outcome o;
  o.pass = variances[0] <= variances[1] && variances[1] <= variances[2] && exact;
  std::ostringstream s;
  s << "total variance tau=0.1/0.5/1: " << variances[0] << "/" << variances[1] << "/"
    << variances[2] << " argmax_mean_exact=" << (exact ? "yes" : "no");
  o.detail = s.str();
  return o;
}

Outcome metrics() {
  // Hand cases: RMSE over steps, final-step Euclidean error.
  const Trajectory truth{{0.0, 0.0}, {0.0, 0.0}};
  const Trajectory pred{{0.0, 0.0}, {3.0, 4.0}};
  bool hand = ade(pred, truth) == std::sqrt(12.5) && fde(pred, truth) == 5.0;
  hand = hand && ade(truth, truth) == 0.0 && fde(truth, truth) == 0.0;
  const Trajectory p3{{1.0, 0.0}, {0.0, 2.0}, {0.0, 0.0}};
  const Trajectory t3{{0.0, 0.0}, {0.0, 0.0}, {0.0, 2.0}};
  hand = hand && ade(p3, t3) == std::sqrt(3.0) && fde(p3, t3) == 2.0;

  Rng rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> len(1, 20);
  double worst_shift = 0.0;
  bool single = true;
  for (int i = 0; i < 1000; ++i) {
    const int n = len(rng);
    Trajectory a(n), b(n);
    for (int j = 0; j < n; ++j) {
      a[j] = {u(rng), u(rng)};
      b[j] = {u(rng), u(rng)};
    }
    const Point shift{u(rng) * 5.0, u(rng) * 5.0};
    Trajectory as = a, bs = b;
    for (int j = 0; j < n; ++j) {
      as[j] = {a[j].x + shift.x, a[j].y + shift.y};
      bs[j] = {b[j].x + shift.x, b[j].y + shift.y};
    }
    worst_shift = std::max({worst_shift, std::abs(ade(a, b) - ade(as, bs)),
                            std::abs(fde(a, b) - fde(as, bs))});
    const Trajectory a1{a[0]}, b1{b[0]};
    single = single && ade(a1, b1) == fde(a1, b1);
  }
  Outcome o;
  o.pass = hand && single && worst_shift <= 1e-12;
  std::ostringstream s;
  s << "hand_cases=" << (hand ? "exact" : "mismatch") << " translation_err=" << worst_shift
    << " pred_len1_equal=" << (single ? "yes" : "no");
  o.detail = s.str();
  return o;
}

// Gear task and crowd suite -----------------------------------------------------

std::vector<Scene> gear_suite(const fs::path& dir) {
  std::vector<Scene> scenes;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    GearTaskConfig g;
    g.name = "gear" + std::to_string(i);
    g.seed = seeds[i];
    // Many short episodes: every arrangement shows one full color cycle.
    g.episodes = 16;
    g.laps = 1;
    g.direction = i + 1 < seeds.size() ? Direction::kClockwise : Direction::kAnticlockwise;
    const fs::path d = dir / ("env" + std::to_string(i));
    if (!fs::exists(d / "manifest.json")) write_generated_scene(d, gen_gear_task(g));
    scenes.push_back(load_scene(d / "manifest.json"));
  }
  return scenes;
}

std::vector<Scene> crowd_suite(const fs::path& dir) {
  std::vector<Scene> scenes;
  const std::vector<CrowdLayout> layouts{CrowdLayout::kCorridor, CrowdLayout::kVertical,
                                         CrowdLayout::kPillar, CrowdLayout::kChokePoint,
                                         CrowdLayout::kCrossing};
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    CrowdSceneConfig c;
    c.name = "crowd" + std::to_string(i);
    c.layout = layouts[i];
    c.seed = 100 + i;
    c.frames = 240;
    const fs::path d = dir / ("env" + std::to_string(i));
    if (!fs::exists(d / "manifest.json")) write_generated_scene(d, gen_crowd_scene(c));
    scenes.push_back(load_scene(d / "manifest.json"));
  }
  return scenes;
}

// Desk-scale model sizes shared by criteria 5 and 6.
PipelineConfig desk_pipeline() {
  PipelineConfig p;
  p.encoder.channels = {8, 16, 32, 64};
  p.encoder.latent_dim = 32;
  p.dynamics.hidden = 128;
  p.dynamics.components = 5;
  p.predictor.hidden = 64;
  p.train_r.epochs = 15;
  p.train_r.batch_size = 16;
  p.train_r.adam.learning_rate = 1e-3;
  p.train_d.epochs = 30;
  p.train_d.batch_size = 16;
  p.train_d.sequence_length = 32;
  p.train_d.sequence_stride = 4;
  p.train_d.adam.learning_rate = 1e-3;
  p.train_b.epochs = 60;
  p.train_b.batch_frames = 16;
  p.train_len = 24;
  p.seed = 5;
  return p;
}

EvalOptions gear_eval() {
  EvalOptions e;
  e.obs_len = 12;
  e.pred_len = 32;
  e.stride = 2;
  e.mode = PredictionMode::kMean;
  e.seed = 9;
  return e;
}

Outcome gear_ablation() {
  const auto t0 = Clock::now();
  const auto scenes = gear_suite(work_root() / "gears");
  PipelineConfig p = desk_pipeline();
  p.holdout = 4;
  p.baseline_s = true;
  p.predictor.inputs = InputConfig::kSLH;
  const fs::path run = work_root() / "gear-run";
  train_pipeline(scenes, p, Stage::kAll, run);

  const EvalOptions e = gear_eval();
  std::vector<const Scene*> test{&scenes[4]};
  auto full = std::make_shared<ModelBundle>();
  full->encoder = load_encoder(read_checkpoint(run / "r.ckpt"));
  full->dynamics = load_dynamics(read_checkpoint(run / "d.ckpt"));
  full->predictor = load_predictor(read_checkpoint(run / "b.ckpt"));
  RdbPredictor slh(full, 0.0, ContextMode::kClosedLoop);
  const MetricReport r_slh = evaluate(slh, test, e, "slh");
  auto pos = std::make_shared<ModelBundle>();
  pos->predictor = load_predictor(read_checkpoint(run / "b_s.ckpt"));
  RdbPredictor s(pos, 0.0, ContextMode::kClosedLoop);
  const MetricReport r_s = evaluate(s, test, e, "s");
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = r_slh.ade <= 0.8 * r_s.ade && secs < 45 * 60;
  std::ostringstream st;
  st << "ADE B(slh)=" << fmt("%.4f", r_slh.ade) << " B(s)=" << fmt("%.4f", r_s.ade)
     << " ratio=" << fmt("%.3f", r_slh.ade / r_s.ade) << " (FDE " << fmt("%.4f", r_slh.fde)
     << "/" << fmt("%.4f", r_s.fde) << ") windows=" << r_slh.trajectories
     << " time=" << fmt("%.0fs", secs);
  o.detail = st.str();
  return o;
}

Outcome transfer_ordering() {
  const auto t0 = Clock::now();
  const auto crowd = crowd_suite(work_root() / "crowd");
  const fs::path source = work_root() / "crowd-run";
  PipelineConfig src = desk_pipeline();
  src.holdout = -1;
  train_pipeline(crowd, src, Stage::kAll, source);

  const auto gears = gear_suite(work_root() / "gears");
  TransferConfig t;
  t.source_run = source;
  t.target = desk_pipeline();
  t.target.holdout = 4;
  t.eval = gear_eval();
  t.tau = 0.0;
  t.mode = TransferMode::kRandom;
  const TransferResult random = run_transfer(t, gears);
  t.mode = TransferMode::kUnsupervisedD;
  const TransferResult unsup = run_transfer(t, gears);
  const std::string hash_end = file_sha256(source / "b.ckpt");
  const double secs = seconds_since(t0);
  const bool unchanged = !unsup.b_hash_before.empty() &&
                         unsup.b_hash_before == unsup.b_hash_after &&
                         unsup.b_hash_before == hash_end;
  Outcome o;
  o.pass = unsup.report.ade <= random.report.ade / 3.0 && unchanged && secs < 45 * 60;
  std::ostringstream st;
  st << "ADE unsup-rd=" << fmt("%.4f", unsup.report.ade)
     << " random=" << fmt("%.4f", random.report.ade)
     << " ratio=" << fmt("%.3f", unsup.report.ade / random.report.ade)
     << " b_hash_unchanged=" << (unchanged ? "yes" : "no") << " time=" << fmt("%.0fs", secs);
  o.detail = st.str();
  return o;
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json") {
      out.push_back(fs::relative(e.path(), dir));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

nlohmann::json merged(nlohmann::json base, const nlohmann::json& extra) {
  base.update(extra);
  return base;
}

Outcome determinism() {
  const fs::path root = work_root() / "replay";
  using nlohmann::json;
  const json small{{"encoder", {{"channels", {4, 8, 16}}, {"latent_dim", 8}}},
                   {"dynamics", {{"hidden", 16}, {"components", 2}}},
                   {"predictor", {{"hidden", 16}}},
                   {"train_r", {{"epochs", 1}, {"batch_size", 8}}},
                   {"train_d", {{"epochs", 1}}},
                   {"train_b", {{"epochs", 1}}}};
  struct Run {
    std::string command;
    json config;
  };
  const std::string data = (root / "data").string();
  std::vector<Run> runs{
      {"synth", {{"task", "crowd-suite"}, {"frames", 60}, {"image_size", 64}, {"preview", true},
                 {"out", data}}},
      {"ingest", {{"annotations", (root / "data/env0/annotations.csv").string()},
                  {"frames_dir", (root / "data/env0/frames").string()},
                  {"width_px", 64}, {"height_px", 64}, {"n_max", 8},
                  {"out", (root / "ingested").string()}}},
      {"train", merged(small, json{{"data", data}, {"holdout", 4}, {"baseline_s", true},
                                        {"out", (root / "train").string()}})},
      {"eval", {{"run", (root / "train").string()}, {"data", data}, {"holdout", 4},
                {"mode", "sample"}, {"best_of", 3}, {"plots", 2},
                {"out", (root / "eval").string()}}},
      {"plot", {{"run", (root / "train").string()}, {"data", data}, {"holdout", 4},
                {"out", (root / "plot").string()}}},
      {"transfer", merged(small, json{{"source", (root / "train").string()},
                                           {"target", data}, {"holdout", 4}, {"mode", "all"},
                                           {"out", (root / "transfer").string()}})},
  };
  std::vector<std::string> diffs;
  std::size_t compared = 0;
  for (const auto& r : runs) {
    const fs::path out = r.config.at("out").get<std::string>();
    execute(r.command, r.config);
    const fs::path again = out.string() + "-replay";
    replay(out / "run_manifest.json", again);
    const auto a = files_under(out);
    const auto b = files_under(again);
    if (a != b) diffs.push_back(r.command + ": file sets differ");
    for (const auto& f : a) {
      ++compared;
      if (!fs::exists(again / f) || read_file_bytes(out / f) != read_file_bytes(again / f)) {
        diffs.push_back(r.command + ":" + f.generic_string());
      }
    }
  }
  Outcome o;
  o.pass = diffs.empty() && compared > 0;
  std::ostringstream s;
  s << "commands=" << runs.size() << " files compared=" << compared << " differing="
    << diffs.size();
  for (std::size_t i = 0; i < diffs.size() && i < 5; ++i) s << " " << diffs[i];
  o.detail = s.str();
  return o;
}

Outcome reconstruction_smoke() {
  const auto t0 = Clock::now();
  GearTaskConfig g;
  g.seed = 8;
  g.episodes = 1;
  const GeneratedScene scene = gen_gear_task(g);
  const fs::path dir = work_root() / "recon";
  write_generated_scene(dir, scene);
  const Scene loaded = load_scene(dir / "manifest.json");
  std::vector<const ImageFrame*> frames;
  for (std::size_t i = 0; i < 4; ++i) {
    frames.push_back(&loaded.frames[i * loaded.frames.size() / 4]);
  }
  EncoderConfig ec;
  ec.channels = {16, 32, 64, 128};
  ec.latent_dim = 16;
  MmdConfig mmd;
  TrainConfig t;
  t.batch_size = 4;
  t.epochs = 2000;
  t.max_steps = 2000;
  t.adam.learning_rate = 1e-3;
  t.seed = 3;
  const EncoderTraining trained = train_encoder(frames, ec, mmd, t);
  double mse = 0.0;
  for (const auto* f : frames) mse += trained.model.reconstruction_error(*f);
  mse /= static_cast<double>(frames.size());
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = mse < 0.01 && trained.history.size() <= 2000 && secs < 300.0;
  std::ostringstream s;
  s << "per-pixel MSE=" << fmt("%.5f", mse) << " steps=" << trained.history.size()
    << " time=" << fmt("%.1fs", secs);
  o.detail = s.str();
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"numeric oracles", numeric_oracles},
      {"gradient checks", gradient_checks},
      {"temperature sampling", temperature},
      {"metric correctness", metrics},
      {"gear-task ablation B(slh) vs B(s)", gear_ablation},
      {"transfer with frozen crowd B", transfer_ordering},
      {"replay determinism", determinism},
      {"encoder reconstruction smoke", reconstruction_smoke},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
