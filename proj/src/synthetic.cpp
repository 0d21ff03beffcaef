#include "rdb/synthetic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rdb/error.hpp"
#include "rdb/random.hpp"

namespace rdb {

bool Wall::contains(double x, double y, double margin) const {
  return x >= x0 - margin && x <= x1 + margin && y >= y0 - margin && y <= y1 + margin;
}

std::string to_string(CrowdLayout layout) {
  switch (layout) {
    case CrowdLayout::kCorridor: return "corridor";
    case CrowdLayout::kVertical: return "vertical";
    case CrowdLayout::kPillar: return "pillar";
    case CrowdLayout::kChokePoint: return "choke";
    case CrowdLayout::kCrossing: return "crossing";
  }
  return "corridor";
}

CrowdLayout parse_crowd_layout(const std::string& text) {
  if (text == "corridor") return CrowdLayout::kCorridor;
  if (text == "vertical") return CrowdLayout::kVertical;
  if (text == "pillar") return CrowdLayout::kPillar;
  if (text == "choke") return CrowdLayout::kChokePoint;
  if (text == "crossing") return CrowdLayout::kCrossing;
  fail(ErrorCode::kConfig, "unknown crowd layout '" + text +
                               "' (expected corridor, vertical, pillar, choke or crossing)");
}

std::string to_string(Direction direction) {
  return direction == Direction::kClockwise ? "clockwise" : "anticlockwise";
}

Direction parse_direction(const std::string& text) {
  if (text == "clockwise") return Direction::kClockwise;
  if (text == "anticlockwise") return Direction::kAnticlockwise;
  fail(ErrorCode::kConfig, "invalid direction '" + text +
                               "' (expected clockwise or anticlockwise)");
}

void CrowdSceneConfig::validate() const {
  require(min_agents >= 0 && max_agents >= min_agents, ErrorCode::kConfig,
          "crowd agent range must satisfy 0 <= min_agents <= max_agents");
  require(speed_mean > 0.0 && speed_std >= 0.0, ErrorCode::kConfig,
          "crowd speeds must be positive");
  require(frames >= 1, ErrorCode::kConfig, "crowd frames must be >= 1");
  require(image_size >= 16, ErrorCode::kConfig, "crowd image_size must be >= 16");
  require(n_max >= 1, ErrorCode::kConfig, "crowd n_max must be >= 1");
  require(spawn_rate >= 0.0 && spawn_rate <= 1.0, ErrorCode::kConfig,
          "crowd spawn_rate must lie in [0, 1]");
  require(frame_period > 0.0, ErrorCode::kConfig, "frame_period must be > 0");
}

void GearTaskConfig::validate() const {
  require(landmarks >= 2, ErrorCode::kConfig, "gear task needs >= 2 landmarks");
  require(colors.empty() || static_cast<int>(colors.size()) == landmarks,
          ErrorCode::kConfig, "gear task needs one color per landmark");
  require(speed > 0.0, ErrorCode::kConfig, "effector speed must be > 0");
  require(hover_frames >= 0 && laps >= 1 && episodes >= 1, ErrorCode::kConfig,
          "gear task needs hover_frames >= 0, laps >= 1, episodes >= 1");
  require(landmark_radius > 0.0 && effector_radius > 0.0, ErrorCode::kConfig,
          "gear radii must be > 0");
  require(image_size >= 16, ErrorCode::kConfig, "gear image_size must be >= 16");
  require(frame_period > 0.0, ErrorCode::kConfig, "frame_period must be > 0");
  auto cs = resolved_colors();
  for (std::size_t i = 0; i < cs.size(); ++i) {
    for (std::size_t j = i + 1; j < cs.size(); ++j) {
      require(cs[i] != cs[j], ErrorCode::kConfig, "gear landmark colors must be distinct");
    }
  }
}

std::vector<Color> GearTaskConfig::resolved_colors() const {
  if (!colors.empty()) return colors;
  static const std::vector<Color> palette = {
      {220, 40, 40}, {40, 180, 60}, {50, 90, 230}, {235, 200, 30},
      {190, 60, 200}, {30, 200, 210}, {240, 130, 30}, {140, 90, 40}};
  std::vector<Color> out;
  for (int i = 0; i < landmarks; ++i) {
    Color c = palette[i % palette.size()];
    if (i >= static_cast<int>(palette.size())) c[2] = static_cast<std::uint8_t>((c[2] + 37 * i) % 256);
    out.push_back(c);
  }
  return out;
}

// --- Rendering helpers -----------------------------------------------------

namespace {

void fill_rect(RawImage& img, const Wall& w, Color c) {
  const int s = img.width;
  const int x0 = std::max(0, static_cast<int>(std::floor(w.x0 * s)));
  const int x1 = std::min(s, static_cast<int>(std::ceil(w.x1 * s)));
  const int y0 = std::max(0, static_cast<int>(std::floor(w.y0 * s)));
  const int y1 = std::min(s, static_cast<int>(std::ceil(w.y1 * s)));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) std::copy(c.begin(), c.end(), img.pixel(y, x));
  }
}

// Pixel (px, py) is filled when its centre lies within radius of the disc
// centre; everything in source-pixel units.
void fill_disc(RawImage& img, double cx, double cy, double radius, Color c) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
  const double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      if (dx * dx + dy * dy <= r2) std::copy(c.begin(), c.end(), img.pixel(y, x));
    }
  }
}

Color agent_color(int agent_id) {
  const std::uint64_t h = mix_seed(static_cast<std::uint64_t>(agent_id));
  return {static_cast<std::uint8_t>(120 + (h & 0x7f)),
          static_cast<std::uint8_t>(40 + ((h >> 8) & 0x7f)),
          static_cast<std::uint8_t>(40 + ((h >> 16) & 0x7f))};
}

}  // namespace

// --- Crowd scenes ----------------------------------------------------------

std::vector<Wall> layout_walls(CrowdLayout layout) {
  switch (layout) {
    case CrowdLayout::kCorridor:
      return {{0.0, 0.0, 1.0, 0.25}, {0.0, 0.75, 1.0, 1.0}};
    case CrowdLayout::kVertical:
      return {{0.0, 0.0, 0.25, 1.0}, {0.75, 0.0, 1.0, 1.0}};
    case CrowdLayout::kPillar:
      return {{0.0, 0.0, 1.0, 0.12}, {0.0, 0.88, 1.0, 1.0}, {0.42, 0.4, 0.58, 0.6}};
    case CrowdLayout::kChokePoint:
      return {{0.0, 0.0, 1.0, 0.15}, {0.0, 0.85, 1.0, 1.0},
              {0.47, 0.15, 0.53, 0.42}, {0.47, 0.58, 0.53, 0.85}};
    case CrowdLayout::kCrossing:
      return {{0.0, 0.0, 0.32, 0.32}, {0.68, 0.0, 1.0, 0.32},
              {0.0, 0.68, 0.32, 1.0}, {0.68, 0.68, 1.0, 1.0}};
  }
  return {};
}

namespace {

struct Walker {
  int id = 0;
  double x = 0.0, y = 0.0;
  double speed = 0.0;
  std::vector<Point> waypoints;
  int age = 0;
};

bool blocked(const std::vector<Wall>& walls, double x, double y, double margin) {
  if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0) return false;
  for (const auto& w : walls) {
    if (w.contains(x, y, margin)) return true;
  }
  return false;
}

// Entry point and route for a new walker.
bool plan_walker(CrowdLayout layout, const std::vector<Wall>& walls, Rng& rng, Walker& w) {
  const double u = uniform01(rng);
  const bool forward = uniform01(rng) < 0.5;
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  double sx = 0, sy = 0;
  std::vector<Point> route;
  switch (layout) {
    case CrowdLayout::kCorridor: {
      sy = lerp(0.33, 0.67, u);
      sx = forward ? 0.01 : 0.99;
      route = {{forward ? 1.02 : -0.02, sy}};
      break;
    }
    case CrowdLayout::kVertical: {
      sx = lerp(0.33, 0.67, u);
      sy = forward ? 0.01 : 0.99;
      route = {{sx, forward ? 1.02 : -0.02}};
      break;
    }
    case CrowdLayout::kPillar: {
      sy = lerp(0.2, 0.8, u);
      sx = forward ? 0.01 : 0.99;
      const double gy = lerp(0.2, 0.8, uniform01(rng));
      route = {{forward ? 1.02 : -0.02, gy}};
      break;
    }
    case CrowdLayout::kChokePoint: {
      sy = lerp(0.22, 0.78, u);
      sx = forward ? 0.01 : 0.99;
      const double gy = lerp(0.22, 0.78, uniform01(rng));
      const double gap = lerp(0.46, 0.54, uniform01(rng));
      route = {{forward ? 0.4 : 0.6, gap}, {forward ? 0.6 : 0.4, gap},
               {forward ? 1.02 : -0.02, gy}};
      break;
    }
    case CrowdLayout::kCrossing: {
      const double lane = lerp(0.38, 0.62, u);
      if (uniform01(rng) < 0.5) {
        sx = forward ? 0.01 : 0.99;
        sy = lane;
        route = {{forward ? 1.02 : -0.02, lane}};
      } else {
        sy = forward ? 0.01 : 0.99;
        sx = lane;
        route = {{lane, forward ? 1.02 : -0.02}};
      }
      break;
    }
  }
  if (blocked(walls, sx, sy, 0.01)) return false;
  w.x = sx;
  w.y = sy;
  w.waypoints = std::move(route);
  return true;
}

void advance_walker(Walker& w, const std::vector<Walker>& others,
                    const std::vector<Wall>& walls) {
  constexpr double kWallRange = 0.06;
  constexpr double kAgentRange = 0.05;
  if (w.waypoints.size() > 1) {
    const Point& p = w.waypoints.front();
    if (std::hypot(p.x - w.x, p.y - w.y) < 0.03) w.waypoints.erase(w.waypoints.begin());
  }
  const Point goal = w.waypoints.front();
  double gx = goal.x - w.x, gy = goal.y - w.y;
  const double gn = std::hypot(gx, gy);
  if (gn > 0) {
    gx /= gn;
    gy /= gn;
  }
  double fx = gx, fy = gy;
  for (const auto& wall : walls) {
    const double cx = std::clamp(w.x, wall.x0, wall.x1);
    const double cy = std::clamp(w.y, wall.y0, wall.y1);
    double nx = w.x - cx, ny = w.y - cy;
    const double d = std::hypot(nx, ny);
    if (d >= kWallRange || d <= 0.0) continue;
    nx /= d;
    ny /= d;
    const double push = (kWallRange - d) / kWallRange;
    // Slide along the wall in whichever tangent direction the goal favours.
    double tx = -ny, ty = nx;
    if (tx * gx + ty * gy < 0.0) {
      tx = -tx;
      ty = -ty;
    }
    fx += 1.5 * push * nx + push * tx;
    fy += 1.5 * push * ny + push * ty;
  }
  for (const auto& o : others) {
    if (o.id == w.id) continue;
    double dx = w.x - o.x, dy = w.y - o.y;
    const double d = std::hypot(dx, dy);
    if (d >= kAgentRange || d <= 0.0) continue;
    const double push = 0.5 * (kAgentRange - d) / kAgentRange;
    fx += push * dx / d;
    fy += push * dy / d;
  }
  const double fn = std::hypot(fx, fy);
  if (fn <= 0.0) return;
  const double nx = w.x + w.speed * fx / fn;
  const double ny = w.y + w.speed * fy / fn;
  if (!blocked(walls, nx, ny, 0.005)) {
    w.x = nx;
    w.y = ny;
  }
}

}  // namespace

GeneratedScene gen_crowd_scene(const CrowdSceneConfig& cfg) {
  cfg.validate();
  GeneratedScene out;
  out.walls = layout_walls(cfg.layout);
  out.walls.insert(out.walls.end(), cfg.extra_walls.begin(), cfg.extra_walls.end());
  Rng rng(derive_seed(cfg.seed, {0xC0}));
  const int s = cfg.image_size;

  RawImage background(s, s, 0);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      std::uint8_t* p = background.pixel(y, x);
      p[0] = static_cast<std::uint8_t>(180 + 30 * x / s);
      p[1] = static_cast<std::uint8_t>(185 + 20 * y / s);
      p[2] = 170;
    }
  }
  for (const auto& w : out.walls) fill_rect(background, w, {55, 60, 80});

  std::vector<Walker> walkers;
  int next_id = 1;
  auto spawn = [&]() {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      Walker w;
      if (!plan_walker(cfg.layout, out.walls, rng, w)) continue;
      w.id = next_id++;
      w.speed = std::max(0.3 * cfg.speed_mean,
                         cfg.speed_mean + cfg.speed_std * standard_normal(rng));
      walkers.push_back(std::move(w));
      return;
    }
    fail(ErrorCode::kGeneration, "crowd layout leaves no free space to spawn agents");
  };
  for (int i = 0; i < cfg.min_agents; ++i) spawn();

  TrajectoryDataset& ds = out.dataset;
  ds.name = cfg.name;
  ds.dims = {s, s};
  ds.n_max = cfg.n_max;
  ds.frame_period = cfg.frame_period;
  ds.first_frame = 0;
  ds.frame_count = cfg.frames;
  const double radius = std::max(1.5, 0.02 * s);
  for (int f = 0; f < cfg.frames; ++f) {
    if (f > 0) {
      const std::vector<Walker> snapshot = walkers;
      for (auto& w : walkers) {
        advance_walker(w, snapshot, out.walls);
        ++w.age;
      }
      const double max_age = 4.0 / cfg.speed_mean;
      std::erase_if(walkers, [&](const Walker& w) {
        return w.x < 0.0 || w.x > 1.0 || w.y < 0.0 || w.y > 1.0 || w.age > max_age;
      });
      if (static_cast<int>(walkers.size()) < cfg.max_agents && uniform01(rng) < cfg.spawn_rate) {
        spawn();
      }
    }
    RawImage img = background;
    for (const auto& w : walkers) {
      ds.states.push_back({w.id, f, w.x, w.y});
      fill_disc(img, w.x * s, w.y * s, radius, agent_color(w.id));
    }
    out.frames.push_back(std::move(img));
  }
  std::sort(ds.states.begin(), ds.states.end(), [](const AgentState& a, const AgentState& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.agent_id < b.agent_id;
  });
  return out;
}

// --- Gear task -------------------------------------------------------------

namespace {

std::vector<Point> arrange_landmarks(const GearTaskConfig& cfg, Rng& rng) {
  const int n = cfg.landmarks;
  const double pi = std::numbers::pi;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Point centre{0.5 + 0.08 * (uniform01(rng) - 0.5), 0.5 + 0.08 * (uniform01(rng) - 0.5)};
    const double phase = 2.0 * pi * uniform01(rng);
    std::vector<double> angles(n);
    std::vector<Point> pts(n);
    for (int i = 0; i < n; ++i) {
      angles[i] = phase + 2.0 * pi * i / n + 0.6 * (pi / n) * (uniform01(rng) - 0.5);
    }
    for (int i = 0; i < n; ++i) {
      const double r = 0.22 + 0.14 * uniform01(rng);
      // Image y grows downwards, so increasing angle runs clockwise on screen.
      const double a = cfg.direction == Direction::kClockwise ? angles[i] : -angles[i];
      pts[i] = {centre.x + r * std::cos(a), centre.y + r * std::sin(a)};
    }
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      const Point& p = pts[i];
      const double m = cfg.landmark_radius;
      if (p.x < m || p.x > 1 - m || p.y < m || p.y > 1 - m) ok = false;
      for (int j = i + 1; j < n && ok; ++j) {
        if (std::hypot(p.x - pts[j].x, p.y - pts[j].y) < 2.5 * cfg.landmark_radius) ok = false;
      }
    }
    if (ok) return pts;
  }
  fail(ErrorCode::kGeneration, "cannot place gear landmarks without overlap");
}

}  // namespace

GeneratedScene gen_gear_task(const GearTaskConfig& cfg) {
  cfg.validate();
  GeneratedScene out;
  Rng rng(derive_seed(cfg.seed, {0x6E}));
  const auto colors = cfg.resolved_colors();
  const int s = cfg.image_size;
  const Color table{70, 72, 82};
  const Color effector{255, 255, 255};

  TrajectoryDataset& ds = out.dataset;
  ds.name = cfg.name;
  ds.dims = {s, s};
  ds.n_max = 1;
  ds.frame_period = cfg.frame_period;
  ds.first_frame = 0;

  int frame = 0;
  for (int e = 0; e < cfg.episodes; ++e) {
    GearEpisode ep;
    ep.agent_id = e + 1;
    ep.first_frame = frame;
    ep.landmarks = arrange_landmarks(cfg, rng);

    RawImage background(s, s, 0);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) std::copy(table.begin(), table.end(), background.pixel(y, x));
    }
    for (int i = 0; i < cfg.landmarks; ++i) {
      fill_disc(background, ep.landmarks[i].x * s, ep.landmarks[i].y * s,
                cfg.landmark_radius * s, colors[i]);
    }

    // Path: start hovering at a random landmark, then visit landmarks in
    // color order for the configured number of laps.
    const int start = static_cast<int>(uniform01(rng) * cfg.landmarks) % cfg.landmarks;
    std::vector<std::pair<Point, bool>> path;  // position, hovering
    Point pos = ep.landmarks[start];
    for (int h = 0; h < cfg.hover_frames; ++h) path.push_back({pos, true});
    for (int v = 1; v <= cfg.laps * cfg.landmarks; ++v) {
      const Point target = ep.landmarks[(start + v) % cfg.landmarks];
      const double dist = std::hypot(target.x - pos.x, target.y - pos.y);
      const int steps = std::max(1, static_cast<int>(std::ceil(dist / cfg.speed)));
      for (int k = 1; k <= steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        path.push_back({{pos.x + t * (target.x - pos.x), pos.y + t * (target.y - pos.y)},
                        k == steps});
      }
      pos = target;
      for (int h = 0; h < cfg.hover_frames; ++h) path.push_back({pos, true});
    }

    for (const auto& [p, hovering] : path) {
      RawImage img = background;
      const double r = cfg.occlusion && hovering ? cfg.landmark_radius + 1.0 / s
                                                 : cfg.effector_radius;
      fill_disc(img, p.x * s, p.y * s, r * s, effector);
      ds.states.push_back({ep.agent_id, frame, p.x, p.y});
      out.frames.push_back(std::move(img));
      ++frame;
    }
    ep.last_frame = frame - 1;
    out.episodes.push_back(std::move(ep));
  }
  ds.frame_count = frame;
  return out;
}

std::filesystem::path write_generated_scene(const std::filesystem::path& dir,
                                            const GeneratedScene& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    write_png(frame_path(dir / "frames", scene.dataset.first_frame + static_cast<int>(i)),
              scene.frames[i]);
  }
  write_annotations(dir / "annotations.csv", scene.dataset);
  DatasetManifest m;
  m.name = scene.dataset.name;
  m.annotations_path = "annotations.csv";
  m.frames_dir = "frames";
  m.width_px = scene.dataset.dims.width;
  m.height_px = scene.dataset.dims.height;
  m.frame_period_s = scene.dataset.frame_period;
  m.n_max = scene.dataset.n_max;
  m.first_frame = scene.dataset.first_frame;
  m.num_frames = scene.dataset.frame_count;
  const fs::path manifest = dir / "manifest.json";
  write_manifest(manifest, m);
  return manifest;
}

double procrustes_residual(const std::vector<Point>& a, const std::vector<Point>& b) {
  require(a.size() == b.size() && !a.empty(), ErrorCode::kInvalidArgument,
          "procrustes needs two equal nonempty point sets");
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd pa(n, 2), pb(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    pa(i, 0) = a[i].x;
    pa(i, 1) = a[i].y;
    pb(i, 0) = b[i].x;
    pb(i, 1) = b[i].y;
  }
  const Eigen::RowVector2d ca = pa.colwise().mean();
  const Eigen::RowVector2d cb = pb.colwise().mean();
  pa.rowwise() -= ca;
  pb.rowwise() -= cb;
  const double norm_a = pa.squaredNorm();
  if (norm_a <= 0.0) return std::sqrt(pb.squaredNorm() / static_cast<double>(n));
  // Orthogonal (rotation or reflection) R minimising |pa R - pb|.
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(pa.transpose() * pb,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix2d r = svd.matrixU() * svd.matrixV().transpose();
  const double scale = svd.singularValues().sum() / norm_a;
  const Eigen::MatrixXd diff = scale * pa * r - pb;
  return std::sqrt(diff.squaredNorm() / static_cast<double>(n));
}

}  // namespace rdb
