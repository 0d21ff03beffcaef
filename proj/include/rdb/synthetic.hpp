#ifndef RDB_SYNTHETIC_HPP_
#define RDB_SYNTHETIC_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rdb/image.hpp"
#include "rdb/scene_data.hpp"

namespace rdb {

using Color = std::array<std::uint8_t, 3>;

// Axis-aligned obstacle in normalised coordinates.
struct Wall {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  bool contains(double x, double y, double margin = 0.0) const;
};

enum class CrowdLayout { kCorridor, kVertical, kPillar, kChokePoint, kCrossing };

std::string to_string(CrowdLayout layout);
CrowdLayout parse_crowd_layout(const std::string& text);

struct CrowdSceneConfig {
  std::string name = "crowd";
  CrowdLayout layout = CrowdLayout::kCorridor;
  std::vector<Wall> extra_walls;
  int min_agents = 2;      // agents present at frame 0
  int max_agents = 6;      // cap on concurrent agents
  double spawn_rate = 0.15;  // spawn probability per frame while below the cap
  double speed_mean = 0.012;  // normalised units per frame
  double speed_std = 0.002;
  int frames = 120;
  int image_size = 128;
  int n_max = 8;
  double frame_period = 0.4;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Direction { kClockwise, kAnticlockwise };

std::string to_string(Direction direction);
Direction parse_direction(const std::string& text);

struct GearTaskConfig {
  std::string name = "gears";
  int landmarks = 5;
  std::vector<Color> colors;  // one per landmark, visitation order; empty = defaults
  Direction direction = Direction::kClockwise;
  double speed = 0.02;        // normalised units per frame
  int hover_frames = 4;
  int laps = 2;
  int episodes = 6;           // each with a fresh landmark arrangement
  double landmark_radius = 0.06;
  double effector_radius = 0.03;
  bool occlusion = false;     // effector covers the landmark while hovering
  int image_size = 128;
  double frame_period = 0.4;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<Color> resolved_colors() const;
};

// Landmark arrangement of one gear episode; positions in visitation order.
struct GearEpisode {
  int agent_id = 0;
  int first_frame = 0;
  int last_frame = 0;
  std::vector<Point> landmarks;
};

struct GeneratedScene {
  TrajectoryDataset dataset;
  std::vector<RawImage> frames;
  std::vector<Wall> walls;            // crowd scenes
  std::vector<GearEpisode> episodes;  // gear scenes
};

std::vector<Wall> layout_walls(CrowdLayout layout);

GeneratedScene gen_crowd_scene(const CrowdSceneConfig& cfg);
GeneratedScene gen_gear_task(const GearTaskConfig& cfg);

// Writes manifest.json, annotations.csv and frames/ under dir; returns the
// manifest path.
std::filesystem::path write_generated_scene(const std::filesystem::path& dir,
                                            const GeneratedScene& scene);

// Least-squares similarity transform (rotation, optional reflection, scale,
// translation) from a to b; returns the RMS residual after alignment.
double procrustes_residual(const std::vector<Point>& a, const std::vector<Point>& b);

// Scene image into a contact sheet of evenly spaced frames.
std::string contact_sheet_svg(const GeneratedScene& scene, int max_frames = 16);

}  // namespace rdb

#endif  // RDB_SYNTHETIC_HPP_
