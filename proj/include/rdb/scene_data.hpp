#ifndef RDB_SCENE_DATA_HPP_
#define RDB_SCENE_DATA_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rdb/error.hpp"
#include "rdb/image.hpp"

namespace rdb {

struct FrameDims {
  int width = 0;
  int height = 0;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Trajectory = std::vector<Point>;

// One annotated agent position; x, y normalised into [0,1].
struct AgentState {
  int agent_id = 0;
  int frame = 0;
  double x = 0.0;
  double y = 0.0;
};

// Fixed-width snapshot of all agents at one frame. Occupied slots come first,
// ordered by agent_id; free slots hold exact zeros.
struct WorldState {
  int frame = 0;
  std::vector<double> positions;  // 2 * n_max, (x, y) per slot
  std::vector<bool> mask;         // n_max
  std::vector<int> slot_agents;   // agent id per slot, -1 when free

  int n_max() const { return static_cast<int>(mask.size()); }
  // Slot holding agent_id, or -1.
  int slot_of(int agent_id) const;
};

struct TrajectoryWindow {
  int agent_id = 0;
  int first_frame = 0;
  int last_frame = 0;  // inclusive
  std::vector<AgentState> obs;
  std::vector<AgentState> pred;

  int length() const { return static_cast<int>(obs.size() + pred.size()); }
  const AgentState& at(int i) const {
    return i < static_cast<int>(obs.size()) ? obs[i] : pred[i - obs.size()];
  }
};

struct WindowConfig {
  int obs_len = 4;
  int pred_len = 8;
  double frame_period = 0.4;  // seconds per frame
  int train_len = 8;

  void validate() const;
  int window_len() const { return obs_len + pred_len; }
};

struct TrajectoryDataset {
  std::string name;
  std::vector<AgentState> states;  // sorted by (frame, agent_id)
  std::filesystem::path frames_dir;
  FrameDims dims;
  int n_max = 1;
  double frame_period = 0.4;
  int first_frame = 0;
  int frame_count = 0;

  int last_frame() const { return first_frame + frame_count - 1; }
  // Per-agent tracks sorted by frame.
  std::map<int, std::vector<AgentState>> tracks() const;
  // Number of annotated frames per agent.
  std::map<int, int> presence() const;
};

inline double normalize_coordinate(double px, double dim) { return px / dim; }
inline double denormalize_coordinate(double v, double dim) { return v * dim; }

// Reads the canonical `frame,agent_id,x,y` CSV (pixel units) and normalises
// x by width and y by height.
TrajectoryDataset load_annotations(const std::filesystem::path& path, FrameDims dims);
TrajectoryDataset parse_annotations(const std::string& text, FrameDims dims,
                                    const std::string& source = "<memory>");
void write_annotations(const std::filesystem::path& path,
                       const TrajectoryDataset& dataset);

struct WorldStates {
  std::vector<WorldState> states;  // one per frame, first_frame onwards
  std::vector<std::string> warnings;
};

// One WorldState per frame. Frames holding more than n_max agents keep the
// n_max agents with the longest total presence (ties: smaller agent_id).
WorldStates build_world_states(const TrajectoryDataset& dataset, int n_max);

// Windows of window_len consecutive frames inside each agent's contiguous
// presence runs; starts advance by stride from each run's first frame.
// Ordered by (first_frame, agent_id).
std::vector<TrajectoryWindow> window_split(const TrajectoryDataset& dataset,
                                           const WindowConfig& cfg, int stride);
std::vector<TrajectoryWindow> window_split(const TrajectoryDataset& dataset,
                                           int window_len, int obs_len, int stride);

template <typename T>
struct LeaveOneOut {
  std::vector<T> train;
  T test;
};

template <typename T>
LeaveOneOut<T> leave_one_out_split(const std::vector<T>& items, int test_index) {
  require(items.size() >= 2, ErrorCode::kInvalidArgument,
          "leave-one-out needs at least two datasets");
  require(test_index >= 0 && test_index < static_cast<int>(items.size()),
          ErrorCode::kIndex,
          "test index " + std::to_string(test_index) + " out of range");
  LeaveOneOut<T> out{{}, items[test_index]};
  for (int i = 0; i < static_cast<int>(items.size()); ++i) {
    if (i != test_index) out.train.push_back(items[i]);
  }
  return out;
}

// Dataset manifest (JSON): name, annotations_path, frames_dir, width_px,
// height_px, frame_period_s, n_max; optional first_frame, num_frames.
struct DatasetManifest {
  std::string name;
  std::filesystem::path annotations_path;
  std::filesystem::path frames_dir;
  int width_px = 0;
  int height_px = 0;
  double frame_period_s = 0.4;
  int n_max = 1;
  std::optional<int> first_frame;
  std::optional<int> num_frames;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

std::filesystem::path frame_path(const std::filesystem::path& frames_dir, int frame);

// A dataset with its preprocessed frames (index = frame - first_frame).
struct Scene {
  TrajectoryDataset dataset;
  std::vector<ImageFrame> frames;

  bool has_images() const { return !frames.empty(); }
  const ImageFrame& frame_image(int frame) const;
};

struct PreprocessConfig {
  int clahe_tiles = 8;
  double clahe_clip = 2.0;
};

// Loads manifest + annotations and, when with_images, every frame image.
Scene load_scene(const std::filesystem::path& manifest_path,
                 const PreprocessConfig& pre = {}, bool with_images = true);

// A path names one dataset (manifest file, or directory holding
// manifest.json) or a suite (directory whose subdirectories hold manifests,
// taken in lexicographic order).
std::vector<std::filesystem::path> resolve_manifests(const std::filesystem::path& path);

}  // namespace rdb

#endif  // RDB_SCENE_DATA_HPP_
