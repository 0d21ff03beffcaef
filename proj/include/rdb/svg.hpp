#ifndef RDB_SVG_HPP_
#define RDB_SVG_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rdb/image.hpp"
#include "rdb/scene_data.hpp"

namespace rdb {

struct TrajectoryPlot {
  Trajectory observed;
  Trajectory truth;
  std::vector<Trajectory> predictions;
};

// Observed (blue), ground truth (yellow) and predicted (green) trajectories
// in normalised coordinates drawn over an optional scene image.
std::string trajectory_svg(const RawImage* background,
                           const std::vector<TrajectoryPlot>& plots, int size_px = 512);

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace rdb

#endif  // RDB_SVG_HPP_
