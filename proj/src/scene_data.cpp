#include "rdb/scene_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"

#include "rdb/parallel.hpp"

namespace rdb {

namespace fs = std::filesystem;
using nlohmann::json;

int WorldState::slot_of(int agent_id) const {
  for (std::size_t i = 0; i < slot_agents.size(); ++i) {
    if (slot_agents[i] == agent_id) return static_cast<int>(i);
  }
  return -1;
}

void WindowConfig::validate() const {
  require(obs_len >= 1, ErrorCode::kConfig, "obs_len must be >= 1");
  require(pred_len >= 1, ErrorCode::kConfig, "pred_len must be >= 1");
  require(frame_period > 0.0, ErrorCode::kConfig, "frame_period must be > 0");
  require(train_len >= 2, ErrorCode::kConfig, "train_len must be >= 2");
}

std::map<int, std::vector<AgentState>> TrajectoryDataset::tracks() const {
  std::map<int, std::vector<AgentState>> out;
  for (const AgentState& s : states) out[s.agent_id].push_back(s);
  for (auto& [id, track] : out) {
    std::sort(track.begin(), track.end(),
              [](const AgentState& a, const AgentState& b) { return a.frame < b.frame; });
  }
  return out;
}

std::map<int, int> TrajectoryDataset::presence() const {
  std::map<int, int> out;
  for (const AgentState& s : states) ++out[s.agent_id];
  return out;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return std::string(s.substr(a, b - a));
}

template <typename T>
bool parse_number(const std::string& field, T& out) {
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

TrajectoryDataset parse_annotations(const std::string& text, FrameDims dims,
                                    const std::string& source) {
  require(dims.width > 0 && dims.height > 0, ErrorCode::kInvalidArgument,
          "frame dimensions must be positive");
  TrajectoryDataset out;
  out.dims = dims;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::set<std::pair<int, int>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = trim(line);
    if (row.empty()) continue;
    if (!header_seen) {
      require(row == "frame,agent_id,x,y", ErrorCode::kParse,
              source + ":" + std::to_string(line_no) +
                  ": expected header 'frame,agent_id,x,y'");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(row);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (!row.empty() && row.back() == ',') fields.emplace_back();
    AgentState s;
    double px = 0.0, py = 0.0;
    if (fields.size() != 4 || !parse_number(fields[0], s.frame) ||
        !parse_number(fields[1], s.agent_id) || !parse_number(fields[2], px) ||
        !parse_number(fields[3], py)) {
      fail(ErrorCode::kParse,
           source + ":" + std::to_string(line_no) + ": malformed row '" + row + "'");
    }
    if (!(px >= 0.0 && px <= dims.width && py >= 0.0 && py <= dims.height)) {
      fail(ErrorCode::kRange, source + ":" + std::to_string(line_no) +
                                  ": coordinate outside frame bounds");
    }
    if (!seen.emplace(s.frame, s.agent_id).second) {
      fail(ErrorCode::kDuplicate, source + ":" + std::to_string(line_no) +
                                      ": duplicate record for frame " +
                                      std::to_string(s.frame) + ", agent " +
                                      std::to_string(s.agent_id));
    }
    s.x = normalize_coordinate(px, dims.width);
    s.y = normalize_coordinate(py, dims.height);
    out.states.push_back(s);
  }
  require(header_seen, ErrorCode::kParse, source + ": missing header");
  std::sort(out.states.begin(), out.states.end(),
            [](const AgentState& a, const AgentState& b) {
              return a.frame != b.frame ? a.frame < b.frame : a.agent_id < b.agent_id;
            });
  if (!out.states.empty()) {
    out.first_frame = out.states.front().frame;
    out.frame_count = out.states.back().frame - out.first_frame + 1;
  }
  return out;
}

TrajectoryDataset load_annotations(const fs::path& path, FrameDims dims) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open annotations " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  TrajectoryDataset out = parse_annotations(buffer.str(), dims, path.string());
  out.name = path.stem().string();
  return out;
}

void write_annotations(const fs::path& path, const TrajectoryDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out << "frame,agent_id,x,y\n";
  out << std::setprecision(17);
  for (const AgentState& s : dataset.states) {
    out << s.frame << ',' << s.agent_id << ','
        << denormalize_coordinate(s.x, dataset.dims.width) << ','
        << denormalize_coordinate(s.y, dataset.dims.height) << '\n';
  }
}

WorldStates build_world_states(const TrajectoryDataset& dataset, int n_max) {
  require(n_max >= 1, ErrorCode::kInvalidArgument, "n_max must be >= 1");
  const std::map<int, int> presence = dataset.presence();
  WorldStates out;
  out.states.reserve(dataset.frame_count);
  std::size_t cursor = 0;
  for (int f = dataset.first_frame; f <= dataset.last_frame(); ++f) {
    std::vector<const AgentState*> here;
    while (cursor < dataset.states.size() && dataset.states[cursor].frame < f) ++cursor;
    while (cursor < dataset.states.size() && dataset.states[cursor].frame == f) {
      here.push_back(&dataset.states[cursor++]);
    }
    if (static_cast<int>(here.size()) > n_max) {
      std::sort(here.begin(), here.end(), [&](const AgentState* a, const AgentState* b) {
        const int pa = presence.at(a->agent_id);
        const int pb = presence.at(b->agent_id);
        return pa != pb ? pa > pb : a->agent_id < b->agent_id;
      });
      out.warnings.push_back("frame " + std::to_string(f) + ": " +
                             std::to_string(here.size()) + " agents exceed n_max=" +
                             std::to_string(n_max) + ", truncated");
      here.resize(n_max);
    }
    std::sort(here.begin(), here.end(), [](const AgentState* a, const AgentState* b) {
      return a->agent_id < b->agent_id;
    });
    WorldState ws;
    ws.frame = f;
    ws.positions.assign(2 * static_cast<std::size_t>(n_max), 0.0);
    ws.mask.assign(n_max, false);
    ws.slot_agents.assign(n_max, -1);
    for (std::size_t i = 0; i < here.size(); ++i) {
      ws.positions[2 * i] = here[i]->x;
      ws.positions[2 * i + 1] = here[i]->y;
      ws.mask[i] = true;
      ws.slot_agents[i] = here[i]->agent_id;
    }
    out.states.push_back(std::move(ws));
  }
  return out;
}

std::vector<TrajectoryWindow> window_split(const TrajectoryDataset& dataset,
                                           int window_len, int obs_len, int stride) {
  require(stride >= 1, ErrorCode::kInvalidArgument, "stride must be >= 1");
  require(window_len >= 1 && obs_len >= 0 && obs_len <= window_len,
          ErrorCode::kInvalidArgument, "invalid window length");
  std::vector<TrajectoryWindow> out;
  for (const auto& [id, track] : dataset.tracks()) {
    std::size_t run_start = 0;
    while (run_start < track.size()) {
      std::size_t run_end = run_start;
      while (run_end + 1 < track.size() &&
             track[run_end + 1].frame == track[run_end].frame + 1) {
        ++run_end;
      }
      const std::size_t run_len = run_end - run_start + 1;
      for (std::size_t s = 0; s + window_len <= run_len; s += stride) {
        TrajectoryWindow w;
        w.agent_id = id;
        const auto begin = track.begin() + static_cast<std::ptrdiff_t>(run_start + s);
        w.obs.assign(begin, begin + obs_len);
        w.pred.assign(begin + obs_len, begin + window_len);
        w.first_frame = begin->frame;
        w.last_frame = w.first_frame + window_len - 1;
        out.push_back(std::move(w));
      }
      run_start = run_end + 1;
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TrajectoryWindow& a, const TrajectoryWindow& b) {
                     return a.first_frame != b.first_frame ? a.first_frame < b.first_frame
                                                           : a.agent_id < b.agent_id;
                   });
  return out;
}

std::vector<TrajectoryWindow> window_split(const TrajectoryDataset& dataset,
                                           const WindowConfig& cfg, int stride) {
  cfg.validate();
  return window_split(dataset, cfg.window_len(), cfg.obs_len, stride);
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    const fs::path base = path.parent_path();
    m.name = j.at("name").get<std::string>();
    m.annotations_path = base / j.at("annotations_path").get<std::string>();
    m.frames_dir = base / j.at("frames_dir").get<std::string>();
    m.width_px = j.at("width_px").get<int>();
    m.height_px = j.at("height_px").get<int>();
    m.frame_period_s = j.value("frame_period_s", 0.4);
    m.n_max = j.at("n_max").get<int>();
    if (j.contains("first_frame")) m.first_frame = j["first_frame"].get<int>();
    if (j.contains("num_frames")) m.num_frames = j["num_frames"].get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, "manifest " + path.string() + ": " + e.what());
  }
  require(m.width_px > 0 && m.height_px > 0, ErrorCode::kConfig,
          "manifest dimensions must be positive");
  require(m.n_max >= 1, ErrorCode::kConfig, "manifest n_max must be >= 1");
  require(m.frame_period_s > 0.0, ErrorCode::kConfig, "frame_period_s must be > 0");
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  json j;
  j["name"] = m.name;
  j["annotations_path"] = m.annotations_path.generic_string();
  j["frames_dir"] = m.frames_dir.generic_string();
  j["width_px"] = m.width_px;
  j["height_px"] = m.height_px;
  j["frame_period_s"] = m.frame_period_s;
  j["n_max"] = m.n_max;
  if (m.first_frame) j["first_frame"] = *m.first_frame;
  if (m.num_frames) j["num_frames"] = *m.num_frames;
  std::ofstream out(path);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

fs::path frame_path(const fs::path& frames_dir, int frame) {
  return frames_dir / ("frame_" + std::to_string(frame) + ".png");
}

const ImageFrame& Scene::frame_image(int frame) const {
  const int index = frame - dataset.first_frame;
  require(index >= 0 && index < static_cast<int>(frames.size()), ErrorCode::kIndex,
          "no image for frame " + std::to_string(frame) + " in " + dataset.name);
  return frames[index];
}

Scene load_scene(const fs::path& manifest_path, const PreprocessConfig& pre,
                 bool with_images) {
  const DatasetManifest m = read_manifest(manifest_path);
  Scene scene;
  scene.dataset = load_annotations(m.annotations_path, {m.width_px, m.height_px});
  TrajectoryDataset& d = scene.dataset;
  d.name = m.name;
  d.frames_dir = m.frames_dir;
  d.n_max = m.n_max;
  d.frame_period = m.frame_period_s;
  if (m.first_frame || m.num_frames) {
    const int first = m.first_frame.value_or(d.first_frame);
    const int count = m.num_frames.value_or(d.last_frame() - first + 1);
    require(count >= 0, ErrorCode::kConfig, "manifest num_frames must be >= 0");
    for (const AgentState& s : d.states) {
      require(s.frame >= first && s.frame < first + count, ErrorCode::kRange,
              "annotation frame " + std::to_string(s.frame) +
                  " outside manifest frame range");
    }
    d.first_frame = first;
    d.frame_count = count;
  }
  if (with_images) {
    scene.frames.resize(d.frame_count);
    parallel_for(static_cast<std::size_t>(d.frame_count), [&](std::size_t i) {
      const int f = d.first_frame + static_cast<int>(i);
      fs::path p = frame_path(d.frames_dir, f);
      if (!fs::exists(p)) {
        const fs::path alt = d.frames_dir / ("frame_" + std::to_string(f) + ".ppm");
        require(fs::exists(alt), ErrorCode::kIo,
                "missing image for frame " + std::to_string(f) + " in " + d.name);
        p = alt;
      }
      scene.frames[i] = preprocess_frame(read_image(p), pre.clahe_tiles, pre.clahe_clip, f);
    });
  }
  return scene;
}

std::vector<fs::path> resolve_manifests(const fs::path& path) {
  if (fs::is_regular_file(path)) return {path};
  require(fs::is_directory(path), ErrorCode::kIo, "no dataset at " + path.string());
  if (fs::exists(path / "manifest.json")) return {path / "manifest.json"};
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      out.push_back(entry.path() / "manifest.json");
    }
  }
  std::sort(out.begin(), out.end());
  require(!out.empty(), ErrorCode::kIo, "no manifests under " + path.string());
  return out;
}

}  // namespace rdb
