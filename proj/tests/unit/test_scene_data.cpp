#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "rdb/random.hpp"
#include "rdb/scene_data.hpp"

namespace rdb {
namespace {

TEST(Annotations, NormalizesByFrameDims) {
  const auto d = parse_annotations("frame,agent_id,x,y\n10,3,320,240\n0,1,0,0\n", {640, 480});
  ASSERT_EQ(d.states.size(), 2u);
  // sorted by frame
  EXPECT_EQ(d.states[0].frame, 0);
  EXPECT_EQ(d.states[0].x, 0.0);
  EXPECT_EQ(d.states[0].y, 0.0);
  EXPECT_EQ(d.states[1].agent_id, 3);
  EXPECT_EQ(d.states[1].x, 0.5);
  EXPECT_EQ(d.states[1].y, 0.5);
}

TEST(Annotations, ErrorsCarryCategory) {
  auto code_of = [](const std::string& text) {
    try {
      parse_annotations(text, {100, 100});
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInternal;
  };
  EXPECT_EQ(code_of("frame,agent_id,x,y\n0,1,abc,2\n"), ErrorCode::kParse);
  EXPECT_EQ(code_of("frame,agent_id,x,y\n0,1,5,5\n0,1,6,6\n"), ErrorCode::kDuplicate);
  EXPECT_EQ(code_of("frame,agent_id,x,y\n0,1,101,5\n"), ErrorCode::kRange);
}

TEST(Annotations, ParseErrorNamesTheLine) {
  try {
    parse_annotations("frame,agent_id,x,y\n0,1,5,5\n1,1,5\n", {100, 100});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
  }
}

TEST(Annotations, NormalizationRoundTrip) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double dim = 1.0 + 2000.0 * u(rng);
    const double p = dim * u(rng);
    EXPECT_NEAR(denormalize_coordinate(normalize_coordinate(p, dim), dim), p, 1e-9);
  }
}

TrajectoryDataset dataset_of(std::vector<AgentState> states, int frames) {
  TrajectoryDataset d;
  std::sort(states.begin(), states.end(), [](const AgentState& a, const AgentState& b) {
    return std::tie(a.frame, a.agent_id) < std::tie(b.frame, b.agent_id);
  });
  d.states = std::move(states);
  d.frame_count = frames;
  return d;
}

TEST(WorldStates, PadsAndOrdersByAgent) {
  const auto d = dataset_of({{5, 0, 0.3, 0.4}, {2, 0, 0.1, 0.2}}, 2);
  const auto ws = build_world_states(d, 3);
  ASSERT_EQ(ws.states.size(), 2u);
  EXPECT_EQ(ws.states[0].positions, (std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.0, 0.0}));
  EXPECT_EQ(ws.states[0].mask, (std::vector<bool>{true, true, false}));
  // frame 1 is empty
  EXPECT_EQ(ws.states[1].positions, std::vector<double>(6, 0.0));
  EXPECT_EQ(ws.states[1].mask, std::vector<bool>(3, false));
  EXPECT_TRUE(ws.warnings.empty());
}

TEST(WorldStates, TruncationKeepsLongestPresence) {
  // presence counts: agent 1 -> 1 frame, 2 -> 3, 3 -> 2, 4 -> 3
  std::vector<AgentState> s{{1, 0, .1, .1}, {2, 0, .2, .2}, {3, 0, .3, .3}, {4, 0, .4, .4},
                            {2, 1, .2, .2}, {3, 1, .3, .3}, {4, 1, .4, .4}, {2, 2, .2, .2},
                            {4, 2, .4, .4}};
  const auto d = dataset_of(s, 3);
  const auto ws = build_world_states(d, 2);
  // brute force: rank by (-presence, id)
  std::map<int, int> count;
  for (const auto& a : s) ++count[a.agent_id];
  std::vector<int> ids{1, 2, 3, 4};
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    return count[a] != count[b] ? count[a] > count[b] : a < b;
  });
  EXPECT_EQ(ws.states[0].slot_agents, (std::vector<int>{ids[0], ids[1]}));
  EXPECT_FALSE(ws.warnings.empty());
}

TEST(WorldStates, MaskZeroConsistencyOnRandomData) {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AgentState> s;
    for (int f = 0; f < 30; ++f) {
      for (int a = 0; a < 6; ++a) {
        if (u(rng) < 0.5) s.push_back({a, f, u(rng), u(rng)});
      }
    }
    const auto ws = build_world_states(dataset_of(s, 30), 4);
    for (const auto& w : ws.states) {
      int last = -1;
      for (int k = 0; k < 4; ++k) {
        if (!w.mask[k]) {
          EXPECT_EQ(w.positions[2 * k], 0.0);
          EXPECT_EQ(w.positions[2 * k + 1], 0.0);
          EXPECT_EQ(w.slot_agents[k], -1);
        } else {
          EXPECT_GT(w.slot_agents[k], last);
          last = w.slot_agents[k];
        }
      }
    }
  }
}

TEST(Windows, LengthArithmetic) {
  std::vector<AgentState> s;
  for (int f = 0; f < 16; ++f) s.push_back({1, f, 0.5, 0.5});
  WindowConfig cfg;
  cfg.obs_len = 4;
  cfg.pred_len = 12;
  auto d = dataset_of(s, 16);
  const auto w = window_split(d, cfg, 1);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].first_frame, 0);
  EXPECT_EQ(w[0].last_frame, 15);
  EXPECT_EQ(w[0].obs.size(), 4u);
  EXPECT_EQ(w[0].pred.size(), 12u);
  s.resize(8);
  EXPECT_TRUE(window_split(dataset_of(s, 8), cfg, 1).empty());
}

TEST(Windows, MatchesBruteForceEnumeration) {
  Rng rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<AgentState> s;
    std::map<int, std::vector<bool>> present;
    const int frames = 40;
    for (int a = 0; a < 4; ++a) {
      present[a].assign(frames, false);
      for (int f = 0; f < frames; ++f) {
        if (u(rng) < 0.85) {
          present[a][f] = true;
          s.push_back({a, f, u(rng), u(rng)});
        }
      }
    }
    const int len = 6, stride = 2;
    const auto windows = window_split(dataset_of(s, frames), len, 2, stride);
    // brute force: starts advance by stride from each run's first frame
    std::size_t expected = 0;
    for (const auto& [a, p] : present) {
      int f = 0;
      while (f < frames) {
        if (!p[f]) {
          ++f;
          continue;
        }
        int end = f;
        while (end < frames && p[end]) ++end;
        for (int st = f; st + len <= end; st += stride) ++expected;
        f = end;
      }
    }
    EXPECT_EQ(windows.size(), expected);
    for (const auto& w : windows) {
      for (int i = 0; i < w.length(); ++i) EXPECT_EQ(w.at(i).frame, w.first_frame + i);
    }
  }
}

TEST(LeaveOneOut, Splits) {
  const std::vector<int> five{0, 1, 2, 3, 4};
  const auto s = leave_one_out_split(five, 2);
  EXPECT_EQ(s.train, (std::vector<int>{0, 1, 3, 4}));
  EXPECT_EQ(s.test, 2);
  EXPECT_EQ(leave_one_out_split(std::vector<int>{7, 8}, 0).train, std::vector<int>{8});
  EXPECT_THROW(leave_one_out_split(five, 5), Error);
  EXPECT_THROW(leave_one_out_split(std::vector<int>{1}, 0), Error);
}

TEST(Preprocess, UniformGrayIsUnchanged) {
  RawImage raw(128, 128, 90);
  const ImageFrame f = preprocess_frame(raw);
  for (float v : f.pixels) EXPECT_NEAR(v, 90.0 / 255.0, 1e-6);
}

TEST(Preprocess, CheckerboardShapeAndRange) {
  RawImage raw(128, 128);
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) {
      const std::uint8_t v = ((x / 8 + y / 8) % 2) ? 255 : 0;
      std::fill_n(raw.pixel(y, x), 3, v);
    }
  }
  const ImageFrame f = preprocess_frame(raw);
  ASSERT_EQ(f.pixels.size(), static_cast<std::size_t>(ImageFrame::kValues));
  for (float v : f.pixels) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

double luma_std(const std::vector<double>& lum) {
  double m = 0.0, s = 0.0;
  for (double v : lum) m += v;
  m /= lum.size();
  for (double v : lum) s += (v - m) * (v - m);
  return std::sqrt(s / lum.size());
}

TEST(Preprocess, ClaheStretchesLowContrast) {
  RawImage raw(64, 64);
  std::vector<double> before;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const std::uint8_t v = static_cast<std::uint8_t>(100 + (x * 20) / 64);
      std::fill_n(raw.pixel(y, x), 3, v);
      before.push_back(v / 255.0);
    }
  }
  // one tile, no clipping: plain histogram equalization
  const RgbImage out = clahe(raw, 1, 1e9);
  std::vector<double> after;
  for (std::size_t i = 0; i < out.rgb.size(); i += 3) {
    after.push_back(luminance(out.rgb[i], out.rgb[i + 1], out.rgb[i + 2]));
  }
  EXPECT_GE(luma_std(after), luma_std(before));
}

TEST(Manifest, RoundTripsAndResolvesRelativePaths) {
  const auto dir = std::filesystem::temp_directory_path() / "rdb-unit-manifest";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  TrajectoryDataset d = parse_annotations("frame,agent_id,x,y\n0,1,5,5\n1,1,6,6\n", {10, 10});
  write_annotations(dir / "a.csv", d);
  DatasetManifest m;
  m.name = "tiny";
  m.annotations_path = "a.csv";
  m.frames_dir = "frames";
  m.width_px = 10;
  m.height_px = 10;
  m.n_max = 2;
  write_manifest(dir / "manifest.json", m);
  const Scene s = load_scene(dir / "manifest.json", {}, false);
  EXPECT_EQ(s.dataset.name, "tiny");
  ASSERT_EQ(s.dataset.states.size(), 2u);
  EXPECT_DOUBLE_EQ(s.dataset.states[1].x, 0.6);
  EXPECT_EQ(s.dataset.n_max, 2);
}

}  // namespace
}  // namespace rdb
