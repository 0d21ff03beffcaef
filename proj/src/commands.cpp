#include "rdb/commands.hpp"

#include <fstream>
#include <sstream>

#include "rdb/checkpoint.hpp"
#include "rdb/config_json.hpp"
#include "rdb/evaluation.hpp"
#include "rdb/svg.hpp"
#include "rdb/synthetic.hpp"
#include "rdb/training.hpp"
#include "rdb/transfer.hpp"

namespace rdb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

json train_groups() {
  PipelineConfig p;
  TrainConfig r, d, b = predictor_train_defaults();
  auto train_json = [](const TrainConfig& t) {
    return json{{"adam", t.adam},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"max_steps", t.max_steps},
                {"seed", t.seed},
                {"sequence_length", t.sequence_length},
                {"sequence_stride", t.sequence_stride},
                {"batch_frames", t.batch_frames},
                {"window_stride", t.window_stride}};
  };
  return json{{"encoder", p.encoder},
              {"mmd", p.mmd},
              {"dynamics", json{{"hidden", p.dynamics.hidden},
                                {"components", p.dynamics.components}}},
              {"predictor", json{{"hidden", p.predictor.hidden}}},
              {"train_r", train_json(r)},
              {"train_d", train_json(d)},
              {"train_b", train_json(b)},
              {"train_len", p.train_len},
              {"encoder_data", to_string(p.encoder_data)},
              {"preprocess", PreprocessConfig{}}};
}

json eval_keys() {
  return json{{"obs_len", 4}, {"pred_len", 8},   {"stride", 1},
              {"max_windows", 0}, {"best_of", 0}, {"tau", 0.5},
              {"context", "closed-loop"}, {"plots", 0}, {"mean_distance", false}};
}

TrainConfig train_from(const json& j) {
  TrainConfig t;
  read_key(j, "adam", t.adam);
  read_key(j, "batch_size", t.batch_size);
  read_key(j, "epochs", t.epochs);
  read_key(j, "max_steps", t.max_steps);
  read_key(j, "seed", t.seed);
  read_key(j, "sequence_length", t.sequence_length);
  read_key(j, "sequence_stride", t.sequence_stride);
  read_key(j, "batch_frames", t.batch_frames);
  read_key(j, "window_stride", t.window_stride);
  t.validate();
  return t;
}

PipelineConfig pipeline_from(const json& c) {
  PipelineConfig p;
  read_key(c, "encoder", p.encoder);
  read_key(c, "mmd", p.mmd);
  read_key(c.at("dynamics"), "hidden", p.dynamics.hidden);
  read_key(c.at("dynamics"), "components", p.dynamics.components);
  read_key(c.at("predictor"), "hidden", p.predictor.hidden);
  p.train_r = train_from(c.at("train_r"));
  p.train_d = train_from(c.at("train_d"));
  p.train_b = train_from(c.at("train_b"));
  read_key(c, "train_len", p.train_len);
  p.encoder_data = parse_encoder_data(c.at("encoder_data").get<std::string>());
  read_key(c, "holdout", p.holdout);
  read_key(c, "seed", p.seed);
  if (c.contains("inputs")) p.predictor.inputs = parse_input_config(c.at("inputs").get<std::string>());
  if (c.contains("conditioning")) {
    p.dynamics.conditioning = parse_conditioning_mode(c.at("conditioning").get<std::string>());
  }
  if (c.contains("baseline_s")) p.baseline_s = c.at("baseline_s").get<bool>();
  p.validate();
  return p;
}

EvalOptions eval_from(const json& c, const char* mode_key) {
  EvalOptions e;
  read_key(c, "obs_len", e.obs_len);
  read_key(c, "pred_len", e.pred_len);
  read_key(c, "stride", e.stride);
  read_key(c, "max_windows", e.max_windows);
  read_key(c, "best_of", e.best_of);
  read_key(c, "seed", e.seed);
  read_key(c, "plots", e.plot_windows);
  e.mode = parse_prediction_mode(c.at(mode_key).get<std::string>());
  e.validate();
  return e;
}

std::vector<Scene> load_suite(const fs::path& data, const PreprocessConfig& pre, bool images) {
  std::vector<Scene> scenes;
  for (const auto& m : resolve_manifests(data)) scenes.push_back(load_scene(m, pre, images));
  return scenes;
}

std::string path_string(const json& c, const char* key) {
  const std::string s = c.at(key).get<std::string>();
  require(!s.empty(), ErrorCode::kConfig, std::string("'") + key + "' must be set");
  return s;
}

json hash_inputs(const std::vector<fs::path>& paths) {
  json out = json::array();
  for (const auto& p : paths) {
    if (fs::exists(p)) out.push_back({{"path", p.generic_string()}, {"hash", content_hash(p)}});
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) { write_text_atomic(path, text); }

std::string report_with_hashes(const TransferResult& r) {
  json j{{"mode", r.report.mode}, {"ade", r.report.ade}, {"fde", r.report.fde},
         {"n_trajectories", r.report.trajectories}};
  if (!r.b_hash_before.empty()) {
    j["b_hash_before"] = r.b_hash_before;
    j["b_hash_after"] = r.b_hash_after;
    j["b_unchanged"] = r.b_hash_before == r.b_hash_after;
  }
  return j.dump();
}

// --- synth -----------------------------------------------------------------

CrowdSceneConfig crowd_from(const json& c, const std::string& layout, std::uint64_t seed,
                            const std::string& name) {
  CrowdSceneConfig cc;
  cc.name = name;
  cc.layout = parse_crowd_layout(layout);
  read_key(c, "frames", cc.frames);
  read_key(c, "min_agents", cc.min_agents);
  read_key(c, "max_agents", cc.max_agents);
  read_key(c, "spawn_rate", cc.spawn_rate);
  read_key(c, "speed_mean", cc.speed_mean);
  read_key(c, "speed_std", cc.speed_std);
  read_key(c, "image_size", cc.image_size);
  read_key(c, "n_max", cc.n_max);
  read_key(c, "frame_period", cc.frame_period);
  cc.seed = seed;
  return cc;
}

GearTaskConfig gears_from(const json& c, const std::string& direction, std::uint64_t seed,
                          const std::string& name) {
  GearTaskConfig g;
  g.name = name;
  g.direction = parse_direction(direction);
  read_key(c, "landmarks", g.landmarks);
  read_key(c, "gear_speed", g.speed);
  read_key(c, "hover_frames", g.hover_frames);
  read_key(c, "laps", g.laps);
  read_key(c, "episodes", g.episodes);
  read_key(c, "landmark_radius", g.landmark_radius);
  read_key(c, "effector_radius", g.effector_radius);
  read_key(c, "occlusion", g.occlusion);
  read_key(c, "image_size", g.image_size);
  read_key(c, "frame_period", g.frame_period);
  g.seed = seed;
  return g;
}

json emit_scene(const fs::path& dir, const GeneratedScene& scene, bool preview) {
  const fs::path manifest = write_generated_scene(dir, scene);
  if (preview) write_text(dir / "preview.svg", contact_sheet_svg(scene));
  return {{"manifest", manifest.generic_string()},
          {"frames", scene.dataset.frame_count},
          {"states", scene.dataset.states.size()}};
}

json run_synth(const json& c) {
  const std::string task = c.at("task").get<std::string>();
  const fs::path out = path_string(c, "out");
  const auto seed = c.at("seed").get<std::uint64_t>();
  const bool preview = c.at("preview").get<bool>();
  std::string name = c.at("name").get<std::string>();
  json produced = json::array();
  if (task == "crowd") {
    if (name.empty()) name = "crowd-" + c.at("layout").get<std::string>();
    const auto cc = crowd_from(c, c.at("layout").get<std::string>(), seed, name);
    produced.push_back(emit_scene(out, gen_crowd_scene(cc), preview));
  } else if (task == "gears") {
    if (name.empty()) name = "gears-" + c.at("direction").get<std::string>();
    const auto g = gears_from(c, c.at("direction").get<std::string>(), seed, name);
    produced.push_back(emit_scene(out, gen_gear_task(g), preview));
  } else if (task == "crowd-suite") {
    const auto layouts = c.at("layouts").get<std::vector<std::string>>();
    require(layouts.size() >= 2, ErrorCode::kConfig, "crowd suite needs >= 2 layouts");
    for (std::size_t i = 0; i < layouts.size(); ++i) {
      const auto cc = crowd_from(c, layouts[i], derive_seed(seed, {i}),
                                 "env" + std::to_string(i) + "-" + layouts[i]);
      produced.push_back(
          emit_scene(out / ("env" + std::to_string(i)), gen_crowd_scene(cc), preview));
    }
  } else if (task == "gears-suite") {
    const auto train_seeds = c.at("train_seeds").get<std::vector<std::uint64_t>>();
    require(!train_seeds.empty(), ErrorCode::kConfig, "gear suite needs training seeds");
    const std::string train_dir = c.at("train_direction").get<std::string>();
    const std::string test_dir = c.at("test_direction").get<std::string>();
    std::size_t i = 0;
    for (; i < train_seeds.size(); ++i) {
      const auto g = gears_from(c, train_dir, train_seeds[i],
                                "env" + std::to_string(i) + "-" + train_dir);
      produced.push_back(emit_scene(out / ("env" + std::to_string(i)), gen_gear_task(g), preview));
    }
    const auto g = gears_from(c, test_dir, c.at("test_seed").get<std::uint64_t>(),
                              "env" + std::to_string(i) + "-" + test_dir);
    produced.push_back(emit_scene(out / ("env" + std::to_string(i)), gen_gear_task(g), preview));
  } else {
    fail(ErrorCode::kConfig, "unknown synth task '" + task +
                                 "' (expected crowd, gears, crowd-suite or gears-suite)");
  }
  return {{"datasets", produced}};
}

// --- ingest ----------------------------------------------------------------

json run_ingest(const json& c) {
  const fs::path out = path_string(c, "out");
  DatasetManifest m;
  m.name = c.at("name").get<std::string>();
  const fs::path annotations = fs::absolute(path_string(c, "annotations"));
  const fs::path frames = fs::absolute(path_string(c, "frames_dir"));
  m.width_px = c.at("width_px").get<int>();
  m.height_px = c.at("height_px").get<int>();
  m.frame_period_s = c.at("frame_period").get<double>();
  m.n_max = c.at("n_max").get<int>();
  require(m.width_px > 0 && m.height_px > 0, ErrorCode::kConfig,
          "width_px and height_px must be > 0");
  require(m.n_max >= 1, ErrorCode::kConfig, "n_max must be >= 1");
  // Named after the annotation file's directory so replays to another
  // output directory produce the same manifest.
  if (m.name.empty()) m.name = annotations.parent_path().filename().string();
  fs::create_directories(out);
  m.annotations_path = fs::relative(annotations, fs::absolute(out));
  m.frames_dir = fs::relative(frames, fs::absolute(out));
  const fs::path manifest = out / "manifest.json";
  write_manifest(manifest, m);
  PreprocessConfig pre;
  read_key(c, "preprocess", pre);
  const Scene scene = load_scene(manifest, pre, c.at("check_images").get<bool>());
  const auto ws = build_world_states(scene.dataset, m.n_max);
  return {{"manifest", manifest.generic_string()},
          {"frames", scene.dataset.frame_count},
          {"states", scene.dataset.states.size()},
          {"agents", scene.dataset.presence().size()},
          {"warnings", ws.warnings}};
}

// --- train -----------------------------------------------------------------

json run_train(const json& c) {
  const fs::path out = path_string(c, "out");
  const Stage stage = parse_stage(c.at("stage").get<std::string>());
  const PipelineConfig p = pipeline_from(c);
  PreprocessConfig pre;
  read_key(c, "preprocess", pre);
  const bool images = stage != Stage::kB || p.predictor.inputs != InputConfig::kS;
  const auto scenes = load_suite(path_string(c, "data"), pre, images);
  const PipelineResult r = train_pipeline(scenes, p, stage, out);
  json summary{{"run", out.generic_string()}};
  json ckpts = json::array();
  for (const char* f : {"r.ckpt", "d.ckpt", "b.ckpt", "b_s.ckpt"}) {
    if (fs::exists(out / f)) ckpts.push_back((out / f).generic_string());
  }
  summary["checkpoints"] = ckpts;
  auto last = [](const LossHistory& h) { return h.empty() ? json() : json(h.back()); };
  summary["final_loss"] = {{"r", last(r.history_r)}, {"d", last(r.history_d)},
                           {"b", last(r.history_b)}, {"b_s", last(r.history_baseline)}};
  return summary;
}

// --- eval / plot -------------------------------------------------------------

std::shared_ptr<ModelBundle> load_bundle(const fs::path& run, const std::string& predictor_file) {
  auto bundle = std::make_shared<ModelBundle>();
  const fs::path b = run / predictor_file;
  require(fs::exists(b), ErrorCode::kDependency, "missing checkpoint " + b.string());
  bundle->predictor = load_predictor(read_checkpoint(b));
  if (bundle->predictor->config().inputs != InputConfig::kS) {
    bundle->encoder = load_encoder(read_checkpoint(run / "r.ckpt"));
    if (fs::exists(run / "d.ckpt")) bundle->dynamics = load_dynamics(read_checkpoint(run / "d.ckpt"));
  }
  check_compatible(*bundle);
  return bundle;
}

std::unique_ptr<TrajectoryPredictor> make_predictor(const json& c, bool* needs_images) {
  const std::string model = c.at("model").get<std::string>();
  *needs_images = false;
  if (model == "oracle") return std::make_unique<OraclePredictor>();
  if (model == "cv") return std::make_unique<ConstantVelocityPredictor>();
  if (model == "random") return std::make_unique<RandomUniformPredictor>();
  require(model == "rdb", ErrorCode::kConfig,
          "unknown model '" + model + "' (expected rdb, cv, random or oracle)");
  auto bundle = load_bundle(path_string(c, "run"), c.at("predictor_file").get<std::string>());
  *needs_images = bundle->predictor->config().inputs != InputConfig::kS;
  return std::make_unique<RdbPredictor>(
      bundle, c.at("tau").get<double>(), parse_context_mode(c.at("context").get<std::string>()),
      derive_seed(c.at("seed").get<std::uint64_t>(), {0x7E}));
}

std::vector<const Scene*> select_scenes(const std::vector<Scene>& scenes, int holdout) {
  std::vector<const Scene*> out;
  if (holdout >= 0) {
    require(holdout < static_cast<int>(scenes.size()), ErrorCode::kIndex,
            "holdout " + std::to_string(holdout) + " out of range");
    out.push_back(&scenes[holdout]);
  } else {
    for (const auto& s : scenes) out.push_back(&s);
  }
  return out;
}

RawImage background_for(const Scene& scene, int frame) {
  const fs::path p = frame_path(scene.dataset.frames_dir, frame);
  if (fs::exists(p)) return read_image(p);
  return {};
}

void write_plots(const fs::path& dir, const MetricReport& report,
                 const std::vector<const Scene*>& scenes) {
  for (std::size_t i = 0; i < report.datasets.size(); ++i) {
    const auto& d = report.datasets[i];
    if (d.plots.empty()) continue;
    const auto windows = window_split(scenes[i]->dataset, report.obs_len + report.pred_len,
                                      report.obs_len, 1);
    RawImage bg = windows.empty() ? RawImage{} : background_for(*scenes[i], windows.front().first_frame);
    write_text(dir / (d.dataset + ".svg"), trajectory_svg(&bg, d.plots));
  }
}

json run_eval(const json& c) {
  const fs::path out = path_string(c, "out");
  bool images = false;
  auto predictor = make_predictor(c, &images);
  PreprocessConfig pre;
  read_key(c, "preprocess", pre);
  const auto scenes = load_suite(path_string(c, "data"), pre, images);
  const auto selected = select_scenes(scenes, c.at("holdout").get<int>());
  const EvalOptions opts = eval_from(c, "mode");
  const MetricReport report = evaluate(*predictor, selected, opts, c.at("model").get<std::string>());
  write_text(out / "report.csv", report_csv(report, c.at("mean_distance").get<bool>()));
  if (opts.plot_windows > 0) write_plots(out / "plots", report, selected);
  return {{"report", (out / "report.csv").generic_string()},
          {"ade", report.ade},
          {"fde", report.fde},
          {"n_trajectories", report.trajectories}};
}

json run_plot(const json& c) {
  const fs::path out = path_string(c, "out");
  bool images = false;
  auto predictor = make_predictor(c, &images);
  PreprocessConfig pre;
  read_key(c, "preprocess", pre);
  const auto scenes = load_suite(path_string(c, "data"), pre, images);
  const auto selected = select_scenes(scenes, c.at("holdout").get<int>());
  const int obs = c.at("obs_len").get<int>();
  const int pred = c.at("pred_len").get<int>();
  const int windows_wanted = c.at("windows").get<int>();
  const int samples = c.at("samples").get<int>();
  const int stride = c.at("stride").get<int>();
  require(windows_wanted >= 1 && samples >= 0 && stride >= 1 && obs >= 1 && pred >= 1,
          ErrorCode::kConfig, "plot needs windows >= 1, samples >= 0, stride >= 1");
  const auto seed = c.at("seed").get<std::uint64_t>();
  json files = json::array();
  for (std::size_t si = 0; si < selected.size(); ++si) {
    const Scene& scene = *selected[si];
    predictor->prepare(scene, si);
    const auto windows = window_split(scene.dataset, obs + pred, obs, stride);
    std::vector<TrajectoryPlot> plots;
    for (std::size_t wi = 0; wi < windows.size() && static_cast<int>(wi) < windows_wanted; ++wi) {
      const auto& w = windows[wi];
      Rng rng(derive_seed(seed, {si, wi}));
      TrajectoryPlot p{positions(w.obs), positions(w.pred), {}};
      for (int k = 0; k < samples; ++k) {
        p.predictions.push_back(predictor->predict(w, pred, PredictionMode::kSample, rng));
      }
      p.predictions.push_back(predictor->predict(w, pred, PredictionMode::kMean, rng));
      plots.push_back(std::move(p));
    }
    RawImage bg = windows.empty() ? RawImage{} : background_for(scene, windows.front().first_frame);
    const fs::path file = out / (scene.dataset.name + ".svg");
    write_text(file, trajectory_svg(&bg, plots));
    files.push_back(file.generic_string());
  }
  return {{"plots", files}};
}

// --- transfer ----------------------------------------------------------------

json run_transfer_command(const json& c) {
  const fs::path out = path_string(c, "out");
  TransferConfig t;
  t.source_run = path_string(c, "source");
  t.target = pipeline_from(c);
  t.eval = eval_from(c, "prediction");
  t.tau = c.at("tau").get<double>();
  t.context = parse_context_mode(c.at("context").get<std::string>());
  PreprocessConfig pre;
  read_key(c, "preprocess", pre);
  const auto scenes = load_suite(path_string(c, "target"), pre, true);

  std::vector<TransferMode> modes;
  const std::string mode = c.at("mode").get<std::string>();
  if (mode == "all") {
    modes = all_transfer_modes();
  } else {
    modes.push_back(parse_transfer_mode(mode));
  }
  std::string csv;
  json results = json::array();
  for (TransferMode m : modes) {
    t.mode = m;
    std::optional<fs::path> target_run;
    if (c.at("save_target_models").get<bool>()) target_run = out / ("target-" + to_string(m));
    TransferResult r;
    try {
      r = run_transfer(t, scenes, target_run);
    } catch (const Error& e) {
      // "all" runs whatever the source run supports.
      if (mode != "all" || e.code() != ErrorCode::kDependency) throw;
      results.push_back({{"mode", to_string(m)}, {"skipped", e.what()}});
      continue;
    }
    std::string part = report_csv(r.report, c.at("mean_distance").get<bool>());
    if (!csv.empty()) part = part.substr(part.find('\n') + 1);
    csv += part;
    results.push_back(json::parse(report_with_hashes(r)));
    if (t.eval.plot_windows > 0) {
      std::vector<const Scene*> tests;
      const auto split = pipeline_split(static_cast<int>(scenes.size()), t.target);
      if (split.test_scene >= 0) {
        tests.push_back(&scenes[split.test_scene]);
      } else {
        for (const auto& s : scenes) tests.push_back(&s);
      }
      write_plots(out / "plots" / to_string(m), r.report, tests);
    }
  }
  write_text(out / "report.csv", csv);
  write_text(out / "transfer.json", results.dump(2) + "\n");
  return {{"report", (out / "report.csv").generic_string()}, {"results", results}};
}

// --- config plumbing -----------------------------------------------------------

void merge_checked(json& base, const json& user, const std::string& prefix) {
  require(user.is_object(), ErrorCode::kConfig,
          "config" + (prefix.empty() ? std::string() : " '" + prefix + "'") + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    auto b = base.find(it.key());
    require(b != base.end(), ErrorCode::kConfig, "unknown config key '" + key + "'");
    if (b->is_object() && it->is_object() && !b->empty()) {
      merge_checked(*b, *it, key);
    } else {
      *b = *it;
    }
  }
}

std::vector<fs::path> input_paths(const std::string& command, const json& c) {
  std::vector<fs::path> in;
  auto add_run = [&](const fs::path& run) {
    for (const char* f : {"r.ckpt", "d.ckpt", "b.ckpt", "b_s.ckpt"}) in.push_back(run / f);
  };
  if (command == "ingest") {
    in.push_back(c.at("annotations").get<std::string>());
    in.push_back(c.at("frames_dir").get<std::string>());
  } else if (command == "train") {
    in.push_back(c.at("data").get<std::string>());
  } else if (command == "eval" || command == "plot") {
    in.push_back(c.at("data").get<std::string>());
    if (!c.at("run").get<std::string>().empty()) add_run(c.at("run").get<std::string>());
  } else if (command == "transfer") {
    in.push_back(c.at("target").get<std::string>());
    add_run(c.at("source").get<std::string>());
  }
  return in;
}

}  // namespace

std::vector<std::string> command_names() {
  return {"synth", "ingest", "train", "eval", "transfer", "plot"};
}

json default_config(const std::string& command) {
  json c{{"seed", 1}, {"out", ""}};
  if (command == "synth") {
    CrowdSceneConfig cc;
    GearTaskConfig g;
    c.update(json{{"task", "gears"},
                  {"name", ""},
                  {"preview", false},
                  {"layout", to_string(cc.layout)},
                  {"frames", cc.frames},
                  {"min_agents", cc.min_agents},
                  {"max_agents", cc.max_agents},
                  {"spawn_rate", cc.spawn_rate},
                  {"speed_mean", cc.speed_mean},
                  {"speed_std", cc.speed_std},
                  {"n_max", cc.n_max},
                  {"direction", to_string(g.direction)},
                  {"landmarks", g.landmarks},
                  {"gear_speed", g.speed},
                  {"hover_frames", g.hover_frames},
                  {"laps", g.laps},
                  {"episodes", g.episodes},
                  {"landmark_radius", g.landmark_radius},
                  {"effector_radius", g.effector_radius},
                  {"occlusion", g.occlusion},
                  {"image_size", g.image_size},
                  {"frame_period", g.frame_period},
                  {"layouts", {"corridor", "vertical", "pillar", "choke", "crossing"}},
                  {"train_seeds", {1, 2, 3, 4}},
                  {"test_seed", 5},
                  {"train_direction", "clockwise"},
                  {"test_direction", "anticlockwise"}});
    c["seed"] = 0;
  } else if (command == "ingest") {
    c.update(json{{"name", ""},
                  {"annotations", ""},
                  {"frames_dir", ""},
                  {"width_px", 0},
                  {"height_px", 0},
                  {"frame_period", 0.4},
                  {"n_max", 1},
                  {"check_images", true},
                  {"preprocess", PreprocessConfig{}}});
  } else if (command == "train") {
    c.update(train_groups());
    c.update(json{{"stage", "all"},
                  {"data", ""},
                  {"holdout", -1},
                  {"inputs", "slh"},
                  {"conditioning", "positions"},
                  {"baseline_s", false}});
  } else if (command == "eval") {
    c.update(eval_keys());
    c.update(json{{"run", ""},
                  {"data", ""},
                  {"model", "rdb"},
                  {"predictor_file", "b.ckpt"},
                  {"mode", "mean"},
                  {"holdout", -1},
                  {"preprocess", PreprocessConfig{}}});
  } else if (command == "plot") {
    c.update(json{{"run", ""},
                  {"data", ""},
                  {"model", "rdb"},
                  {"predictor_file", "b.ckpt"},
                  {"holdout", -1},
                  {"obs_len", 4},
                  {"pred_len", 8},
                  {"stride", 1},
                  {"windows", 4},
                  {"samples", 3},
                  {"tau", 0.5},
                  {"context", "closed-loop"},
                  {"preprocess", PreprocessConfig{}}});
  } else if (command == "transfer") {
    c.update(train_groups());
    c.update(eval_keys());
    c.update(json{{"mode", "unsup-rd"},
                  {"source", ""},
                  {"target", ""},
                  {"holdout", -1},
                  {"prediction", "mean"},
                  {"save_target_models", false}});
  } else {
    fail(ErrorCode::kConfig, "unknown command '" + command + "'");
  }
  return c;
}

json resolve_config(const std::string& command, const json& user) {
  json c = default_config(command);
  if (!user.is_null()) merge_checked(c, user, "");
  return c;
}

json execute(const std::string& command, const json& config) {
  json c;
  try {
    c = resolve_config(command, config);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, e.what());
  }
  const fs::path out = path_string(c, "out");
  fs::create_directories(out);
  json manifest{{"command", command},
                {"version", kVersion},
                {"seed", c.at("seed")},
                {"config", c},
                {"inputs", hash_inputs(input_paths(command, c))}};
  if (command == "train") {
    manifest["checkpoints"] = {(out / "r.ckpt").generic_string(), (out / "d.ckpt").generic_string(),
                               (out / "b.ckpt").generic_string()};
  } else if (command == "eval" || command == "plot") {
    manifest["checkpoints"] = json::array();
    for (const auto& p : input_paths(command, c)) {
      if (p.extension() == ".ckpt" && fs::exists(p)) manifest["checkpoints"].push_back(p.generic_string());
    }
  }
  write_text(out / "run_manifest.json", manifest.dump(2) + "\n");
  try {
    if (command == "synth") return run_synth(c);
    if (command == "ingest") return run_ingest(c);
    if (command == "train") return run_train(c);
    if (command == "eval") return run_eval(c);
    if (command == "plot") return run_plot(c);
    return run_transfer_command(c);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("bad config value: ") + e.what());
  } catch (const fs::filesystem_error& e) {
    fail(ErrorCode::kIo, e.what());
  }
}

json replay(const fs::path& manifest_path, const std::optional<fs::path>& out) {
  json m;
  {
    std::ifstream in(manifest_path);
    require(in.good(), ErrorCode::kIo, "cannot open run manifest " + manifest_path.string());
    try {
      in >> m;
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, "run manifest " + manifest_path.string() + ": " + e.what());
    }
  }
  require(m.contains("command") && m.contains("config"), ErrorCode::kParse,
          "run manifest lacks command or config");
  json config = m.at("config");
  if (out) config["out"] = out->generic_string();
  return execute(m.at("command").get<std::string>(), config);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParse:
    case ErrorCode::kDuplicate:
    case ErrorCode::kRange:
    case ErrorCode::kIndex:
    case ErrorCode::kConfig:
    case ErrorCode::kGeneration:
      return 2;
    default:
      return 1;
  }
}

}  // namespace rdb
