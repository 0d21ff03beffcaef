#include "rdb/rdb.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "rdb/checkpoint.hpp"
#include "rdb/commands.hpp"
#include "rdb/evaluation.hpp"

struct rdb_dataset {
  rdb::Scene scene;
};

struct rdb_model {
  std::shared_ptr<rdb::ModelBundle> bundle;
  std::unique_ptr<rdb::RdbPredictor> predictor;
  const rdb_dataset* prepared = nullptr;
  double prepared_tau = -1.0;
};

namespace {

thread_local std::string last_error;

rdb_status set_error(rdb_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <typename F>
rdb_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return RDB_OK;
  } catch (const rdb::Error& e) {
    return set_error(static_cast<rdb_status>(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(RDB_ERR_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(RDB_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(RDB_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void need(const void* p, const char* what) {
  rdb::require(p != nullptr, rdb::ErrorCode::kInvalidArgument, std::string(what) + " is NULL");
}

nlohmann::json parse_config(const char* text) {
  if (text == nullptr || *text == '\0') return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    rdb::fail(rdb::ErrorCode::kParse, std::string("config JSON: ") + e.what());
  }
}

rdb::Trajectory to_trajectory(const double* xy, size_t n) {
  rdb::Trajectory t(n);
  for (size_t i = 0; i < n; ++i) t[i] = {xy[2 * i], xy[2 * i + 1]};
  return t;
}

}  // namespace

extern "C" {

const char* rdb_version(void) { return "1.0.0"; }

const char* rdb_last_error(void) { return last_error.c_str(); }

const char* rdb_status_name(rdb_status status) {
  if (status == RDB_OK) return "ok";
  return rdb::error_code_name(static_cast<rdb::ErrorCode>(status));
}

int rdb_status_exit_code(rdb_status status) {
  if (status == RDB_OK) return 0;
  return rdb::exit_code_for(static_cast<rdb::ErrorCode>(status));
}

void rdb_free_string(char* s) { std::free(s); }

rdb_status rdb_execute(const char* command, const char* config_json, char** summary_json) {
  return guarded([&] {
    need(command, "command");
    const auto summary = rdb::execute(command, parse_config(config_json));
    if (summary_json != nullptr) *summary_json = dup_string(summary.dump());
  });
}

rdb_status rdb_replay(const char* manifest_path, const char* out_dir, char** summary_json) {
  return guarded([&] {
    need(manifest_path, "manifest_path");
    std::optional<std::filesystem::path> out;
    if (out_dir != nullptr) out = out_dir;
    const auto summary = rdb::replay(manifest_path, out);
    if (summary_json != nullptr) *summary_json = dup_string(summary.dump());
  });
}

rdb_status rdb_resolve_config(const char* command, const char* config_json, char** resolved_json) {
  return guarded([&] {
    need(command, "command");
    need(resolved_json, "resolved_json");
    *resolved_json = dup_string(rdb::resolve_config(command, parse_config(config_json)).dump(2));
  });
}

rdb_status rdb_dataset_open(const char* manifest_path, int with_images, rdb_dataset** out) {
  return guarded([&] {
    need(manifest_path, "manifest_path");
    need(out, "out");
    auto d = std::make_unique<rdb_dataset>();
    d->scene = rdb::load_scene(manifest_path, {}, with_images != 0);
    *out = d.release();
  });
}

void rdb_dataset_close(rdb_dataset* dataset) { delete dataset; }

rdb_status rdb_dataset_info(const rdb_dataset* dataset, size_t* frames, size_t* states,
                            size_t* agents) {
  return guarded([&] {
    need(dataset, "dataset");
    if (frames != nullptr) *frames = static_cast<size_t>(dataset->scene.dataset.frame_count);
    if (states != nullptr) *states = dataset->scene.dataset.states.size();
    if (agents != nullptr) *agents = dataset->scene.dataset.presence().size();
  });
}

rdb_status rdb_model_open(const char* run_dir, const char* predictor_file, rdb_model** out) {
  return guarded([&] {
    need(run_dir, "run_dir");
    need(out, "out");
    const std::filesystem::path run = run_dir;
    auto m = std::make_unique<rdb_model>();
    m->bundle = std::make_shared<rdb::ModelBundle>();
    const auto b = run / (predictor_file != nullptr ? predictor_file : "b.ckpt");
    m->bundle->predictor = rdb::load_predictor(rdb::read_checkpoint(b));
    if (m->bundle->predictor->config().inputs != rdb::InputConfig::kS) {
      m->bundle->encoder = rdb::load_encoder(rdb::read_checkpoint(run / "r.ckpt"));
      if (std::filesystem::exists(run / "d.ckpt")) {
        m->bundle->dynamics = rdb::load_dynamics(rdb::read_checkpoint(run / "d.ckpt"));
      }
    }
    rdb::check_compatible(*m->bundle);
    *out = m.release();
  });
}

void rdb_model_close(rdb_model* model) { delete model; }

rdb_status rdb_model_predict(rdb_model* model, const rdb_dataset* dataset, int agent_id,
                             int first_frame, int obs_len, int pred_len, double tau,
                             unsigned long long seed, double* out_xy) {
  return guarded([&] {
    need(model, "model");
    need(dataset, "dataset");
    need(out_xy, "out_xy");
    rdb::require(obs_len >= 1 && pred_len >= 1, rdb::ErrorCode::kRange,
                 "obs_len and pred_len must be >= 1");
    if (model->prepared != dataset || model->prepared_tau != tau) {
      model->predictor = std::make_unique<rdb::RdbPredictor>(model->bundle, tau,
                                                              rdb::ContextMode::kClosedLoop);
      model->predictor->prepare(dataset->scene, 0);
      model->prepared = dataset;
      model->prepared_tau = tau;
    }
    rdb::TrajectoryWindow w;
    w.agent_id = agent_id;
    w.first_frame = first_frame;
    w.last_frame = first_frame + obs_len - 1;
    for (const auto& s : dataset->scene.dataset.states) {
      if (s.agent_id == agent_id && s.frame >= first_frame && s.frame <= w.last_frame) {
        w.obs.push_back(s);
      }
    }
    rdb::require(static_cast<int>(w.obs.size()) == obs_len, rdb::ErrorCode::kIndex,
                 "agent " + std::to_string(agent_id) + " is not present on every observed frame");
    rdb::Rng rng(seed);
    const auto mode = tau > 0.0 ? rdb::PredictionMode::kSample : rdb::PredictionMode::kMean;
    const auto pred = model->predictor->predict(w, pred_len, mode, rng);
    for (size_t i = 0; i < pred.size(); ++i) {
      out_xy[2 * i] = pred[i].x;
      out_xy[2 * i + 1] = pred[i].y;
    }
  });
}

rdb_status rdb_ade(const double* predicted, const double* truth, size_t n, double* out) {
  return guarded([&] {
    need(predicted, "predicted");
    need(truth, "truth");
    need(out, "out");
    *out = rdb::ade(to_trajectory(predicted, n), to_trajectory(truth, n));
  });
}

rdb_status rdb_fde(const double* predicted, const double* truth, size_t n, double* out) {
  return guarded([&] {
    need(predicted, "predicted");
    need(truth, "truth");
    need(out, "out");
    *out = rdb::fde(to_trajectory(predicted, n), to_trajectory(truth, n));
  });
}

rdb_status rdb_constant_velocity(const double* observed, size_t n_obs, size_t pred_len,
                                 double* out_xy) {
  return guarded([&] {
    need(observed, "observed");
    need(out_xy, "out_xy");
    const auto pred = rdb::constant_velocity_predict(to_trajectory(observed, n_obs),
                                                     static_cast<int>(pred_len));
    for (size_t i = 0; i < pred.size(); ++i) {
      out_xy[2 * i] = pred[i].x;
      out_xy[2 * i + 1] = pred[i].y;
    }
  });
}

}  // extern "C"
