#ifndef RDB_CONFIG_JSON_HPP_
#define RDB_CONFIG_JSON_HPP_

#include "json.hpp"

#include "rdb/global_dynamics.hpp"
#include "rdb/local_predictor.hpp"
#include "rdb/nn.hpp"
#include "rdb/scene_data.hpp"
#include "rdb/spatial_encoder.hpp"

// JSON (de)serialisation of the module configs. Missing keys keep their
// defaults; wrongly typed values raise kConfig.
namespace rdb {

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const MmdConfig& c);
void from_json(const nlohmann::json& j, MmdConfig& c);
void to_json(nlohmann::json& j, const DynamicsConfig& c);
void from_json(const nlohmann::json& j, DynamicsConfig& c);
void to_json(nlohmann::json& j, const PredictorConfig& c);
void from_json(const nlohmann::json& j, PredictorConfig& c);
void to_json(nlohmann::json& j, const WindowConfig& c);
void from_json(const nlohmann::json& j, WindowConfig& c);
void to_json(nlohmann::json& j, const PreprocessConfig& c);
void from_json(const nlohmann::json& j, PreprocessConfig& c);

}  // namespace rdb

namespace rdb::nn {
void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);
}  // namespace rdb::nn

namespace rdb {

// Reads key into out when present, converting type errors to kConfig.
template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.is_object()) fail(ErrorCode::kConfig, "expected a JSON object");
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace rdb

#endif  // RDB_CONFIG_JSON_HPP_
