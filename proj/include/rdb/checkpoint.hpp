#ifndef RDB_CHECKPOINT_HPP_
#define RDB_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rdb/global_dynamics.hpp"
#include "rdb/local_predictor.hpp"
#include "rdb/spatial_encoder.hpp"

namespace rdb {

enum class ModuleKind { kEncoder = 1, kDynamics = 2, kPredictor = 3 };

std::string to_string(ModuleKind kind);

// On-disk layout (little endian):
//   "RDBCKPT\0" | u32 version | u32 kind | u64 seed | u64 header bytes |
//   header JSON {"config": ..., "metadata": ...} | u64 count | f64 params[count]
struct Checkpoint {
  ModuleKind kind = ModuleKind::kEncoder;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<double> params;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes,
                                  const std::string& source = "<memory>");
// Writes through a temporary file and renames it into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const SpatialEncoder& model, std::uint64_t seed);
Checkpoint make_checkpoint(const GlobalDynamics& model, std::uint64_t seed);
Checkpoint make_checkpoint(const LocalPredictor& model, std::uint64_t seed);

SpatialEncoder load_encoder(const Checkpoint& ckpt);
GlobalDynamics load_dynamics(const Checkpoint& ckpt);
LocalPredictor load_predictor(const Checkpoint& ckpt);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string file_sha256(const std::filesystem::path& path);
// Git-style object hash: files hash as "blob <size>\0<bytes>", directories
// as "tree <size>\0" over sorted "<name> <child hash>\n" lines.
std::string content_hash(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace rdb

#endif  // RDB_CHECKPOINT_HPP_
