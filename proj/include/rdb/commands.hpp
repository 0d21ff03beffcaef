#ifndef RDB_COMMANDS_HPP_
#define RDB_COMMANDS_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rdb/error.hpp"

// Command layer shared by the CLI and the C API. Every command takes one JSON
// config; resolve_config fills in defaults and rejects unknown keys.
namespace rdb {

std::vector<std::string> command_names();  // synth ingest train eval transfer plot

nlohmann::json default_config(const std::string& command);
nlohmann::json resolve_config(const std::string& command, const nlohmann::json& user);

// Resolves the config, writes <out>/run_manifest.json, then runs the
// command. Returns a JSON summary of what was produced.
nlohmann::json execute(const std::string& command, const nlohmann::json& config);

// Re-runs the command recorded in a run manifest, optionally redirecting its
// output directory.
nlohmann::json replay(const std::filesystem::path& manifest,
                      const std::optional<std::filesystem::path>& out = {});

// 0 success, 1 runtime/numeric failure, 2 configuration/validation failure.
int exit_code_for(ErrorCode code);

}  // namespace rdb

#endif  // RDB_COMMANDS_HPP_
