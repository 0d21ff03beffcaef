// Command-line front end. Each subcommand's flags are generated from the
// command's default config, so every top-level config key has a flag of the
// same name. Precedence: defaults < --config file < flags < --set.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "rdb/rdb.h"

using nlohmann::json;

namespace {

const std::vector<std::string> kCommands = {"synth", "ingest", "train", "eval", "transfer", "plot"};

// Positional argument per command, if any.
const std::map<std::string, std::string> kPositional = {{"synth", "task"}, {"train", "stage"}};

// Short spellings accepted in addition to the key name.
const std::map<std::string, std::string> kAliases = {{"obs_len", "--obs"}, {"pred_len", "--pred"}};

struct Status {
  rdb_status code;
};

json take_json(char* s) {
  json j = json::parse(s);
  rdb_free_string(s);
  return j;
}

int report(rdb_status status) {
  std::cerr << "error: " << rdb_status_name(status) << ": " << rdb_last_error() << "\n";
  return rdb_status_exit_code(status);
}

// Interprets a flag value using the default's JSON type.
json convert(const std::string& text, const json& like) {
  if (like.is_string()) return text;
  if (like.is_boolean()) {
    if (text.empty() || text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw CLI::ValidationError("expected true or false, got '" + text + "'");
  }
  if (like.is_array() && !text.empty() && text.front() != '[') {
    json arr = json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const json& elem = like.empty() ? json("") : like.front();
      arr.push_back(convert(item, elem));
    }
    return arr;
  }
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    throw CLI::ValidationError("cannot parse '" + text + "'");
  }
}

void set_path(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw CLI::ValidationError("--set expects key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  json* node = &cfg;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  (*node)[parts.back()] = parsed;
}

struct CommandFlags {
  CLI::App* app = nullptr;
  json defaults;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::vector<std::string> sets;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rdb: scene-conditioned trajectory prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rdb_version()));

  std::string config_file;
  std::string out;
  long long seed = -1;
  app.add_option("--config", config_file, "JSON config file for the command");
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "master seed");

  std::map<std::string, CommandFlags> commands;
  for (const auto& name : kCommands) {
    char* resolved = nullptr;
    const rdb_status st = rdb_resolve_config(name.c_str(), "{}", &resolved);
    if (st != RDB_OK) return report(st);
    CommandFlags& cf = commands[name];
    cf.defaults = take_json(resolved);
    cf.app = app.add_subcommand(name, "run the " + name + " command");
    cf.app->fallthrough();
    const auto pos = kPositional.find(name);
    if (pos != kPositional.end()) {
      cf.options[pos->second] =
          cf.app->add_option(pos->second, cf.values[pos->second], pos->second);
    }
    for (auto it = cf.defaults.begin(); it != cf.defaults.end(); ++it) {
      const std::string& key = it.key();
      if (key == "seed" || key == "out" || it->is_object()) continue;
      if (pos != kPositional.end() && pos->second == key) continue;
      std::string flags = "--" + key;
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != key) flags += ",--" + dashed;
      const auto alias = kAliases.find(key);
      if (alias != kAliases.end()) flags += "," + alias->second;
      auto* opt = cf.app->add_option(flags, cf.values[key], "default " + it->dump());
      if (it->is_boolean()) opt->expected(0, 1);
      cf.options[key] = opt;
    }
    cf.app->add_option("--set", cf.sets, "nested override, e.g. --set train_b.epochs=3");
  }

  std::string manifest;
  std::string replay_out;
  auto* replay = app.add_subcommand("replay", "re-run a recorded run_manifest.json");
  replay->fallthrough();
  replay->add_option("manifest", manifest, "run_manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (replay->parsed()) {
    char* summary = nullptr;
    const rdb_status st =
        rdb_replay(manifest.c_str(), out.empty() ? nullptr : out.c_str(), &summary);
    if (st != RDB_OK) return report(st);
    std::cout << take_json(summary).dump(2) << "\n";
    return 0;
  }

  for (auto& [name, cf] : commands) {
    if (!cf.app->parsed()) continue;
    json cfg = json::object();
    try {
      if (!config_file.empty()) {
        std::ifstream in(config_file);
        if (!in) {
          std::cerr << "error: io_error: cannot open " << config_file << "\n";
          return 1;
        }
        cfg = json::parse(in);
      }
      for (const auto& [key, text] : cf.values) {
        if (cf.options.at(key)->count() == 0) continue;
        cfg[key] = convert(text, cf.defaults.at(key));
      }
      for (const auto& s : cf.sets) set_path(cfg, s);
    } catch (const std::exception& e) {
      std::cerr << "error: config_error: " << e.what() << "\n";
      return 2;
    }
    if (seed >= 0) cfg["seed"] = seed;
    if (!out.empty()) cfg["out"] = out;
    char* summary = nullptr;
    const rdb_status st = rdb_execute(name.c_str(), cfg.dump().c_str(), &summary);
    if (st != RDB_OK) return report(st);
    std::cout << take_json(summary).dump(2) << "\n";
    return 0;
  }
  return 2;
}
