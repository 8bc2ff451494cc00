#pragma once

// Operator configuration: JSON file, command-line overrides and environment
// secrets, validated into one struct with a provenance hash.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reflact/backbones.hpp"
#include "reflact/gateway.hpp"
#include "reflact/runner.hpp"

namespace reflact::config {

enum class BackendKind { scripted, live };

std::string_view to_string(BackendKind kind);

struct BackendConfig {
  BackendKind kind = BackendKind::scripted;
  gateway::ScriptedPolicy policy = gateway::ScriptedPolicy::oracle;
  gateway::LiveSettings live;
};

// Half-open [begin, end).
struct SeedRange {
  std::uint64_t begin = 0;
  std::uint64_t end = 10;
};

// "A..B" is inclusive on both ends; a bare "A" is the single seed A.
// Throws Error{config} ("SchemaError").
SeedRange parse_seed_range(const std::string& text);

struct SuiteConfig {
  SeedRange seeds;
  std::vector<world::TaskType> task_types = {world::TaskType::put};
  std::vector<world::RewardFlavor> flavors = {world::RewardFlavor::binary};
  std::vector<backbones::BackboneKind> kinds = {backbones::BackboneKind::react, backbones::BackboneKind::reflact};
};

struct CliConfig {
  BackendConfig backend;
  SuiteConfig suite;
  runner::RunConfig run;
  int reflexion_trials = 3;
  std::filesystem::path out_dir = "out";
  // Per-kind replacement format paragraphs, already read from disk.
  std::map<backbones::BackboneKind, std::string> instruction_overrides;
  std::string hash;

  backbones::Backbone backbone(backbones::BackboneKind kind) const;
};

using EnvLookup = std::function<std::optional<std::string>(const char* name)>;

// Reads the process environment.
std::optional<std::string> process_env(const char* name);

// Builds a config from defaults, then the file (if any), then `overrides`
// (same schema, e.g. built from flags), then REFLACT_API_KEY and
// REFLACT_BASE_URL from the environment.
// Errors, all Error{config}: SchemaError naming the field path;
// MissingSecret when a live backend has no API key.
CliConfig load_config(const std::optional<std::filesystem::path>& path, const nlohmann::json& overrides = {},
                      const EnvLookup& env = process_env);

// Same as load_config, from an in-memory document.
CliConfig config_from_json(const nlohmann::json& doc, const nlohmann::json& overrides = {},
                           const EnvLookup& env = process_env,
                           const std::filesystem::path& base_dir = std::filesystem::current_path());

// Hash over everything that can change episode content: backend identity and
// sampling, run config, override texts. Excludes secrets, output paths,
// concurrency, rate limits and the seed selection.
std::string config_hash(const CliConfig& cfg);

// Hex SHA-256.
std::string sha256_hex(const std::string& data);

// Redacted view for logs and headers.
nlohmann::json describe(const CliConfig& cfg);

// Backend for one episode. Scripted backends are built per task; a live
// backend is built once and shared.
runner::BackendFactory backend_factory(const CliConfig& cfg);

}  // namespace reflact::config
