#include "reflact/config.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "reflact/error.hpp"

namespace reflact::config {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::config, "SchemaError: " + path + ": " + what);
}

std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

void check_fields(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  if (!obj.is_object()) schema_error(path.empty() ? "(root)" : path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) schema_error(join_path(path, key), "unknown field");
  }
}

const json* field(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) schema_error(path, "expected a string");
  return v.get<std::string>();
}

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) schema_error(path, "expected a number");
  return v.get<double>();
}

int get_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) schema_error(path, "expected an integer");
  return v.get<int>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) schema_error(path, "expected a boolean");
  return v.get<bool>();
}

template <typename T, typename F>
std::vector<T> get_enum_list(const json& v, const std::string& path, F convert) {
  if (!v.is_array() || v.empty()) schema_error(path, "expected a non-empty array of strings");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const std::string name = get_string(v[i], p);
    try {
      const T value = convert(name);
      if (std::find(out.begin(), out.end(), value) == out.end()) out.push_back(value);
    } catch (const Error&) {
      schema_error(p, "unknown value '" + name + "'");
    }
  }
  return out;
}

std::string read_text(const fs::path& p, const std::string& schema_path) {
  std::ifstream in(p, std::ios::binary);
  if (!in) schema_error(schema_path, "cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string s = buf.str();
  if (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

std::uint64_t parse_u64(const std::string& s, const std::string& whole) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    schema_error("suite.seeds", "malformed seed range '" + whole + "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    schema_error("suite.seeds", "seed out of range in '" + whole + "'");
  }
}

}  // namespace

std::string_view to_string(BackendKind kind) { return kind == BackendKind::live ? "live" : "scripted"; }

SeedRange parse_seed_range(const std::string& text) {
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    const std::uint64_t a = parse_u64(text, text);
    return {a, a + 1};
  }
  const std::uint64_t a = parse_u64(text.substr(0, dots), text);
  const std::uint64_t b = parse_u64(text.substr(dots + 2), text);
  if (b < a) schema_error("suite.seeds", "empty seed range '" + text + "'");
  return {a, b + 1};
}

backbones::Backbone CliConfig::backbone(backbones::BackboneKind kind) const {
  backbones::Backbone b{kind, std::nullopt};
  const auto it = instruction_overrides.find(kind);
  if (it != instruction_overrides.end()) b.instruction_override = it->second;
  return b;
}

std::optional<std::string> process_env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

CliConfig config_from_json(const json& doc, const json& overrides, const EnvLookup& env, const fs::path& base_dir) {
  json merged = doc.is_null() ? json::object() : doc;
  if (!merged.is_object()) schema_error("(root)", "expected an object");
  if (!overrides.is_null()) {
    if (!overrides.is_object()) schema_error("(overrides)", "expected an object");
    merged.merge_patch(overrides);
  }
  check_fields(merged, "", {"backend", "suite", "run", "reflexion", "out", "instruction_overrides"});

  CliConfig cfg;
  if (const json* b = field(merged, "backend")) {
    check_fields(*b, "backend",
                 {"kind", "policy", "base_url", "model", "api_key", "temperature", "max_tokens", "timeout_ms",
                  "max_attempts", "backoff_ms", "requests_per_second", "max_in_flight"});
    if (const json* v = field(*b, "kind")) {
      const std::string k = get_string(*v, "backend.kind");
      if (k == "scripted") {
        cfg.backend.kind = BackendKind::scripted;
      } else if (k == "live") {
        cfg.backend.kind = BackendKind::live;
      } else {
        schema_error("backend.kind", "unknown value '" + k + "' (scripted, live)");
      }
    }
    if (const json* v = field(*b, "policy")) {
      const std::string p = get_string(*v, "backend.policy");
      try {
        cfg.backend.policy = gateway::scripted_policy_from_string(p);
      } catch (const Error&) {
        schema_error("backend.policy", "unknown value '" + p + "'");
      }
    }
    auto& live = cfg.backend.live;
    if (const json* v = field(*b, "base_url")) live.base_url = get_string(*v, "backend.base_url");
    if (const json* v = field(*b, "model")) live.model = get_string(*v, "backend.model");
    if (const json* v = field(*b, "api_key")) live.api_key = get_string(*v, "backend.api_key");
    if (const json* v = field(*b, "temperature")) cfg.run.params.temperature = get_number(*v, "backend.temperature");
    if (const json* v = field(*b, "max_tokens")) cfg.run.params.max_tokens = get_int(*v, "backend.max_tokens");
    if (const json* v = field(*b, "timeout_ms")) live.timeout_ms = get_int(*v, "backend.timeout_ms");
    if (const json* v = field(*b, "max_attempts")) live.max_attempts = get_int(*v, "backend.max_attempts");
    if (const json* v = field(*b, "backoff_ms")) live.backoff_ms = get_int(*v, "backend.backoff_ms");
    if (const json* v = field(*b, "requests_per_second")) {
      live.requests_per_second = get_number(*v, "backend.requests_per_second");
    }
    if (const json* v = field(*b, "max_in_flight")) live.max_in_flight = get_int(*v, "backend.max_in_flight");
  }

  if (const json* s = field(merged, "suite")) {
    check_fields(*s, "suite", {"seeds", "task_types", "flavors", "kinds"});
    if (const json* v = field(*s, "seeds")) {
      if (v->is_number_unsigned()) {
        cfg.suite.seeds = {v->get<std::uint64_t>(), v->get<std::uint64_t>() + 1};
      } else {
        cfg.suite.seeds = parse_seed_range(get_string(*v, "suite.seeds"));
      }
    }
    if (const json* v = field(*s, "task_types")) {
      cfg.suite.task_types = get_enum_list<world::TaskType>(*v, "suite.task_types", world::task_type_from_string);
    }
    if (const json* v = field(*s, "flavors")) {
      cfg.suite.flavors = get_enum_list<world::RewardFlavor>(*v, "suite.flavors", world::reward_flavor_from_string);
    }
    if (const json* v = field(*s, "kinds")) {
      cfg.suite.kinds = get_enum_list<backbones::BackboneKind>(*v, "suite.kinds", backbones::kind_from_string);
    }
  }

  if (const json* r = field(merged, "run")) {
    check_fields(*r, "run", {"step_budget", "retry_on_format_error", "parallel_episodes", "gamma", "record_distributions"});
    if (const json* v = field(*r, "step_budget")) cfg.run.step_budget = get_int(*v, "run.step_budget");
    if (const json* v = field(*r, "retry_on_format_error")) {
      cfg.run.retry_on_format_error = get_int(*v, "run.retry_on_format_error");
    }
    if (const json* v = field(*r, "parallel_episodes")) cfg.run.parallel_episodes = get_int(*v, "run.parallel_episodes");
    if (const json* v = field(*r, "gamma")) cfg.run.gamma = get_number(*v, "run.gamma");
    if (const json* v = field(*r, "record_distributions")) {
      cfg.run.record_distributions = get_bool(*v, "run.record_distributions");
    }
  }

  if (const json* r = field(merged, "reflexion")) {
    check_fields(*r, "reflexion", {"trials"});
    if (const json* v = field(*r, "trials")) cfg.reflexion_trials = get_int(*v, "reflexion.trials");
    if (cfg.reflexion_trials < 1) schema_error("reflexion.trials", "must be >= 1");
  }

  if (const json* v = field(merged, "out")) cfg.out_dir = get_string(*v, "out");

  if (const json* o = field(merged, "instruction_overrides")) {
    if (!o->is_object()) schema_error("instruction_overrides", "expected an object");
    for (const auto& [key, value] : o->items()) {
      const std::string path = "instruction_overrides." + key;
      backbones::BackboneKind kind;
      try {
        kind = backbones::kind_from_string(key);
      } catch (const Error&) {
        schema_error(path, "unknown field");
      }
      fs::path file = get_string(value, path);
      if (file.is_relative()) file = base_dir / file;
      cfg.instruction_overrides[kind] = read_text(file, path);
    }
  }

  try {
    cfg.run.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::config, std::string("SchemaError: run: ") + e.what());
  }

  if (auto key = env("REFLACT_API_KEY")) cfg.backend.live.api_key = *key;
  if (auto url = env("REFLACT_BASE_URL")) cfg.backend.live.base_url = *url;
  cfg.backend.live.temperature = cfg.run.params.temperature;
  cfg.backend.live.max_tokens = cfg.run.params.max_tokens;

  if (cfg.backend.kind == BackendKind::live) {
    if (cfg.backend.live.base_url.empty()) schema_error("backend.base_url", "required for a live backend");
    if (cfg.backend.live.model.empty()) schema_error("backend.model", "required for a live backend");
    if (cfg.backend.live.api_key.empty()) {
      throw Error(ErrorCode::config, "MissingSecret: a live backend needs an API key in REFLACT_API_KEY");
    }
    if (cfg.backend.live.max_attempts < 1) schema_error("backend.max_attempts", "must be >= 1");
    if (cfg.backend.live.max_in_flight < 1) schema_error("backend.max_in_flight", "must be >= 1");
    if (cfg.backend.live.requests_per_second < 0) schema_error("backend.requests_per_second", "must be >= 0");
  }

  cfg.hash = config_hash(cfg);
  return cfg;
}

CliConfig load_config(const std::optional<fs::path>& path, const json& overrides, const EnvLookup& env) {
  if (!path) return config_from_json(json::object(), overrides, env);
  std::ifstream in(*path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config, "SchemaError: (file): cannot read " + path->string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::config, "SchemaError: (file): invalid JSON: " + std::string(e.what()));
  }
  return config_from_json(doc, overrides, env, path->has_parent_path() ? path->parent_path() : fs::current_path());
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::internal, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string config_hash(const CliConfig& cfg) {
  json backend = {{"kind", to_string(cfg.backend.kind)}};
  if (cfg.backend.kind == BackendKind::scripted) {
    backend["policy"] = gateway::to_string(cfg.backend.policy);
  } else {
    backend["base_url"] = cfg.backend.live.base_url;
    backend["model"] = cfg.backend.live.model;
  }
  json overrides = json::object();
  for (const auto& [kind, text] : cfg.instruction_overrides) overrides[std::string(backbones::to_string(kind))] = text;
  const json doc = {{"schema_version", runner::kTrajectorySchemaVersion},
                    {"backend", backend},
                    {"run", runner::to_json(cfg.run)},
                    {"instruction_overrides", overrides}};
  return sha256_hex(doc.dump()).substr(0, 16);
}

json describe(const CliConfig& cfg) {
  json kinds = json::array();
  for (auto k : cfg.suite.kinds) kinds.push_back(backbones::to_string(k));
  json types = json::array();
  for (auto t : cfg.suite.task_types) types.push_back(world::to_string(t));
  json flavors = json::array();
  for (auto f : cfg.suite.flavors) flavors.push_back(world::to_string(f));
  json backend = {{"kind", to_string(cfg.backend.kind)}};
  if (cfg.backend.kind == BackendKind::scripted) {
    backend["policy"] = gateway::to_string(cfg.backend.policy);
  } else {
    backend["base_url"] = cfg.backend.live.base_url;
    backend["model"] = cfg.backend.live.model;
    backend["api_key"] = cfg.backend.live.api_key.empty() ? "" : "(set)";
    backend["requests_per_second"] = cfg.backend.live.requests_per_second;
    backend["max_in_flight"] = cfg.backend.live.max_in_flight;
  }
  json run = runner::to_json(cfg.run);
  run["parallel_episodes"] = cfg.run.parallel_episodes;
  return {{"backend", backend},
          {"suite",
           {{"seeds", std::to_string(cfg.suite.seeds.begin) + ".." + std::to_string(cfg.suite.seeds.end - 1)},
            {"task_types", types},
            {"flavors", flavors},
            {"kinds", kinds}}},
          {"run", run},
          {"reflexion", {{"trials", cfg.reflexion_trials}}},
          {"out", cfg.out_dir.string()},
          {"config_hash", cfg.hash}};
}

runner::BackendFactory backend_factory(const CliConfig& cfg) {
  if (cfg.backend.kind == BackendKind::scripted) {
    const auto policy = cfg.backend.policy;
    return [policy](const taskgen::TaskSpec& task, backbones::BackboneKind kind) {
      return std::make_shared<gateway::ScriptedBackend>(task, kind, policy);
    };
  }
  auto shared = std::make_shared<gateway::LiveBackend>(cfg.backend.live);
  return [shared](const taskgen::TaskSpec&, backbones::BackboneKind) { return shared; };
}

}  // namespace reflact::config
