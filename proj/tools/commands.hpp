#pragma once

#include <string>
#include <vector>

#include <json.hpp>

// Exit codes: 0 success, 1 task failure, 2 configuration or usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitTask = 1;
inline constexpr int kExitConfig = 2;

// Settings shared by the commands that build a configuration.
struct ConfigFlags {
  std::string config_path;
  nlohmann::json overrides = nlohmann::json::object();
};

struct GenArgs {
  ConfigFlags cfg;
};

struct RunArgs {
  ConfigFlags cfg;
  bool quiet = false;
};

struct ReplayArgs {
  std::vector<std::string> inputs;
};

struct AnalyzeArgs {
  std::vector<std::string> inputs;
  std::string compare;
  std::string out;
  bool force = false;
};

struct ProbeArgs {
  ConfigFlags cfg;
  std::string input;
  int t = 1;
  std::vector<std::string> thoughts;
  std::string variants_file;
  std::string out;
};

struct TaskArgs {
  std::string task_file;
  unsigned long long seed = 0;
  std::string task_type = "put";
  std::string flavor = "binary";
};

struct VerifyArgs {
  std::string seeds = "0..999";
  std::string types = "all";
  std::string flavor = "binary";
  int step_budget = 40;
};

int cmd_gen(const GenArgs& args);
int cmd_run(const RunArgs& args);
int cmd_reflexion(const RunArgs& args);
int cmd_replay(const ReplayArgs& args);
int cmd_analyze(const AnalyzeArgs& args);
int cmd_probe(const ProbeArgs& args);
int cmd_serve(const TaskArgs& args);
int cmd_play(const TaskArgs& args);
int cmd_verify(const VerifyArgs& args);
