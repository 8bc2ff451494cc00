#pragma once

// Reasoning-acting loop for one episode, suites of episodes, and the
// multi-trial Reflexion protocol.

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reflact/backbones.hpp"
#include "reflact/gateway.hpp"
#include "reflact/taskgen.hpp"

namespace reflact::runner {

using backbones::Backbone;
using backbones::BackboneKind;
using gateway::ActionDistribution;
using gateway::Backend;
using gateway::CompletionResult;
using gateway::Usage;
using taskgen::TaskSpec;

inline constexpr int kTrajectorySchemaVersion = 1;

struct RunConfig {
  int step_budget = 40;
  int retry_on_format_error = 1;
  int parallel_episodes = 1;
  double gamma = 1.0;
  bool record_distributions = false;
  gateway::CompletionParams params;

  // Throws Error{config} ("InvalidConfig").
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

struct StepRecord {
  int t = 1;
  std::optional<std::string> reasoning;
  // Empty when the output never yielded an action.
  std::string action;
  std::optional<world::ActionCommand> parsed;
  std::string observation;
  bool nothing_happened = false;
  double progress = 0.0;
  // Summed over all completions of the turn when any reported usage.
  std::optional<Usage> usage;
  std::optional<ActionDistribution> distribution;
  bool lenient_parse = false;
  // Every completion requested at this turn, corrective retries included.
  std::vector<CompletionResult> completions;
  bool format_failure = false;

  bool operator==(const StepRecord&) const = default;
};

enum class TerminatedBy { goal, budget, backend_error };

std::string_view to_string(TerminatedBy t);
TerminatedBy terminated_by_from_string(std::string_view name);

struct Trajectory {
  TaskSpec task;
  Backbone backbone;
  nlohmann::json backend;
  std::string config_hash;
  RunConfig config;
  std::vector<std::string> memory;
  std::vector<StepRecord> steps;
  double final_progress = 0.0;
  bool success = false;
  TerminatedBy terminated_by = TerminatedBy::budget;
  std::optional<std::string> error;
  // Not persisted; replays would otherwise never match byte for byte.
  double wall_time_s = 0.0;
};

// Header line, one line per step, footer line. Each line ends with '\n'.
std::string to_jsonl(const Trajectory& traj);
// Throws Error{invalid_argument} on malformed input.
Trajectory trajectory_from_jsonl(const std::string& text);

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory(const std::filesystem::path& path);

// Context the agent saw before step t (1-based); t = steps.size() + 1 gives
// the context after the last step.
backbones::Context context_at(const Trajectory& traj, int t);
backbones::Context initial_context(const TaskSpec& task, const Backbone& backbone,
                                   const std::vector<std::string>& memory);

struct ReflexionMemory {
  static constexpr std::size_t kCap = 3;

  std::string task_id;
  std::vector<std::string> reflections;
  int trial_index = 0;

  // Drops the oldest reflection once the cap is reached.
  void add(std::string reflection);
};

Trajectory run_episode(const TaskSpec& task, const Backbone& backbone, Backend& backend, const RunConfig& cfg,
                       const ReflexionMemory* memory = nullptr, const std::string& config_hash = {});

// Backend that feeds back exactly what the trajectory recorded.
gateway::ReplayBackend replay_backend_for(const Trajectory& traj);

// Re-runs a stored trajectory against its replay backend.
Trajectory replay(const Trajectory& traj);

using BackendFactory = std::function<std::shared_ptr<Backend>(const TaskSpec& task, BackboneKind kind)>;

struct KindSummary {
  BackboneKind kind = BackboneKind::reflact;
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double average_reward = 0.0;
};

struct ResultSet {
  std::string config_hash;
  // Ordered by (task_id, kind).
  std::vector<Trajectory> trajectories;
  std::vector<KindSummary> summaries;
  // Episodes not run because of cancellation.
  std::size_t pending = 0;
};

std::vector<KindSummary> summarize(const std::vector<Trajectory>& trajectories);

struct SuiteOptions {
  // When set, each finished episode is written to trajectories/ under it and
  // manifest.json is kept current. Episodes already on disk with the same
  // config hash are loaded instead of re-run.
  std::optional<std::filesystem::path> out_dir;
  std::string config_hash;
  const std::atomic<bool>* cancel = nullptr;
  std::function<void(const Trajectory&)> on_episode;
};

std::string trajectory_filename(const std::string& task_id, BackboneKind kind);

// Throws Error{config} ("InvalidConfig") when tasks or backbones are empty.
ResultSet run_suite(const std::vector<TaskSpec>& tasks, const std::vector<Backbone>& backbones,
                    const BackendFactory& factory, const RunConfig& cfg, const SuiteOptions& options = {});

nlohmann::json manifest_json(const ResultSet& results, const std::vector<std::string>& files);

// Loads every trajectory listed in out_dir/manifest.json, or every *.jsonl
// under out_dir/trajectories when there is no manifest.
ResultSet load_results(const std::filesystem::path& out_dir);

// Messages sent for a post-failure reflection.
Messages reflection_messages(const Trajectory& traj);

// Throws Error{precondition} on a successful trajectory.
std::string reflect_on_failure(const Trajectory& traj, Backend& backend,
                               const gateway::CompletionParams& params = {});

struct TrialResult {
  int trial = 0;
  bool skipped = false;
  bool success = false;
  std::optional<Trajectory> trajectory;
  std::optional<std::string> reflection;
};

struct ReflexionResult {
  std::vector<TrialResult> trials;
  ReflexionMemory memory;
  std::optional<std::string> error;
};

// Trials continue after success only as skipped entries.
ReflexionResult run_reflexion(const TaskSpec& task, const Backbone& backbone, Backend& backend, const RunConfig& cfg,
                              int n_trials = 3, const std::string& config_hash = {});

}  // namespace reflact::runner
