#pragma once

// Seeded scene/goal generation and a full-visibility oracle solver.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "reflact/world.hpp"

namespace reflact::taskgen {

using world::ActionCommand;
using world::GoalSpec;
using world::RewardFlavor;
using world::TaskType;
using world::WorldState;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kPrngAlgorithm = "mt19937_64/rejection-v1";

struct TaskSpec {
  std::string task_id;
  std::uint64_t seed = 0;
  RewardFlavor flavor = RewardFlavor::binary;
  TaskType task_type = TaskType::put;
  // Full line as shown to the agent, "Your task is to: ...".
  std::string instruction_text;
  WorldState initial_state;
  GoalSpec goal;
  std::string prng = kPrngAlgorithm;
  int schema_version = kSchemaVersion;

  bool operator==(const TaskSpec&) const = default;
};

nlohmann::json to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& j);
// Canonical serialization (sorted keys, no whitespace).
std::string serialize(const TaskSpec& task);

// std::mt19937_64 output is fixed by the standard; bounded draws use our own
// rejection step because std distributions differ across library vendors.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  std::size_t below(std::size_t n);
  bool chance(std::size_t numerator, std::size_t denominator) { return below(denominator) < numerator; }

  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items.at(below(items.size()));
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

// Throws Error{unsupported} ("UnsupportedTaskType") for examine/puttwo in the dense flavor.
TaskSpec generate(std::uint64_t seed, TaskType type, RewardFlavor flavor);

bool supports(TaskType type, RewardFlavor flavor);

struct OraclePlan {
  std::vector<ActionCommand> actions;
  int expected_steps = 0;
  // Receptacles the oracle takes a target from.
  int receptacles_searched = 0;
};

// Throws Error{precondition} ("Unsolvable") when the plan cannot reach the goal.
OraclePlan oracle_solve(const TaskSpec& task);

// Upper bound on oracle plan length for the task's flavor.
int oracle_step_bound(RewardFlavor flavor, int receptacles_searched);

struct VerifyFailure {
  std::uint64_t seed = 0;
  TaskType task_type = TaskType::put;
  std::string reason;
};

struct VerifyReport {
  std::size_t checked = 0;
  std::vector<VerifyFailure> failures;
  bool ok() const { return failures.empty(); }
};

using Generator = std::function<TaskSpec(std::uint64_t, TaskType, RewardFlavor)>;

// Seeds in [begin, end). Generates, solves, replays and checks the plan bound.
VerifyReport verify_solvable(std::uint64_t begin, std::uint64_t end, TaskType type, RewardFlavor flavor,
                             const Generator& gen = generate, int step_budget = 40);

}  // namespace reflact::taskgen
