#include <cmath>
#include <string>

#include "reflact/world.hpp"

namespace reflact::world {

std::string_view to_string(RewardFlavor flavor) { return flavor == RewardFlavor::binary ? "binary" : "dense"; }

RewardFlavor reward_flavor_from_string(std::string_view name) {
  if (name == "binary") return RewardFlavor::binary;
  if (name == "dense") return RewardFlavor::dense;
  throw Error(ErrorCode::invalid_argument, "unknown reward flavor: " + std::string(name));
}

EnvFlavor env_flavor_for(RewardFlavor flavor) {
  return flavor == RewardFlavor::binary ? EnvFlavor::household : EnvFlavor::science;
}

std::string_view to_string(TaskType type) {
  switch (type) {
    case TaskType::put: return "put";
    case TaskType::clean: return "clean";
    case TaskType::heat: return "heat";
    case TaskType::cool: return "cool";
    case TaskType::examine: return "examine";
    case TaskType::put_two: return "puttwo";
  }
  return "?";
}

TaskType task_type_from_string(std::string_view name) {
  for (TaskType t : kAllTaskTypes) {
    if (to_string(t) == name) return t;
  }
  throw Error(ErrorCode::invalid_argument, "unknown task type: " + std::string(name));
}

std::string_view to_string(PredicateKind kind) {
  switch (kind) {
    case PredicateKind::in_receptacle: return "in_receptacle";
    case PredicateKind::held: return "held";
    case PredicateKind::has_condition: return "has_condition";
    case PredicateKind::focused: return "focused";
  }
  return "?";
}

PredicateKind predicate_kind_from_string(std::string_view name) {
  for (PredicateKind k : {PredicateKind::in_receptacle, PredicateKind::held, PredicateKind::has_condition,
                          PredicateKind::focused}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::invalid_argument, "unknown predicate: " + std::string(name));
}

bool Checkpoint::satisfied(const WorldState& state) const {
  auto matches = [&](const Object& o) {
    return o.cls == object_class && (!condition || o.conditions.has(*condition));
  };
  switch (kind) {
    case PredicateKind::in_receptacle: {
      int n = 0;
      for (const auto& [id, r] : state.receptacles) {
        if (r.cls != receptacle_class) continue;
        for (const auto& oid : r.contents) {
          if (matches(state.objects.at(oid))) ++n;
        }
      }
      return n >= count;
    }
    case PredicateKind::held:
      for (const auto& oid : state.inventory) {
        if (matches(state.objects.at(oid))) return true;
      }
      return false;
    case PredicateKind::has_condition:
      for (const auto& [id, o] : state.objects) {
        if (matches(o)) return true;
      }
      return false;
    case PredicateKind::focused:
      return state.focus && state.objects.contains(*state.focus) && matches(state.objects.at(*state.focus));
  }
  return false;
}

void GoalSpec::validate() const {
  if (checkpoints.empty()) throw Error(ErrorCode::invalid_argument, "goal has no checkpoints");
  double total = 0.0;
  for (const auto& c : checkpoints) {
    if (c.weight < 0.0) throw Error(ErrorCode::invalid_argument, "negative checkpoint weight");
    total += c.weight;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_argument, "checkpoint weights sum to " + std::to_string(total));
  }
  if (!(success_threshold > 0.0 && success_threshold <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "success threshold outside (0, 1]");
  }
}

bool meets_threshold(double progress, double threshold) { return progress >= threshold - kThresholdEpsilon; }

ProgressReport evaluate_goal(const WorldState& state, const GoalSpec& goal, const ProgressReport& prior) {
  ProgressReport report;
  report.latched_checkpoints = prior.latched_checkpoints;
  for (std::size_t i = 0; i < goal.checkpoints.size(); ++i) {
    if (goal.checkpoints[i].satisfied(state)) report.latched_checkpoints.insert(i);
  }
  double sum = 0.0;
  for (std::size_t i : report.latched_checkpoints) {
    if (i < goal.checkpoints.size()) sum += goal.checkpoints[i].weight;
  }
  report.progress = std::min(1.0, sum);
  report.success = meets_threshold(report.progress, goal.success_threshold);
  return report;
}

}  // namespace reflact::world
