#include <algorithm>
#include <string>

#include "reflact/serialize.hpp"
#include "reflact/taskgen.hpp"

namespace reflact::taskgen {
namespace {

using namespace world;

EntityRef ref_of(const Receptacle& r) { return {r.cls, r.index}; }
EntityRef ref_of(const Object& o) { return {o.cls, o.index}; }

[[noreturn]] void unsolvable(const TaskSpec& task, const std::string& why) {
  throw Error(ErrorCode::precondition, "Unsolvable: " + task.task_id + ": " + why);
}

// Applies actions to a private copy of the state, failing loudly on any
// rejected step.
class PlanBuilder {
 public:
  explicit PlanBuilder(const TaskSpec& task) : task_(task), state_(task.initial_state) {}

  void act(ActionCommand cmd) {
    auto r = step(state_, cmd);
    if (r.observation.nothing_happened) unsolvable(task_, "rejected oracle step '" + render_action(cmd) + "'");
    state_ = std::move(r.state);
    plan_.actions.push_back(std::move(cmd));
  }

  const WorldState& state() const { return state_; }

  const Receptacle* first_of_class(const std::string& cls) const {
    const Receptacle* best = nullptr;
    for (const auto& [id, r] : state_.receptacles) {
      if (r.cls == cls && (best == nullptr || entity_less(id, best->id()))) best = &r;
    }
    return best;
  }

  // First receptacle (entity order) holding an object of `cls`. Receptacles of
  // `skip_class` are only considered when nothing else qualifies.
  std::pair<const Receptacle*, const Object*> locate(const std::string& cls, const std::string& skip_class,
                                                     const std::vector<std::string>& exclude = {}) const {
    std::vector<std::string> ids;
    for (const auto& [id, r] : state_.receptacles) ids.push_back(id);
    std::sort(ids.begin(), ids.end(), entity_less);
    for (bool fallback : {false, true}) {
      for (const auto& id : ids) {
        const auto& r = state_.receptacles.at(id);
        if ((r.cls == skip_class) != fallback) continue;
        std::vector<std::string> contents = r.contents;
        std::sort(contents.begin(), contents.end(), entity_less);
        for (const auto& oid : contents) {
          const auto& o = state_.objects.at(oid);
          if (o.cls == cls && std::find(exclude.begin(), exclude.end(), oid) == exclude.end()) return {&r, &o};
        }
      }
    }
    return {nullptr, nullptr};
  }

  void household_go(Receptacle r) {
    if (state_.agent_location != r.id()) act({Verb::go_to, {ref_of(r)}});
    const auto& now = state_.receptacles.at(r.id());
    if (now.openable && !now.is_open) act({Verb::open, {ref_of(now)}});
  }

  void science_go(Receptacle r) {
    if (state_.agent_location != r.room) act({Verb::teleport, {EntityRef{r.room, std::nullopt}}});
  }

  OraclePlan finish() {
    ProgressReport report;
    WorldState replay = task_.initial_state;
    for (const auto& a : plan_.actions) {
      replay = step(replay, a).state;
      report = evaluate_goal(replay, task_.goal, report);
    }
    if (!report.success) unsolvable(task_, "plan does not reach the goal");
    plan_.expected_steps = static_cast<int>(plan_.actions.size());
    return std::move(plan_);
  }

  OraclePlan& plan() { return plan_; }

 private:
  const TaskSpec& task_;
  WorldState state_;
  OraclePlan plan_;
};

Verb device_verb(TaskType type) {
  switch (type) {
    case TaskType::clean: return Verb::clean;
    case TaskType::heat: return Verb::heat;
    default: return Verb::cool;
  }
}

std::string household_device(TaskType type) {
  switch (type) {
    case TaskType::clean: return "sinkbasin";
    case TaskType::heat: return "microwave";
    default: return "fridge";
  }
}

std::string science_device(TaskType type) {
  switch (type) {
    case TaskType::clean: return "sink";
    case TaskType::heat: return "stove";
    default: return "fridge";
  }
}

OraclePlan solve_household(const TaskSpec& task) {
  PlanBuilder b(task);
  const auto& goal = task.goal;
  const std::string& obj = goal.target_object_class;
  const int needed = task.task_type == TaskType::put_two ? 2 : 1;

  std::vector<std::string> delivered;
  for (int n = 0; n < needed; ++n) {
    const auto [holder, target] = b.locate(obj, goal.target_receptacle, delivered);
    if (holder == nullptr) unsolvable(task, "no reachable " + obj);
    const Receptacle source = *holder;
    const Object item = *target;
    b.household_go(source);
    b.act({Verb::take, {ref_of(item), ref_of(source)}});
    ++b.plan().receptacles_searched;

    if (task.task_type == TaskType::examine) {
      const Receptacle* lamp_spot = nullptr;
      const Object* lamp = nullptr;
      for (const auto& [id, r] : b.state().receptacles) {
        for (const auto& oid : r.contents) {
          const auto& o = b.state().objects.at(oid);
          if (o.cls == "desklamp" && lamp == nullptr) {
            lamp = &o;
            lamp_spot = &r;
          }
        }
      }
      if (lamp == nullptr) unsolvable(task, "no desklamp in scene");
      const Object lamp_copy = *lamp;
      b.household_go(*lamp_spot);
      b.act({Verb::use, {ref_of(lamp_copy)}});
      continue;
    }

    if (task.task_type == TaskType::clean || task.task_type == TaskType::heat || task.task_type == TaskType::cool) {
      const Receptacle* device = b.first_of_class(household_device(task.task_type));
      if (device == nullptr) unsolvable(task, "missing device");
      const Receptacle dev = *device;
      if (b.state().agent_location != dev.id()) b.act({Verb::go_to, {ref_of(dev)}});
      b.act({device_verb(task.task_type), {ref_of(item), ref_of(dev)}});
    }

    const Receptacle* dest = b.first_of_class(goal.target_receptacle);
    if (dest == nullptr) unsolvable(task, "missing destination " + goal.target_receptacle);
    const Receptacle d = *dest;
    b.household_go(d);
    b.act({Verb::put, {ref_of(item), ref_of(d)}});
    delivered.push_back(item.id());
  }
  return b.finish();
}

OraclePlan solve_science(const TaskSpec& task) {
  PlanBuilder b(task);
  const auto& goal = task.goal;
  const auto [holder, target] = b.locate(goal.target_object_class, goal.target_receptacle);
  if (holder == nullptr) unsolvable(task, "no reachable " + goal.target_object_class);
  const Receptacle source = *holder;
  const Object item = *target;

  b.science_go(source);
  b.act({Verb::focus, {ref_of(item)}});
  b.act({Verb::pick_up, {ref_of(item)}});
  ++b.plan().receptacles_searched;

  if (task.task_type != TaskType::put) {
    const Receptacle* device = b.first_of_class(science_device(task.task_type));
    if (device == nullptr) unsolvable(task, "missing device");
    const Receptacle dev = *device;
    b.science_go(dev);
    b.act({Verb::move, {ref_of(item), ref_of(dev)}});
    b.act({Verb::activate, {ref_of(dev)}});
    b.act({Verb::pick_up, {ref_of(item)}});
  }

  const Receptacle* dest = b.first_of_class(goal.target_receptacle);
  if (dest == nullptr) unsolvable(task, "missing destination " + goal.target_receptacle);
  const Receptacle d = *dest;
  b.science_go(d);
  b.act({Verb::move, {ref_of(item), ref_of(d)}});
  return b.finish();
}

}  // namespace

OraclePlan oracle_solve(const TaskSpec& task) {
  return task.initial_state.flavor == EnvFlavor::household ? solve_household(task) : solve_science(task);
}

int oracle_step_bound(RewardFlavor flavor, int receptacles_searched) {
  return 2 + 2 * receptacles_searched + (flavor == RewardFlavor::binary ? 4 : 8);
}

VerifyReport verify_solvable(std::uint64_t begin, std::uint64_t end, TaskType type, RewardFlavor flavor,
                             const Generator& gen, int step_budget) {
  VerifyReport report;
  for (std::uint64_t seed = begin; seed < end; ++seed) {
    ++report.checked;
    auto fail = [&](std::string why) { report.failures.push_back({seed, type, std::move(why)}); };
    try {
      const TaskSpec task = gen(seed, type, flavor);
      task.initial_state.validate();
      task.goal.validate();
      const OraclePlan plan = oracle_solve(task);
      WorldState s = task.initial_state;
      ProgressReport progress;
      bool clean = true;
      for (const auto& a : plan.actions) {
        auto r = step(s, a);
        if (r.observation.nothing_happened) {
          fail("invalid oracle step '" + render_action(a) + "'");
          clean = false;
          break;
        }
        s = std::move(r.state);
        progress = evaluate_goal(s, task.goal, progress);
      }
      if (!clean) continue;
      if (!progress.success) {
        fail("replayed plan does not succeed");
      } else if (plan.expected_steps > oracle_step_bound(flavor, plan.receptacles_searched)) {
        fail("plan length " + std::to_string(plan.expected_steps) + " exceeds bound");
      } else if (plan.expected_steps > step_budget) {
        fail("plan length exceeds step budget");
      }
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }
  return report;
}

}  // namespace reflact::taskgen
