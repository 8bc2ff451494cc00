#include <algorithm>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "reflact/serialize.hpp"
#include "reflact/taskgen.hpp"

namespace reflact::taskgen {
namespace {

using namespace world;

enum class Openable { never, always, random };

struct RecepTemplate {
  const char* cls;
  int count;
  Openable openable;
  const char* room = "room";
};

const std::vector<RecepTemplate> kBathroom = {
    {"cabinet", 4, Openable::random}, {"countertop", 1, Openable::never},      {"garbagecan", 1, Openable::never},
    {"handtowelholder", 2, Openable::never}, {"sinkbasin", 2, Openable::never}, {"toilet", 1, Openable::never},
    {"toiletpaperhanger", 1, Openable::never}, {"towelholder", 1, Openable::never},
};

const std::vector<RecepTemplate> kKitchen = {
    {"cabinet", 6, Openable::random},      {"coffeemachine", 1, Openable::never}, {"countertop", 2, Openable::never},
    {"diningtable", 1, Openable::never},   {"drawer", 2, Openable::always},       {"fridge", 1, Openable::always},
    {"garbagecan", 1, Openable::never},    {"microwave", 1, Openable::always},    {"shelf", 2, Openable::never},
    {"sinkbasin", 1, Openable::never},     {"stoveburner", 2, Openable::never},   {"toaster", 1, Openable::never},
};

const std::vector<RecepTemplate> kBedroom = {
    {"bed", 1, Openable::never},      {"desk", 2, Openable::never},          {"drawer", 4, Openable::always},
    {"dresser", 1, Openable::never},  {"garbagecan", 1, Openable::never},    {"laundryhamper", 1, Openable::never},
    {"shelf", 3, Openable::never},    {"sidetable", 1, Openable::never},
};

const std::vector<RecepTemplate> kLab = {
    {"counter", 1, Openable::never, "kitchen"},     {"cupboard", 1, Openable::never, "kitchen"},
    {"fridge", 1, Openable::never, "kitchen"},      {"sink", 1, Openable::never, "kitchen"},
    {"stove", 1, Openable::never, "kitchen"},       {"table", 1, Openable::never, "kitchen"},
    {"toolbox", 1, Openable::never, "workshop"},    {"workbench", 1, Openable::never, "workshop"},
    {"bed", 1, Openable::never, "bedroom"},         {"closet", 1, Openable::never, "bedroom"},
    {"bathtub", 1, Openable::never, "bathroom"},    {"sink", 1, Openable::never, "bathroom"},
    {"flowerpot", 2, Openable::never, "greenhouse"}, {"shelf", 1, Openable::never, "greenhouse"},
    {"bookcase", 1, Openable::never, "hallway"},    {"firepit", 1, Openable::never, "outside"},
    {"ground", 1, Openable::never, "outside"},
};

const std::vector<std::string> kLabRooms = {"kitchen", "workshop", "bedroom", "bathroom",
                                            "greenhouse", "hallway", "outside"};

using Pool = std::vector<std::string>;

const Pool kBathroomObjects = {"candle", "cloth", "handtowel", "soapbar", "soapbottle",
                               "spraybottle", "toiletpaper", "towel"};
const Pool kKitchenObjects = {"apple", "bread", "butterknife", "cup", "egg", "fork", "knife", "lettuce",
                              "mug", "pan", "plate", "pot", "potato", "spatula", "spoon", "tomato"};
const Pool kBedroomObjects = {"alarmclock", "book", "cd", "cellphone", "creditcard",
                              "keychain", "laptop", "pen", "pencil", "pillow"};
const Pool kLabObjects = {"apple", "banana", "book", "chocolate", "cup", "metalpot", "orange", "plate", "potato"};

struct TypeRecipe {
  const std::vector<RecepTemplate>* scene;
  const Pool* objects;
  Pool targets;
  Pool destinations;
};

TypeRecipe household_recipe(TaskType type, Prng& rng) {
  switch (type) {
    case TaskType::put:
      return {&kBathroom, &kBathroomObjects, {"candle", "cloth", "soapbar", "soapbottle", "spraybottle", "toiletpaper"},
              {"cabinet", "countertop", "garbagecan", "toilet"}};
    case TaskType::clean:
      if (rng.chance(1, 2)) {
        return {&kBathroom, &kBathroomObjects, {"cloth", "soapbar"}, {"cabinet", "countertop", "toilet"}};
      }
      return {&kKitchen, &kKitchenObjects, {"apple", "cup", "lettuce", "mug", "pan", "plate", "potato", "tomato"},
              {"cabinet", "countertop", "diningtable", "shelf"}};
    case TaskType::heat:
      return {&kKitchen, &kKitchenObjects, {"apple", "bread", "cup", "egg", "mug", "potato", "tomato"},
              {"cabinet", "countertop", "diningtable", "garbagecan", "shelf"}};
    case TaskType::cool:
      return {&kKitchen, &kKitchenObjects, {"apple", "bread", "cup", "lettuce", "mug", "pan", "potato", "tomato"},
              {"cabinet", "countertop", "diningtable", "garbagecan", "shelf"}};
    case TaskType::examine:
      return {&kBedroom, &kBedroomObjects, {"alarmclock", "book", "cd", "cellphone", "creditcard", "keychain", "pen"},
              {"desklamp"}};
    case TaskType::put_two:
      return {&kBedroom, &kBedroomObjects, {"book", "cd", "cellphone", "creditcard", "keychain", "pen", "pencil"},
              {"bed", "desk", "dresser", "garbagecan", "shelf", "sidetable"}};
  }
  throw Error(ErrorCode::internal, "unhandled task type");
}

WorldState build_scene(const std::vector<RecepTemplate>& scene, EnvFlavor flavor, Prng& rng) {
  WorldState s;
  s.flavor = flavor;
  std::map<std::string, int> next_index;
  for (const auto& t : scene) {
    if (std::find(s.rooms.begin(), s.rooms.end(), t.room) == s.rooms.end()) s.rooms.push_back(t.room);
    for (int i = 0; i < t.count; ++i) {
      Receptacle r;
      r.cls = t.cls;
      r.index = ++next_index[t.cls];
      r.room = t.room;
      r.openable = t.openable == Openable::always || (t.openable == Openable::random && rng.chance(1, 2));
      r.is_open = !r.openable;
      s.receptacles[r.id()] = r;
    }
  }
  return s;
}

std::vector<std::string> receptacle_ids(const WorldState& s) {
  std::vector<std::string> ids;
  for (const auto& [id, r] : s.receptacles) ids.push_back(id);
  std::sort(ids.begin(), ids.end(), entity_less);
  return ids;
}

void place(WorldState& s, const std::string& cls, int index, const std::string& receptacle_id) {
  Object o;
  o.cls = cls;
  o.index = index;
  s.objects[o.id()] = o;
  s.receptacles.at(receptacle_id).contents.push_back(o.id());
}

bool is_device(std::string_view cls) {
  return cls == "sinkbasin" || cls == "microwave" || cls == "fridge" || cls == "sink" || cls == "stove";
}

void add_distractors(WorldState& s, const Pool& pool, const std::string& target_class, Prng& rng,
                     const std::vector<std::string>& allowed) {
  Pool candidates;
  for (const auto& c : pool) {
    if (c != target_class) candidates.push_back(c);
  }
  rng.shuffle(candidates);
  const std::size_t n = std::min(candidates.size(), 3 + rng.below(6));
  for (std::size_t i = 0; i < n; ++i) {
    place(s, candidates[i], 1 + static_cast<int>(rng.below(3)), rng.pick(allowed));
  }
}

Checkpoint make(PredicateKind kind, const std::string& object, const std::string& recep,
                std::optional<Condition> condition, int count, double weight) {
  return Checkpoint{kind, object, recep, condition, count, weight};
}

std::optional<Condition> condition_for(TaskType type) {
  switch (type) {
    case TaskType::clean: return Condition::clean;
    case TaskType::heat: return Condition::hot;
    case TaskType::cool: return Condition::cold;
    case TaskType::examine: return Condition::examined_under_lamp;
    default: return std::nullopt;
  }
}

std::string household_phrase(TaskType type, const std::string& obj, const std::string& dest, Prng& rng) {
  const bool alt = rng.chance(1, 2);
  switch (type) {
    case TaskType::put: return "put some " + obj + " on " + dest + ".";
    case TaskType::clean:
      return alt ? "clean some " + obj + " and put it in " + dest + "." : "put a clean " + obj + " in " + dest + ".";
    case TaskType::heat:
      return alt ? "heat some " + obj + " and put it in " + dest + "." : "put a hot " + obj + " in " + dest + ".";
    case TaskType::cool:
      return alt ? "cool some " + obj + " and put it in " + dest + "." : "put a cool " + obj + " in " + dest + ".";
    case TaskType::examine:
      return alt ? "look at " + obj + " under the desklamp." : "examine the " + obj + " with the desklamp.";
    case TaskType::put_two:
      return alt ? "find two " + obj + " and put them in " + dest + "." : "put two " + obj + " in " + dest + ".";
  }
  return {};
}

GoalSpec household_goal(TaskType type, const std::string& obj, const std::string& dest) {
  GoalSpec g;
  g.flavor = RewardFlavor::binary;
  g.task_type = type;
  g.target_object_class = obj;
  g.target_receptacle = dest;
  g.success_threshold = kBinarySuccessThreshold;
  switch (type) {
    case TaskType::examine:
      g.checkpoints = {make(PredicateKind::has_condition, obj, "", Condition::examined_under_lamp, 1, 1.0)};
      break;
    case TaskType::put_two:
      g.checkpoints = {make(PredicateKind::in_receptacle, obj, dest, std::nullopt, 1, 0.5),
                       make(PredicateKind::in_receptacle, obj, dest, std::nullopt, 2, 0.5)};
      break;
    default: g.checkpoints = {make(PredicateKind::in_receptacle, obj, dest, condition_for(type), 1, 1.0)};
  }
  return g;
}

TaskSpec generate_household(TaskType type, Prng& rng) {
  TaskSpec t;
  const auto recipe = household_recipe(type, rng);
  t.initial_state = build_scene(*recipe.scene, EnvFlavor::household, rng);
  WorldState& s = t.initial_state;
  const std::string obj = rng.pick(recipe.targets);
  const std::string dest = rng.pick(recipe.destinations);

  const auto all = receptacle_ids(s);
  std::vector<std::string> sources;
  for (const auto& id : all) {
    if (s.receptacles.at(id).cls != dest) sources.push_back(id);
  }

  if (type == TaskType::examine) {
    std::vector<std::string> lamp_spots = {"desk 1", "desk 2", "sidetable 1"};
    place(s, "desklamp", 1, rng.pick(lamp_spots));
  }

  const int base = 1 + static_cast<int>(rng.below(3));
  if (type == TaskType::put_two) {
    auto shuffled = sources;
    rng.shuffle(shuffled);
    place(s, obj, base, shuffled[0]);
    place(s, obj, base + 1, shuffled[1]);
  } else {
    place(s, obj, base, rng.pick(sources));
  }
  add_distractors(s, *recipe.objects, obj, rng, all);

  t.instruction_text = "Your task is to: " + household_phrase(type, obj, dest, rng);
  t.goal = household_goal(type, obj, dest);
  return t;
}

TaskSpec generate_science(TaskType type, Prng& rng) {
  TaskSpec t;
  t.initial_state = build_scene(kLab, EnvFlavor::science, rng);
  WorldState& s = t.initial_state;
  s.rooms = kLabRooms;
  s.inventory_capacity = 3;
  s.agent_location = rng.pick(kLabRooms);

  const std::string obj = rng.pick(kLabObjects);
  std::vector<std::string> dests;
  for (const auto& rt : kLab) {
    if (!is_device(rt.cls) && std::find(dests.begin(), dests.end(), rt.cls) == dests.end()) dests.push_back(rt.cls);
  }
  const std::string dest = rng.pick(dests);

  std::vector<std::string> holders;
  std::vector<std::string> sources;
  for (const auto& id : receptacle_ids(s)) {
    const auto& r = s.receptacles.at(id);
    if (is_device(r.cls)) continue;
    holders.push_back(id);
    if (r.cls != dest) sources.push_back(id);
  }
  place(s, obj, 1 + static_cast<int>(rng.below(3)), rng.pick(sources));
  add_distractors(s, kLabObjects, obj, rng, holders);

  GoalSpec& g = t.goal;
  g.flavor = RewardFlavor::dense;
  g.task_type = type;
  g.target_object_class = obj;
  g.target_receptacle = dest;
  g.success_threshold = kDenseSuccessThreshold;
  const auto cond = condition_for(type);
  std::vector<Checkpoint> early = {make(PredicateKind::focused, obj, "", std::nullopt, 1, 0.0),
                                   make(PredicateKind::held, obj, "", std::nullopt, 1, 0.0)};
  if (cond) early.push_back(make(PredicateKind::has_condition, obj, "", cond, 1, 0.0));
  for (auto& c : early) c.weight = 0.6 / static_cast<double>(early.size());
  g.checkpoints = early;
  g.checkpoints.push_back(make(PredicateKind::in_receptacle, obj, dest, cond, 1, 0.4));

  std::string verb = "move";
  if (type == TaskType::heat) verb = "heat";
  if (type == TaskType::cool) verb = "cool";
  if (type == TaskType::clean) verb = "clean";
  if (type == TaskType::put) {
    t.instruction_text = "Your task is to move the " + obj + " to the " + dest + ". First, focus on the " + obj + ".";
  } else {
    t.instruction_text = "Your task is to " + verb + " the " + obj + " and move it to the " + dest +
                         ". First, focus on the " + obj + ".";
  }
  return t;
}

std::uint64_t mix_seed(std::uint64_t seed, TaskType type, RewardFlavor flavor) {
  const std::uint64_t salt = 1 + static_cast<std::uint64_t>(type) + 8 * static_cast<std::uint64_t>(flavor);
  return seed ^ (0x9E3779B97F4A7C15ULL * salt);
}

}  // namespace

std::size_t Prng::below(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::internal, "Prng::below(0)");
  const std::uint64_t bound = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return static_cast<std::size_t>(x % bound);
}

bool supports(TaskType type, RewardFlavor flavor) {
  return flavor == RewardFlavor::binary || (type != TaskType::examine && type != TaskType::put_two);
}

TaskSpec generate(std::uint64_t seed, TaskType type, RewardFlavor flavor) {
  if (!supports(type, flavor)) {
    throw Error(ErrorCode::unsupported, "UnsupportedTaskType: " + std::string(to_string(type)) +
                                            " is not available in the " + std::string(to_string(flavor)) +
                                            " flavor");
  }
  Prng rng(mix_seed(seed, type, flavor));
  TaskSpec t = flavor == RewardFlavor::binary ? generate_household(type, rng) : generate_science(type, rng);
  t.seed = seed;
  t.flavor = flavor;
  t.task_type = type;
  char id[96];
  std::snprintf(id, sizeof id, "%s-%s-%06llu", std::string(to_string(env_flavor_for(flavor))).c_str(),
                std::string(to_string(type)).c_str(), static_cast<unsigned long long>(seed));
  t.task_id = id;
  t.initial_state.validate();
  t.goal.validate();
  return t;
}

nlohmann::json to_json(const TaskSpec& task) {
  return nlohmann::json{{"schema_version", task.schema_version},
                        {"task_id", task.task_id},
                        {"seed", task.seed},
                        {"flavor", to_string(task.flavor)},
                        {"task_type", to_string(task.task_type)},
                        {"instruction_text", task.instruction_text},
                        {"prng", task.prng},
                        {"initial_state", task.initial_state},
                        {"goal", task.goal}};
}

TaskSpec task_from_json(const nlohmann::json& j) {
  TaskSpec t;
  try {
    t.schema_version = j.at("schema_version").get<int>();
    if (t.schema_version != kSchemaVersion) {
      throw Error(ErrorCode::invalid_argument, "unsupported task schema_version " + std::to_string(t.schema_version));
    }
    j.at("task_id").get_to(t.task_id);
    j.at("seed").get_to(t.seed);
    t.flavor = reward_flavor_from_string(j.at("flavor").get<std::string>());
    t.task_type = task_type_from_string(j.at("task_type").get<std::string>());
    j.at("instruction_text").get_to(t.instruction_text);
    j.at("prng").get_to(t.prng);
    j.at("initial_state").get_to(t.initial_state);
    j.at("goal").get_to(t.goal);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("malformed task: ") + e.what());
  }
  return t;
}

std::string serialize(const TaskSpec& task) { return to_json(task).dump(); }

}  // namespace reflact::taskgen
